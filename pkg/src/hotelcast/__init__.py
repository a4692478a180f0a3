"""LSTM forecasting of hotel KPIs (occupancy, ADR, RevPAR) for monthly city-level series."""

from .errors import KpiError
from .series import KpiKind, KpiSeries, MonthIndex

__all__ = ["KpiError", "KpiKind", "KpiSeries", "MonthIndex"]
__version__ = "0.1.0"
