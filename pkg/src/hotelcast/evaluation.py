"""Forecast accuracy metrics, MAPE accuracy bands and the cross-city report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import KpiError
from .series import KPI_ORDER, KpiKind


def _pair(actual, forecast) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).ravel()
    f = np.asarray(forecast, dtype=float).ravel()
    if a.shape != f.shape:
        raise KpiError("SHAPE_ERROR", f"actual has {a.size} values, forecast {f.size}")
    if a.size == 0:
        raise KpiError("EMPTY_INPUT", "no values to score")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(f))):
        raise KpiError("NON_FINITE", "metrics need finite values")
    return a, f


def mse(actual, forecast) -> float:
    a, f = _pair(actual, forecast)
    return float(np.mean((a - f) ** 2))


def mae(actual, forecast) -> float:
    a, f = _pair(actual, forecast)
    return float(np.mean(np.abs(a - f)))


def mape(actual, forecast) -> float:
    """Mean absolute percentage error in percent. Every actual must be > 0."""
    a, f = _pair(actual, forecast)
    if np.any(a <= 0):
        raise KpiError("MAPE_UNDEFINED", "MAPE needs strictly positive actual values")
    return float(100.0 * np.mean(np.abs(a - f) / a))


class AccuracyCategory(str, Enum):
    HIGHLY_ACCURATE = "HIGHLY_ACCURATE"
    GOOD = "GOOD"
    REASONABLE = "REASONABLE"
    INACCURATE = "INACCURATE"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def rank(self) -> int:
        return list(AccuracyCategory).index(self)


_LABELS = {
    AccuracyCategory.HIGHLY_ACCURATE: "Highly accurate forecasting",
    AccuracyCategory.GOOD: "Good forecasting",
    AccuracyCategory.REASONABLE: "Reasonable forecasting",
    AccuracyCategory.INACCURATE: "Inaccurate forecasting",
}


def categorize_mape(value: float) -> AccuracyCategory:
    """Lewis bands: [0,10) highly accurate, [10,20) good, [20,50] reasonable, above 50 inaccurate."""
    if math.isnan(value) or value < 0:
        raise KpiError("INVALID_MAPE", f"MAPE must be non-negative, got {value}")
    if value < 10:
        return AccuracyCategory.HIGHLY_ACCURATE
    if value < 20:
        return AccuracyCategory.GOOD
    if value <= 50:
        return AccuracyCategory.REASONABLE
    return AccuracyCategory.INACCURATE


@dataclass(frozen=True)
class EvalMetrics:
    mse: float
    mape: float
    mae: Optional[float] = None  # None only for rows transcribed from sources that omit it

    @classmethod
    def compute(cls, actual, forecast) -> "EvalMetrics":
        return cls(mse=mse(actual, forecast), mape=mape(actual, forecast), mae=mae(actual, forecast))


@dataclass(frozen=True)
class ReportRow:
    city: str
    kpi: KpiKind
    metrics: EvalMetrics
    category: AccuracyCategory

    @classmethod
    def of(cls, city: str, kpi: KpiKind | str, metrics: EvalMetrics) -> "ReportRow":
        return cls(city, KpiKind(kpi), metrics, categorize_mape(metrics.mape))


CSV_COLUMNS = ("city", "kpi", "mse", "mae", "mape", "category")


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]

    def __post_init__(self):
        keys = [(r.city, r.kpi) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (city, kpi) rows in report")

    @classmethod
    def from_rows(cls, rows: Sequence[ReportRow], city_order: Sequence[str] | None = None) -> "EvalReport":
        cities = list(city_order) if city_order else []
        for r in rows:
            if r.city not in cities:
                cities.append(r.city)
        ordered = sorted(rows, key=lambda r: (cities.index(r.city), KPI_ORDER.index(r.kpi)))
        return cls(tuple(ordered))

    @property
    def cities(self) -> list[str]:
        return list(dict.fromkeys(r.city for r in self.rows))

    def get(self, city: str, kpi: KpiKind | str) -> ReportRow:
        kpi = KpiKind(kpi)
        for r in self.rows:
            if r.city == city and r.kpi is kpi:
                return r
        raise KeyError((city, kpi))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            m = r.metrics
            w.writerow([r.city, r.kpi.value, repr(m.mse), "" if m.mae is None else repr(m.mae),
                        repr(m.mape), r.category.value])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"report header must be {','.join(CSV_COLUMNS)}")
        rows = []
        for rec in reader:
            metrics = EvalMetrics(
                mse=float(rec["mse"]),
                mape=float(rec["mape"]),
                mae=float(rec["mae"]) if rec["mae"] else None,
            )
            row = ReportRow.of(rec["city"], rec["kpi"], metrics)
            if row.category.value != rec["category"]:
                raise ValueError(f"{rec['city']}/{rec['kpi']}: category does not match MAPE")
            rows.append(row)
        return cls(tuple(rows))

    def render(self) -> str:
        """Plain-text table: one line per city with MSE and MAPE for each KPI, then accuracy classes."""
        names = {KpiKind.OCC: "OCC", KpiKind.ADR: "ADR", KpiKind.REVPAR: "RevPAR"}
        width = max([len("City")] + [len(c) for c in self.cities]) + 2
        head1 = "City".ljust(width) + "".join(names[k].ljust(20) for k in KPI_ORDER)
        head2 = " " * width + "".join(f"{'MSE':<10}{'MAPE':<10}" for _ in KPI_ORDER)
        lines = [head1.rstrip(), head2.rstrip()]
        for city in self.cities:
            cells = []
            for k in KPI_ORDER:
                try:
                    m = self.get(city, k).metrics
                    cells.append(f"{m.mse:<10.2f}{m.mape:.2f}%".ljust(20))
                except KeyError:
                    cells.append(f"{'-':<10}{'-':<10}")
            lines.append((city.ljust(width) + "".join(cells)).rstrip())
        lines.append("")
        lines.append("MAPE accuracy class (<10 highly accurate, 10-20 good, 20-50 reasonable, >50 inaccurate)")
        for r in self.rows:
            lines.append(f"{r.city.ljust(width)}{names[r.kpi]:<8}{r.metrics.mape:>7.2f}%  {r.category.label}")
        return "\n".join(lines) + "\n"


def build_report(
    results: Mapping[tuple[str, KpiKind | str], tuple[Sequence[float], Sequence[float]]],
    city_order: Sequence[str] | None = None,
) -> EvalReport:
    """Score each (city, kpi) -> (actual, forecast) pair and assemble the report."""
    if not results:
        raise KpiError("EMPTY_INPUT", "report needs at least one (city, kpi) pair")
    rows = []
    for (city, kpi), (actual, forecast) in results.items():
        try:
            metrics = EvalMetrics.compute(actual, forecast)
        except KpiError as e:
            raise KpiError(e.code, f"{city}/{KpiKind(kpi).value}: {e.message}", e.stage) from e
        rows.append(ReportRow.of(city, kpi, metrics))
    return EvalReport.from_rows(rows, city_order)
