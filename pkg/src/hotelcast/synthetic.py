"""Synthetic five-city hotel KPI data with seasonality, trend and a pandemic-style break.

OCC and ADR are generated independently from a city profile; RevPAR is
derived as (OCC/100)*ADR so the accounting identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import KpiError
from .series import KpiKind, KpiSeries, MonthIndex

DATA_START = MonthIndex(2018, 1)
DATA_MONTHS = 85  # Jan 2018 .. Jan 2025
SHOCK_START = MonthIndex(2020, 3)
COLLAPSE_MONTHS = 3
RECOVERY_STEEPNESS = 10.0


@dataclass(frozen=True)
class CityProfile:
    name: str
    base_occ: float            # percent
    base_adr: float            # currency
    occ_seasonal_amp: float    # percentage points
    adr_seasonal_amp: float    # currency
    annual_trend: float        # fractional growth per year
    shock_start: MonthIndex
    occ_shock_floor: float     # trough as a fraction of the unshocked level
    adr_shock_floor: float
    recovery_months: int
    noise_sigma: float         # std of multiplicative Gaussian noise
    seed: int = 0
    event_month: int | None = None  # calendar month with a recurring demand spike
    event_boost: float = 0.0        # fractional uplift in that month

    def __post_init__(self):
        if not (self.base_occ > 0 and self.base_adr > 0):
            raise ValueError(f"{self.name}: base values must be positive")
        for name in ("occ_shock_floor", "adr_shock_floor"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{self.name}: {name} must lie in (0, 1]")
        if self.recovery_months < 1:
            raise ValueError(f"{self.name}: recovery_months must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError(f"{self.name}: noise_sigma must be non-negative")
        if self.event_month is not None and not 1 <= self.event_month <= 12:
            raise ValueError(f"{self.name}: event_month must be a calendar month")


def shock_multiplier(months_since_start: np.ndarray, floor: float, recovery_months: int) -> np.ndarray:
    """1 before the shock, linear collapse to ``floor`` over three months, logistic recovery.

    The logistic is rescaled so it starts exactly at the floor and reaches
    exactly 1 after ``recovery_months``.
    """
    d = np.asarray(months_since_start, dtype=float)
    out = np.ones_like(d)
    collapse = (d >= 0) & (d < COLLAPSE_MONTHS)
    out[collapse] = 1.0 - (1.0 - floor) * (d[collapse] + 1.0) / COLLAPSE_MONTHS
    rec = d >= COLLAPSE_MONTHS
    u = np.clip((d[rec] - (COLLAPSE_MONTHS - 1)) / recovery_months, 0.0, 1.0)
    k = RECOVERY_STEEPNESS

    def logistic(v):
        return 1.0 / (1.0 + np.exp(-k * (v - 0.5)))

    lo, hi = logistic(0.0), logistic(1.0)
    out[rec] = floor + (1.0 - floor) * (logistic(u) - lo) / (hi - lo)
    return out


def generate_city(
    profile: CityProfile,
    start: MonthIndex = DATA_START,
    n_months: int = DATA_MONTHS,
    seed: int | None = None,
) -> tuple[KpiSeries, KpiSeries, KpiSeries]:
    """Return (OCC, ADR, REVPAR) series for one city."""
    if n_months < 24:
        raise KpiError("SERIES_TOO_SHORT", f"need at least 24 months, got {n_months}")
    rng = np.random.default_rng(profile.seed if seed is None else seed)
    t = np.arange(n_months, dtype=float)
    growth = (1.0 + profile.annual_trend) ** (t / 12.0)
    season = np.sin(2.0 * np.pi * t / 12.0)
    d = t - (profile.shock_start - start)

    event = np.ones(n_months)
    if profile.event_month is not None:
        cal = np.array([(start + i).month for i in range(n_months)])
        event[cal == profile.event_month] += profile.event_boost

    occ_noise = rng.normal(0.0, profile.noise_sigma, n_months)
    adr_noise = rng.normal(0.0, profile.noise_sigma, n_months)

    occ = (profile.base_occ * growth + profile.occ_seasonal_amp * season) * event
    occ = occ * shock_multiplier(d, profile.occ_shock_floor, profile.recovery_months) * (1.0 + occ_noise)
    occ = np.clip(occ, 1.0, 100.0)

    adr = (profile.base_adr * growth + profile.adr_seasonal_amp * season) * event
    adr = adr * shock_multiplier(d, profile.adr_shock_floor, profile.recovery_months) * (1.0 + adr_noise)

    revpar = (occ / 100.0) * adr
    return tuple(
        KpiSeries(profile.name, kind, start, tuple(float(v) for v in vals))
        for kind, vals in ((KpiKind.OCC, occ), (KpiKind.ADR, adr), (KpiKind.REVPAR, revpar))
    )


def default_archetypes(seed: int = 0) -> list[CityProfile]:
    """Five city archetypes; profile ``i`` gets seed ``seed + i``.

    Troughs are set so that ADR and RevPAR drops land near the narratives
    for each city (e.g. Amsterdam ADR about -45% and RevPAR about -82%,
    Bangkok and Dubai occupancy troughs in the high teens).
    """
    profiles = [
        # domestic demand, shallowest shock, steadiest series
        CityProfile("Manchester", 77.0, 95.0, 3.0, 6.0, 0.01, SHOCK_START,
                    occ_shock_floor=0.45, adr_shock_floor=0.74, recovery_months=26,
                    noise_sigma=0.005),
        # premium European hub, deepest RevPAR collapse, slow recovery
        CityProfile("Amsterdam", 82.0, 165.0, 5.0, 12.0, 0.0, SHOCK_START,
                    occ_shock_floor=0.33, adr_shock_floor=0.55, recovery_months=40,
                    noise_sigma=0.01),
        # luxury and events, deep shock, fast recovery
        CityProfile("Dubai", 80.0, 152.0, 6.0, 20.0, 0.015, SHOCK_START,
                    occ_shock_floor=0.22, adr_shock_floor=0.67, recovery_months=24,
                    noise_sigma=0.015, event_month=12, event_boost=0.05),
        # tourism-dependent, high seasonality, slow recovery
        CityProfile("Bangkok", 78.0, 98.0, 6.0, 10.0, 0.005, SHOCK_START,
                    occ_shock_floor=0.22, adr_shock_floor=0.67, recovery_months=44,
                    noise_sigma=0.02),
        # price-sensitive emerging market, strong growth
        CityProfile("Mumbai", 77.0, 122.0, 3.0, 8.0, 0.02, SHOCK_START,
                    occ_shock_floor=0.51, adr_shock_floor=0.47, recovery_months=30,
                    noise_sigma=0.01),
    ]
    return [replace(p, seed=seed + i) for i, p in enumerate(profiles)]


def generate_dataset(
    profiles: list[CityProfile] | None = None,
    start: MonthIndex = DATA_START,
    n_months: int = DATA_MONTHS,
    seed: int = 0,
    noise_sigma: float | None = None,
) -> list[KpiSeries]:
    """All series for the given profiles (defaults to the five archetypes), city-major, KPI order OCC/ADR/REVPAR."""
    profiles = default_archetypes(seed) if profiles is None else profiles
    out: list[KpiSeries] = []
    for p in profiles:
        if noise_sigma is not None:
            p = replace(p, noise_sigma=noise_sigma)
        out.extend(generate_city(p, start, n_months))
    return out


def trough(values, start: MonthIndex, window: tuple[MonthIndex, MonthIndex]) -> float:
    lo, hi = (m - start for m in window)
    return float(np.min(np.asarray(values, dtype=float)[max(lo, 0) : hi + 1]))

