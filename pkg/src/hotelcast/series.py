"""Monthly KPI series: data model, cleaning, decomposition, scaling, windowing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import KpiError

PERIOD = 12


@dataclass(frozen=True, order=True)
class MonthIndex:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> "MonthIndex":
        """Parse ``YYYY-MM``."""
        parts = text.strip().split("-")
        if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
            raise ValueError(f"expected YYYY-MM, got {text!r}")
        return cls(int(parts[0]), int(parts[1]))

    @property
    def ordinal(self) -> int:
        return self.year * 12 + (self.month - 1)

    @classmethod
    def from_ordinal(cls, n: int) -> "MonthIndex":
        return cls(n // 12, n % 12 + 1)

    def __add__(self, months: int) -> "MonthIndex":
        return MonthIndex.from_ordinal(self.ordinal + int(months))

    def __sub__(self, other):
        if isinstance(other, MonthIndex):
            return self.ordinal - other.ordinal
        return MonthIndex.from_ordinal(self.ordinal - int(other))

    def succ(self) -> "MonthIndex":
        return self + 1

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


class KpiKind(str, Enum):
    OCC = "OCC"        # percent of rooms sold, (0, 100]
    ADR = "ADR"        # currency per sold room-night
    REVPAR = "REVPAR"  # currency per available room-night

    def check(self, value: float) -> bool:
        if not math.isfinite(value):
            return False
        if self is KpiKind.OCC:
            return 0.0 < value <= 100.0
        return value > 0.0


KPI_ORDER = (KpiKind.OCC, KpiKind.ADR, KpiKind.REVPAR)


@dataclass(frozen=True)
class KpiSeries:
    """One city's monthly values for one KPI; ``None`` marks a missing month."""

    city: str
    kind: KpiKind
    start: MonthIndex
    values: tuple[Optional[float], ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", KpiKind(self.kind))
        vals = tuple(None if v is None else float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise KpiError("EMPTY_SERIES", f"{self.city}/{self.kind.value} has no months")
        for i, v in enumerate(vals):
            if v is not None and not self.kind.check(v):
                raise KpiError(
                    "INVALID_VALUE",
                    f"{self.city}/{self.kind.value} {self.start + i}: {v!r} out of range",
                )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> MonthIndex:
        return self.start + (len(self.values) - 1)

    @property
    def months(self) -> list[MonthIndex]:
        return [self.start + i for i in range(len(self.values))]

    @property
    def n_missing(self) -> int:
        return sum(v is None for v in self.values)

    def to_array(self) -> np.ndarray:
        """Values as float64 with NaN in place of missing months."""
        return np.array([np.nan if v is None else v for v in self.values], dtype=float)

    def replace_values(self, values: Iterable[Optional[float]]) -> "KpiSeries":
        return KpiSeries(self.city, self.kind, self.start, tuple(values))

    def slice(self, lo: int, hi: int) -> "KpiSeries":
        return KpiSeries(self.city, self.kind, self.start + lo, self.values[lo:hi])


# --------------------------------------------------------------------------
# cleaning


def _interpolate(values: Sequence[Optional[float]]) -> list[float]:
    known = [i for i, v in enumerate(values) if v is not None]
    xs = np.asarray(known, dtype=float)
    ys = np.asarray([values[i] for i in known], dtype=float)
    out = []
    for i, v in enumerate(values):
        if v is not None:
            out.append(v)
        else:
            # np.interp holds the edge values constant outside [xs[0], xs[-1]]
            out.append(float(np.interp(i, xs, ys)))
    return out


def impute_missing(s: KpiSeries) -> KpiSeries:
    """Fill missing months: linear between present neighbours, nearest value at the edges."""
    present = len(s) - s.n_missing
    if present < 2:
        raise KpiError("UNIMPUTABLE", f"{s.city}/{s.kind.value}: {present} present value(s), need 2")
    if s.n_missing == 0:
        return s
    return s.replace_values(_interpolate(s.values))


def filter_outliers(s: KpiSeries, z_threshold: float = 3.0) -> tuple[KpiSeries, list[bool]]:
    """Replace values with ``|z| > z_threshold`` by interpolation of unflagged neighbours.

    The z-score uses the series mean and the sample (n-1) standard deviation.
    Returns the cleaned series and a per-month flag list marking replacements.
    """
    if z_threshold <= 0:
        raise ValueError("z_threshold must be positive")
    if s.n_missing:
        raise KpiError("NOT_IMPUTED", f"{s.city}/{s.kind.value} still has missing values")
    x = s.to_array()
    n = len(x)
    if n < 2:
        return s, [False] * n
    std = float(np.std(x, ddof=1))
    if std == 0.0:
        return s, [False] * n
    z = (x - x.mean()) / std
    flags = [bool(abs(v) > z_threshold) for v in z]
    if not any(flags):
        return s, flags
    masked = [None if f else float(v) for v, f in zip(x, flags)]
    return s.replace_values(_interpolate(masked)), flags


# --------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class Decomposition:
    """Classical additive decomposition. ``seasonal`` is indexed by calendar month (Jan=0)."""

    start: MonthIndex
    trend: tuple[Optional[float], ...]
    seasonal: tuple[float, ...]
    residual: tuple[Optional[float], ...]

    def seasonal_at(self, i: int) -> float:
        return self.seasonal[(self.start + i).month - 1]


def decompose(s: KpiSeries) -> Decomposition:
    """Additive decomposition with a centred 2x12 moving-average trend.

    Trend is undefined for the first and last six months. The seasonal
    profile is the per-calendar-month mean of the detrended values,
    recentred to sum to zero.
    """
    if s.n_missing:
        raise KpiError("NOT_IMPUTED", f"{s.city}/{s.kind.value} still has missing values")
    n = len(s)
    if n < 2 * PERIOD:
        raise KpiError("SERIES_TOO_SHORT", f"decomposition needs >= 24 months, got {n}")
    x = s.to_array()
    half = PERIOD // 2
    weights = np.full(PERIOD + 1, 1.0 / PERIOD)
    weights[0] = weights[-1] = 0.5 / PERIOD
    trend: list[Optional[float]] = [None] * n
    for t in range(half, n - half):
        trend[t] = float(np.dot(weights, x[t - half : t + half + 1]))

    month_of = [(s.start + t).month - 1 for t in range(n)]
    buckets: list[list[float]] = [[] for _ in range(PERIOD)]
    for t in range(half, n - half):
        buckets[month_of[t]].append(x[t] - trend[t])
    raw = np.array([np.mean(b) for b in buckets])
    seasonal = raw - raw.mean()

    residual: list[Optional[float]] = [None] * n
    for t in range(half, n - half):
        residual[t] = float(x[t] - trend[t] - seasonal[month_of[t]])
    return Decomposition(s.start, tuple(trend), tuple(float(v) for v in seasonal), tuple(residual))


# --------------------------------------------------------------------------
# scaling


class ScaleMethod(str, Enum):
    MINMAX = "minmax"
    ZSCORE = "zscore"


@dataclass(frozen=True)
class ScalerParams:
    """MINMAX: a=min, b=max. ZSCORE: a=mean, b=population std."""

    method: ScaleMethod
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "method", ScaleMethod(self.method))
        if self.method is ScaleMethod.MINMAX and not self.b > self.a:
            raise KpiError("DEGENERATE_SCALE", f"min-max needs max > min, got {self.a}, {self.b}")
        if self.method is ScaleMethod.ZSCORE and not self.b > 0:
            raise KpiError("DEGENERATE_SCALE", f"z-score needs std > 0, got {self.b}")

    @property
    def _shift_span(self) -> tuple[float, float]:
        if self.method is ScaleMethod.MINMAX:
            return self.a, self.b - self.a
        return self.a, self.b


def fit_scaler(values, method: ScaleMethod | str = ScaleMethod.MINMAX) -> ScalerParams:
    x = np.asarray(values, dtype=float)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise KpiError("DEGENERATE_SCALE", "scaler needs finite, non-empty input")
    method = ScaleMethod(method)
    if method is ScaleMethod.MINMAX:
        return ScalerParams(method, float(x.min()), float(x.max()))
    return ScalerParams(method, float(x.mean()), float(x.std()))


def apply_scaler(values, p: ScalerParams) -> np.ndarray:
    shift, span = p._shift_span
    return (np.asarray(values, dtype=float) - shift) / span


def invert_scaler(values, p: ScalerParams) -> np.ndarray:
    shift, span = p._shift_span
    return np.asarray(values, dtype=float) * span + shift


# --------------------------------------------------------------------------
# split and windows


def split_point(n: int, train_fraction: float) -> int:
    if not 0.0 < train_fraction < 1.0:
        raise KpiError("SPLIT_EMPTY", f"train_fraction must lie in (0, 1), got {train_fraction}")
    # tolerance absorbs binary representation error, e.g. 0.29 * 100
    n_train = math.floor(n * train_fraction + 1e-9)
    if n_train < 1 or n - n_train < 1:
        raise KpiError("SPLIT_EMPTY", f"{n} months at {train_fraction} leaves an empty side")
    return n_train


def chronological_split(s: KpiSeries, train_fraction: float = 0.8) -> tuple[KpiSeries, KpiSeries]:
    n_train = split_point(len(s), train_fraction)
    return s.slice(0, n_train), s.slice(n_train, len(s))


@dataclass(frozen=True)
class WindowedSamples:
    lookback: int
    inputs: np.ndarray   # (n, lookback)
    targets: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.targets)

    def head(self, n: int) -> "WindowedSamples":
        return WindowedSamples(self.lookback, self.inputs[:n], self.targets[:n])

    def tail_from(self, n: int) -> "WindowedSamples":
        return WindowedSamples(self.lookback, self.inputs[n:], self.targets[n:])


def make_windows(values, lookback: int) -> WindowedSamples:
    x = np.asarray(values, dtype=float)
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    if len(x) <= lookback:
        raise KpiError("INSUFFICIENT_HISTORY", f"{len(x)} values cannot fill a lookback of {lookback}")
    n = len(x) - lookback
    idx = np.arange(lookback)[None, :] + np.arange(n)[:, None]
    return WindowedSamples(lookback, x[idx], x[lookback:].copy())


# --------------------------------------------------------------------------
# cross-KPI accounting check


@dataclass(frozen=True)
class ConsistencyRow:
    month: MonthIndex
    revpar: Optional[float]
    implied: Optional[float]
    rel_error: Optional[float]
    flagged: bool


def revpar_consistency(
    occ: KpiSeries, adr: KpiSeries, revpar: KpiSeries, rel_tol: float = 0.01
) -> list[ConsistencyRow]:
    """Compare RevPAR against (OCC/100)*ADR month by month.

    Months where any of the three values is missing are reported unflagged
    with ``rel_error=None``.
    """
    spans = {(s.start, len(s)) for s in (occ, adr, revpar)}
    if len(spans) != 1 or len({occ.city, adr.city, revpar.city}) != 1:
        raise KpiError("ALIGNMENT_ERROR", "OCC, ADR and REVPAR must cover the same city and months")
    rows = []
    for i, (o, a, r) in enumerate(zip(occ.values, adr.values, revpar.values)):
        month = occ.start + i
        if o is None or a is None or r is None:
            rows.append(ConsistencyRow(month, r, None, None, False))
            continue
        implied = (o / 100.0) * a
        rel = abs(r - implied) / r
        rows.append(ConsistencyRow(month, r, implied, rel, rel > rel_tol))
    return rows
