"""Per-series pipeline: clean, split, scale, train, then fitted/rolling/multi-step forecasts."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import lstm
from .errors import KpiError
from .evaluation import mape
from .lstm import LstmModel, TrainingConfig, TrainingHistory
from .series import (
    KpiKind,
    KpiSeries,
    MonthIndex,
    ScaleMethod,
    ScalerParams,
    WindowedSamples,
    apply_scaler,
    filter_outliers,
    fit_scaler,
    impute_missing,
    invert_scaler,
    make_windows,
    split_point,
)

log = logging.getLogger(__name__)

STANDARD_HORIZONS = (3, 6, 12)


@dataclass(frozen=True)
class PipelineConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    scaling: ScaleMethod = ScaleMethod.MINMAX
    z_threshold: float = 3.0
    train_fraction: float = 0.8
    horizons: tuple[int, ...] = STANDARD_HORIZONS
    retrain_every: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "scaling", ScaleMethod(self.scaling))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if self.retrain_every is not None and self.retrain_every < 1:
            raise ValueError("retrain_every must be >= 1")


Point = tuple[MonthIndex, float]


@dataclass
class ForecastResult:
    city: str
    kind: KpiKind
    actual: list[Point]
    fitted: list[Point]
    rolling: list[Point]
    test_actual: list[Point]
    future: dict[int, list[Point]]
    scaler: ScalerParams
    config: PipelineConfig
    model: LstmModel
    history: TrainingHistory
    outlier_flags: list[bool]
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        """Plot data: ``month,kind,value`` with kind in actual/fitted/rolling/future<h>."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "kind", "value"])
        blocks = [("actual", self.actual), ("fitted", self.fitted), ("rolling", self.rolling)]
        blocks += [(f"future{h}", pts) for h, pts in sorted(self.future.items())]
        for kind, pts in blocks:
            for month, value in pts:
                w.writerow([str(month), kind, repr(float(value))])
        return buf.getvalue()


def _inverse(values, scaler: ScalerParams | None) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values if scaler is None else invert_scaler(values, scaler)


def fitted_values(model: LstmModel, samples: WindowedSamples, scaler: ScalerParams | None = None) -> np.ndarray:
    """In-sample one-step predictions; value i targets month start + lookback + i."""
    return _inverse(model.predict(samples.inputs), scaler)


def rolling_forecast(
    model: LstmModel,
    scaled_series,
    test_range: range,
    scaler: ScalerParams | None = None,
    retrain_every: int | None = None,
) -> np.ndarray:
    """Walk forward over ``test_range``, feeding the actual preceding observations.

    The model is never refit unless ``retrain_every=k`` is given, in which
    case it is retrained on every observation before each k-th test month.
    """
    x = np.asarray(scaled_series, dtype=float)
    L = model.lookback
    if len(test_range) == 0:
        return np.empty(0)
    if test_range[0] - L < 0 or test_range[-1] >= len(x):
        raise KpiError("INSUFFICIENT_HISTORY", f"test months {test_range} need {L} prior observations")
    preds = []
    for j, t in enumerate(test_range):
        if retrain_every and j > 0 and j % retrain_every == 0:
            model, _ = lstm.train(make_windows(x[:t], L), model.config)
        preds.append(model.predict_next(x[t - L : t]))
    return _inverse(preds, scaler)


def multi_step_forecast(model: LstmModel, scaled_series, horizon: int, scaler: ScalerParams | None = None) -> np.ndarray:
    """Recursive forecast: each prediction is appended to the window for the next step."""
    if horizon < 1:
        raise KpiError("INVALID_HORIZON", f"horizon must be >= 1, got {horizon}")
    if horizon not in STANDARD_HORIZONS:
        log.warning("non-standard horizon %d (standard: %s)", horizon, STANDARD_HORIZONS)
    x = np.asarray(scaled_series, dtype=float)
    L = model.lookback
    if len(x) < L:
        raise KpiError("INSUFFICIENT_HISTORY", f"{len(x)} observations, lookback {L}")
    window = list(x[-L:])
    out = []
    for _ in range(horizon):
        y = model.predict_next(np.array(window))
        out.append(y)
        window = window[1:] + [y]
    return _inverse(out, scaler)


# --------------------------------------------------------------------------


@dataclass
class PreparedSeries:
    """Outputs of the cleaning/split/scale stages, shared by the pipeline and HPO."""

    series: KpiSeries
    n_train: int
    train_clean: np.ndarray
    test_clean: np.ndarray
    outlier_flags: list[bool]
    scaler: ScalerParams

    @property
    def scaled(self) -> np.ndarray:
        return apply_scaler(np.concatenate([self.train_clean, self.test_clean]), self.scaler)

    @property
    def scaled_train(self) -> np.ndarray:
        return apply_scaler(self.train_clean, self.scaler)


def _stage(name: str):
    def wrap(fn):
        def inner(*args, **kw):
            try:
                return fn(*args, **kw)
            except KpiError as e:
                if e.stage:
                    raise
                raise e.with_stage(name) from e
        return inner
    return wrap


def prepare(series: KpiSeries, config: PipelineConfig) -> PreparedSeries:
    """Split first, then clean and scale using the training prefix only.

    Test months are imputed (so every test month has an actual) but never
    outlier-filtered, and they never influence the training values.
    """
    L = config.training.lookback
    n = len(series)

    @_stage("split/window")
    def split():
        if n < L + 2:
            raise KpiError("INSUFFICIENT_DATA", f"{n} months, need at least lookback + 2 = {L + 2}")
        n_train = split_point(n, config.train_fraction)
        if n_train <= L:
            raise KpiError("INSUFFICIENT_DATA", f"{n_train} training months cannot fill lookback {L}")
        return n_train

    n_train = split()

    @_stage("clean")
    def clean():
        train, flags = filter_outliers(impute_missing(series.slice(0, n_train)), config.z_threshold)
        test = impute_missing(series).to_array()[n_train:]
        return train.to_array(), test, flags

    train_clean, test_clean, flags = clean()
    scaler = _stage("scale")(fit_scaler)(train_clean, config.scaling)
    return PreparedSeries(series, n_train, train_clean, test_clean, flags, scaler)


def _range_warnings(kind: KpiKind, label: str, points: list[Point]) -> list[str]:
    out = []
    for month, v in points:
        if not kind.check(v):
            out.append(f"{label} {month}: {v:.4g} outside the valid {kind.value} range")
    return out


def run_pipeline(series: KpiSeries, config: PipelineConfig | None = None) -> ForecastResult:
    config = config or PipelineConfig()
    prep = prepare(series, config)
    L = config.training.lookback
    samples = _stage("split/window")(make_windows)(prep.scaled_train, L)
    model, history = _stage("train")(lstm.train)(samples, config.training)

    @_stage("forecast")
    def forecast():
        scaled = prep.scaled
        fitted = fitted_values(model, samples, prep.scaler)
        rolling = rolling_forecast(model, scaled, range(prep.n_train, len(scaled)), prep.scaler,
                                   config.retrain_every)
        future = {h: multi_step_forecast(model, scaled, h, prep.scaler) for h in config.horizons}
        return fitted, rolling, future

    fitted, rolling, future = forecast()
    start = series.start
    end = series.end
    result = ForecastResult(
        city=series.city,
        kind=series.kind,
        actual=[(start + i, v) for i, v in enumerate(series.values) if v is not None],
        fitted=[(start + L + i, float(v)) for i, v in enumerate(fitted)],
        rolling=[(start + prep.n_train + i, float(v)) for i, v in enumerate(rolling)],
        test_actual=[(start + prep.n_train + i, float(v)) for i, v in enumerate(prep.test_clean)],
        future={h: [(end + 1 + i, float(v)) for i, v in enumerate(vals)] for h, vals in future.items()},
        scaler=prep.scaler,
        config=config,
        model=model,
        history=history,
        outlier_flags=prep.outlier_flags,
    )
    result.warnings += _range_warnings(series.kind, "fitted", result.fitted)
    result.warnings += _range_warnings(series.kind, "rolling", result.rolling)
    for h, pts in result.future.items():
        result.warnings += _range_warnings(series.kind, f"future{h}", pts)
    if result.warnings:
        log.warning("%s/%s: %d prediction(s) out of range, first: %s",
                    series.city, series.kind.value, len(result.warnings), result.warnings[0])
    return result


def rolling_scores(result: ForecastResult) -> tuple[np.ndarray, np.ndarray]:
    """(actual, forecast) arrays over the test months, ready for scoring."""
    actual = np.array([v for _, v in result.test_actual])
    forecast = np.array([v for _, v in result.rolling])
    return actual, forecast


def holdout_mape(series: KpiSeries, config: PipelineConfig) -> float:
    """MAPE on the early-stopping holdout inside the training split; the test split is never touched."""
    if config.training.val_fraction <= 0:
        raise ValueError("holdout scoring needs val_fraction > 0")
    prep = prepare(series, config)
    samples = _stage("split/window")(make_windows)(prep.scaled_train, config.training.lookback)
    model, _ = _stage("train")(lstm.train)(samples, config.training)
    _, val = lstm.split_validation(samples, config.training.val_fraction)
    pred = invert_scaler(model.predict(val.inputs), prep.scaler)
    actual = invert_scaler(val.targets, prep.scaler)
    return mape(actual, pred)


def with_training(config: PipelineConfig, **changes) -> PipelineConfig:
    return replace(config, training=replace(config.training, **changes))
