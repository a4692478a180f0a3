import numpy as np
import pytest

from hotelcast.errors import KpiError
from hotelcast.forecasting import (
    PipelineConfig,
    fitted_values,
    holdout_mape,
    multi_step_forecast,
    prepare,
    rolling_forecast,
    rolling_scores,
    run_pipeline,
)
from hotelcast.lstm import LstmModel, LstmWeights, TrainingConfig
from hotelcast.series import KpiKind, KpiSeries, MonthIndex, make_windows
from hotelcast.synthetic import generate_dataset

JAN18 = MonthIndex(2018, 1)


def quick_config(**kw):
    training = TrainingConfig(lookback=kw.pop("lookback", 12), hidden_size=4, epochs=kw.pop("epochs", 40),
                              seed=1, warmup_epochs=0)
    return PipelineConfig(training=training, **kw)


def seasonal_series(n=85, kind=KpiKind.ADR, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    v = 100 + 10 * np.sin(2 * np.pi * t / 12) + 0.2 * t + rng.normal(0, noise, n)
    return KpiSeries("C", kind, JAN18, tuple(float(x) for x in v))


def probe_model(L=3, H=2, seed=0):
    """Random fixed weights: lets forecasting be checked without training."""
    rng = np.random.default_rng(seed)
    w = LstmWeights(*(rng.uniform(-1, 1, size=s) for s in LstmWeights.shapes(H)))
    return LstmModel(w, TrainingConfig(lookback=L, hidden_size=H))


# -- rolling / multi-step on a fixed model ------------------------------------


def test_rolling_uses_actual_windows():
    model = probe_model()
    x = np.linspace(0, 1, 20)
    got = rolling_forecast(model, x, range(16, 20))
    expected = [model.predict_next(x[t - 3 : t]) for t in range(16, 20)]
    assert got.tolist() == expected


def test_rolling_single_month_and_bounds():
    model = probe_model()
    x = np.linspace(0, 1, 10)
    assert len(rolling_forecast(model, x, range(9, 10))) == 1
    with pytest.raises(KpiError) as e:
        rolling_forecast(model, x, range(2, 5))
    assert e.value.code == "INSUFFICIENT_HISTORY"


def test_multi_step_lengths_and_first_step():
    model = probe_model()
    x = np.linspace(0, 1, 20)
    one = rolling_forecast(model, np.append(x, 0.0), range(20, 21))[0]
    for h in (3, 6, 12):
        out = multi_step_forecast(model, x, h)
        assert len(out) == h
        assert out[0] == one


def test_multi_step_feeds_back_predictions():
    model = probe_model()
    x = np.array([0.2, 0.4, 0.6, 0.8])
    y1 = model.predict_next(np.array([0.4, 0.6, 0.8]))
    y2 = model.predict_next(np.array([0.6, 0.8, y1]))
    assert multi_step_forecast(model, x, 2).tolist() == [y1, y2]


def test_multi_step_horizon_errors(caplog):
    model = probe_model()
    with pytest.raises(KpiError) as e:
        multi_step_forecast(model, np.ones(5), 0)
    assert e.value.code == "INVALID_HORIZON"
    with caplog.at_level("WARNING"):
        assert len(multi_step_forecast(model, np.ones(5), 2)) == 2
    assert "non-standard horizon" in caplog.text


def test_fitted_alignment():
    model = probe_model()
    x = np.linspace(0, 1, 12)
    samples = make_windows(x, 3)
    fit = fitted_values(model, samples)
    assert len(fit) == 9
    assert fit[0] == pytest.approx(model.predict_next(x[0:3]), abs=1e-14)


# -- full pipeline ------------------------------------------------------------


def test_pipeline_shapes_on_85_months():
    r = run_pipeline(seasonal_series(), quick_config())
    assert len(r.rolling) == 17 and len(r.test_actual) == 17
    assert r.rolling[0][0] == MonthIndex(2023, 9) and r.rolling[-1][0] == MonthIndex(2025, 1)
    assert len(r.fitted) == 68 - 12 and r.fitted[0][0] == MonthIndex(2019, 1)
    assert {h: len(v) for h, v in r.future.items()} == {3: 3, 6: 6, 12: 12}
    assert r.future[3][0][0] == MonthIndex(2025, 2)
    assert r.future[12][-1][0] == MonthIndex(2026, 1)
    assert r.future[3][0][1] == r.future[6][0][1] == r.future[12][0][1]


def test_pipeline_deterministic():
    a = run_pipeline(seasonal_series(noise=1.0), quick_config())
    b = run_pipeline(seasonal_series(noise=1.0), quick_config())
    assert a.to_csv() == b.to_csv()
    assert a.model.weights.equal(b.model.weights)


def test_no_leakage_from_test_months():
    s = seasonal_series(noise=1.0)
    values = list(s.values)
    values[70] *= 3.0
    values[80] = None
    perturbed = s.replace_values(tuple(values))
    cfg = quick_config()
    p1, p2 = prepare(s, cfg), prepare(perturbed, cfg)
    assert p1.scaler == p2.scaler
    assert np.array_equal(p1.train_clean, p2.train_clean)
    r1, r2 = run_pipeline(s, cfg), run_pipeline(perturbed, cfg)
    assert r1.model.weights.equal(r2.model.weights)
    assert r1.fitted == r2.fitted


def test_outliers_in_training_are_replaced():
    s = seasonal_series()
    values = list(s.values)
    values[30] = 400.0
    r = run_pipeline(s.replace_values(tuple(values)), quick_config())
    assert r.outlier_flags[30] and sum(r.outlier_flags) == 1


def test_short_series_rejected_at_split_stage():
    cfg = quick_config()
    for n in (12, 13, 15):
        with pytest.raises(KpiError) as e:
            run_pipeline(seasonal_series(n), cfg)
        assert e.value.code == "INSUFFICIENT_DATA"
        assert e.value.stage == "split/window"


def test_failure_stage_is_labelled():
    flat = KpiSeries("C", KpiKind.OCC, JAN18, (50.0,) * 40)
    with pytest.raises(KpiError) as e:
        run_pipeline(flat, quick_config())
    assert (e.value.stage, e.value.code) == ("scale", "DEGENERATE_SCALE")


def test_retrain_every_changes_later_predictions_only():
    s = seasonal_series(noise=1.0)
    base = run_pipeline(s, quick_config(epochs=20))
    re = run_pipeline(s, quick_config(epochs=20, retrain_every=5))
    assert re.rolling[:5] == base.rolling[:5]
    assert re.rolling[5:] != base.rolling[5:]


def test_forecast_csv_kinds():
    r = run_pipeline(seasonal_series(), quick_config(epochs=5))
    lines = r.to_csv().splitlines()
    assert lines[0] == "month,kind,value"
    kinds = [ln.split(",")[1] for ln in lines[1:]]
    assert kinds.count("actual") == 85 and kinds.count("rolling") == 17
    assert kinds.count("future3") == 3 and kinds.count("future12") == 12


def test_rolling_scores_and_holdout():
    r = run_pipeline(seasonal_series(), quick_config(epochs=5))
    actual, forecast = rolling_scores(r)
    assert actual.tolist() == list(seasonal_series().values[68:])
    assert len(forecast) == 17
    assert holdout_mape(seasonal_series(), quick_config(epochs=5)) >= 0


def test_synthetic_city_trains_accurately():
    occ = generate_dataset(seed=1)[0]
    cfg = PipelineConfig(training=TrainingConfig(hidden_size=8, epochs=300, seed=1))
    actual, forecast = rolling_scores(run_pipeline(occ, cfg))
    assert 100 * np.mean(np.abs(actual - forecast) / actual) < 10
