import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotelcast.errors import KpiError
from hotelcast.series import (
    KpiKind,
    KpiSeries,
    MonthIndex,
    ScaleMethod,
    ScalerParams,
    apply_scaler,
    chronological_split,
    decompose,
    filter_outliers,
    fit_scaler,
    impute_missing,
    invert_scaler,
    make_windows,
    revpar_consistency,
)

JAN18 = MonthIndex(2018, 1)


def adr(values, start=JAN18, city="X"):
    return KpiSeries(city, KpiKind.ADR, start, tuple(values))


# -- MonthIndex / KpiSeries ------------------------------------------------


def test_month_successor_wraps_december():
    assert MonthIndex(2019, 12).succ() == MonthIndex(2020, 1)
    assert MonthIndex(2018, 1) + 85 - 1 == MonthIndex(2025, 1)
    assert MonthIndex(2020, 3) - MonthIndex(2018, 1) == 26


def test_month_ordering_and_parse():
    assert MonthIndex(2018, 12) < MonthIndex(2019, 1)
    assert MonthIndex.parse("2023-09") == MonthIndex(2023, 9)
    assert str(MonthIndex(2023, 9)) == "2023-09"
    with pytest.raises(ValueError):
        MonthIndex(2020, 13)
    with pytest.raises(ValueError):
        MonthIndex.parse("2020/01")


@pytest.mark.parametrize("kind,bad", [(KpiKind.OCC, 0.0), (KpiKind.OCC, 100.5), (KpiKind.ADR, -1.0),
                                      (KpiKind.REVPAR, float("nan"))])
def test_series_rejects_out_of_range_values(kind, bad):
    with pytest.raises(KpiError) as e:
        KpiSeries("X", kind, JAN18, (50.0, bad))
    assert e.value.code == "INVALID_VALUE"


def test_series_requires_a_month():
    with pytest.raises(KpiError):
        KpiSeries("X", KpiKind.OCC, JAN18, ())


# -- imputation -------------------------------------------------------------


def test_impute_interior_midpoint():
    assert impute_missing(adr([10, None, 30])).values == (10.0, 20.0, 30.0)


def test_impute_leading_edge_uses_nearest():
    assert impute_missing(adr([None, 5, 7])).values == (5.0, 5.0, 7.0)


def test_impute_trailing_edge_and_long_gap():
    assert impute_missing(adr([2, None, None, 8, None])).values == (2.0, 4.0, 6.0, 8.0, 8.0)


def test_impute_identity_without_gaps():
    s = adr([1, 2, 3])
    assert impute_missing(s) == s


def test_impute_needs_two_values():
    with pytest.raises(KpiError) as e:
        impute_missing(adr([None, 4, None]))
    assert e.value.code == "UNIMPUTABLE"


present = st.floats(min_value=1.0, max_value=500.0, allow_nan=False)


@given(st.lists(st.one_of(st.none(), present), min_size=2, max_size=40).filter(
    lambda v: sum(x is not None for x in v) >= 2))
def test_impute_idempotent_and_keeps_present_values(values):
    s = adr(values)
    once = impute_missing(s)
    assert impute_missing(once) == once
    assert once.n_missing == 0
    for v, w in zip(values, once.values):
        if v is not None:
            assert v == w


# -- outlier filtering ------------------------------------------------------


def test_outlier_replaced_by_neighbours():
    cleaned, flags = filter_outliers(adr([10, 10, 10, 100, 10, 10, 10]), 2.0)
    assert flags == [False, False, False, True, False, False, False]
    assert cleaned.values == (10.0,) * 7


def test_outlier_zscore_value():
    # sample-std z-score of the spike, computed by hand
    x = [10, 10, 10, 100, 10, 10, 10]
    mean = sum(x) / 7
    std = math.sqrt(sum((v - mean) ** 2 for v in x) / 6)
    z = (100 - mean) / std
    assert z == pytest.approx(2.27, abs=0.005)
    _, flags = filter_outliers(adr(x), z - 1e-9)
    assert flags[3]
    _, flags = filter_outliers(adr(x), z + 1e-9)
    assert not any(flags)


def test_outlier_huge_threshold_is_identity():
    s = adr([3, 50, 4, 7, 400, 2])
    cleaned, flags = filter_outliers(s, 1e9)
    assert cleaned == s and not any(flags)


def test_outlier_constant_series():
    s = adr([5, 5, 5])
    cleaned, flags = filter_outliers(s, 3.0)
    assert cleaned == s and flags == [False] * 3


def test_outlier_requires_imputed_series():
    with pytest.raises(KpiError):
        filter_outliers(adr([1, None, 3]), 3.0)


# -- decomposition ----------------------------------------------------------


def brute_decompose(x, start_month):
    """Loop-based classical decomposition used as an independent oracle."""
    n = len(x)
    trend = [None] * n
    for t in range(6, n - 6):
        total = 0.5 * x[t - 6] + 0.5 * x[t + 6]
        for k in range(t - 5, t + 6):
            total += x[k]
        trend[t] = total / 12
    sums, counts = [0.0] * 12, [0] * 12
    for t in range(6, n - 6):
        m = (start_month - 1 + t) % 12
        sums[m] += x[t] - trend[t]
        counts[m] += 1
    raw = [s / c for s, c in zip(sums, counts)]
    avg = sum(raw) / 12
    return trend, [r - avg for r in raw]


def test_decompose_linear_ramp():
    x = [float(t + 1) for t in range(48)]
    d = decompose(adr(x))
    assert max(abs(v) for v in d.seasonal) < 1e-9
    for t in range(6, 42):
        assert d.trend[t] == pytest.approx(x[t], abs=1e-9)
    assert d.trend[:6] == (None,) * 6 and d.trend[-6:] == (None,) * 6


def test_decompose_pure_seasonal_sine_has_no_residual():
    x = [100 + 10 * math.sin(2 * math.pi * t / 12) for t in range(48)]
    d = decompose(adr(x))
    assert max(abs(r) for r in d.residual if r is not None) < 1e-6
    assert max(abs(v - 100) for v in d.trend if v is not None) < 1e-9


def test_decompose_matches_loop_oracle_and_reconstructs():
    rng = np.random.default_rng(4)
    x = list(80 + 10 * np.sin(np.arange(61) / 2.0) + rng.normal(0, 3, 61))
    start = MonthIndex(2018, 5)
    d = decompose(adr(x, start))
    trend, seasonal = brute_decompose(x, start.month)
    for a, b in zip(d.trend, trend):
        assert (a is None) == (b is None)
        if a is not None:
            assert a == pytest.approx(b, abs=1e-9)
    # seasonal is keyed by calendar month
    assert np.allclose(d.seasonal, seasonal, atol=1e-9)
    assert abs(sum(d.seasonal)) < 1e-9
    for i, v in enumerate(x):
        if d.trend[i] is not None:
            assert d.trend[i] + d.seasonal_at(i) + d.residual[i] == pytest.approx(v, abs=1e-9)


def test_decompose_needs_two_years():
    with pytest.raises(KpiError) as e:
        decompose(adr([1.0] * 23))
    assert e.value.code == "SERIES_TOO_SHORT"


# -- scaling ----------------------------------------------------------------


def test_minmax_formula():
    p = fit_scaler([10, 20, 30], ScaleMethod.MINMAX)
    assert list(apply_scaler([10, 20, 30], p)) == [0.0, 0.5, 1.0]


def test_zscore_uses_population_std():
    p = fit_scaler([1.0, 3.0], "zscore")
    assert (p.a, p.b) == (2.0, 1.0)
    assert list(apply_scaler([1.0, 3.0], p)) == [-1.0, 1.0]


@pytest.mark.parametrize("method", ["minmax", "zscore"])
def test_degenerate_fit(method):
    with pytest.raises(KpiError) as e:
        fit_scaler([0, 0, 0], method)
    assert e.value.code == "DEGENERATE_SCALE"


def test_scaler_params_invariants():
    with pytest.raises(KpiError):
        ScalerParams(ScaleMethod.MINMAX, 2.0, 2.0)
    with pytest.raises(KpiError):
        ScalerParams(ScaleMethod.ZSCORE, 0.0, 0.0)


@settings(max_examples=200)
@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=30).filter(lambda v: max(v) - min(v) > 1e-3),
       st.sampled_from(["minmax", "zscore"]))
def test_scaler_round_trip(values, method):
    p = fit_scaler(values, method)
    back = invert_scaler(apply_scaler(values, p), p)
    assert np.max(np.abs(back - np.asarray(values))) < 1e-9


# -- split and windows ------------------------------------------------------


@pytest.mark.parametrize("n,train,test", [(85, 68, 17), (10, 8, 2), (2, 1, 1)])
def test_split_sizes(n, train, test):
    tr, te = chronological_split(adr([1.0 + i for i in range(n)]), 0.8)
    assert (len(tr), len(te)) == (train, test)


def test_split_months_match_calendar():
    tr, te = chronological_split(adr([1.0] * 85), 0.8)
    assert (tr.start, tr.end) == (MonthIndex(2018, 1), MonthIndex(2023, 8))
    assert (te.start, te.end) == (MonthIndex(2023, 9), MonthIndex(2025, 1))


@pytest.mark.parametrize("n,frac", [(1, 0.5), (4, 0.1), (2, 0.4), (10, 1.0), (10, 0.0)])
def test_split_empty_side(n, frac):
    with pytest.raises(KpiError) as e:
        chronological_split(adr([1.0] * n), frac)
    assert e.value.code == "SPLIT_EMPTY"


@given(st.integers(2, 200), st.floats(0.05, 0.95))
def test_split_conservation(n, frac):
    s = adr([1.0 + i for i in range(n)])
    try:
        tr, te = chronological_split(s, frac)
    except KpiError:
        return
    assert len(tr) + len(te) == n
    assert tr.values + te.values == s.values
    assert tr.end < te.start


def test_windows_enumeration():
    w = make_windows([1, 2, 3, 4], 2)
    assert w.inputs.tolist() == [[1, 2], [2, 3]]
    assert w.targets.tolist() == [3, 4]


def test_windows_count_and_boundary():
    assert len(make_windows(np.arange(68.0), 12)) == 56
    with pytest.raises(KpiError) as e:
        make_windows(np.arange(12.0), 12)
    assert e.value.code == "INSUFFICIENT_HISTORY"


@given(st.integers(2, 50).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n - 1))))
def test_windows_match_brute_force(args):
    n, L = args
    x = np.arange(n, dtype=float) * 1.5
    w = make_windows(x, L)
    pairs = [(list(x[i : i + L]), x[i + L]) for i in range(n) if i + L < n]
    assert len(w) == len(pairs) == n - L
    for (inp, tgt), a, b in zip(pairs, w.inputs, w.targets):
        assert list(a) == inp and b == tgt


# -- RevPAR accounting ------------------------------------------------------


def _three(occ, adr_v, rev):
    mk = lambda kind, v: KpiSeries("A", kind, JAN18, (v,))  # noqa: E731
    return mk(KpiKind.OCC, occ), mk(KpiKind.ADR, adr_v), mk(KpiKind.REVPAR, rev)


def test_revpar_consistent():
    (row,) = revpar_consistency(*_three(80, 167.5, 134), rel_tol=0.01)
    assert not row.flagged and row.implied == pytest.approx(134.0)


def test_revpar_inconsistent():
    (row,) = revpar_consistency(*_three(80, 167.5, 160), rel_tol=0.01)
    assert row.flagged and row.rel_error == pytest.approx(26 / 160)


def test_revpar_alignment_error():
    occ = KpiSeries("A", KpiKind.OCC, JAN18, (80.0, 81.0))
    a = KpiSeries("A", KpiKind.ADR, JAN18, (100.0, 100.0))
    r = KpiSeries("A", KpiKind.REVPAR, JAN18.succ(), (80.0, 81.0))
    with pytest.raises(KpiError) as e:
        revpar_consistency(occ, a, r)
    assert e.value.code == "ALIGNMENT_ERROR"
