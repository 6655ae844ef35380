import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tailbond import curve
from tailbond.curve import NssParams, YieldPanel
from tailbond.exceptions import InsufficientData, InvalidInput, RankDeficient, SchemaError, ValidationError

DATES = pd.date_range("2000-01-31", periods=60, freq="ME")


def _panel(values, maturities, dates=None):
    dates = DATES[: len(values)] if dates is None else dates
    return YieldPanel(pd.DataFrame(values, index=dates, columns=maturities))


def _random_panel(T=60, maturities=range(1, 121), seed=0):
    rng = np.random.default_rng(seed)
    m = np.asarray(list(maturities), dtype=float)
    level = 0.04 + np.cumsum(0.001 * rng.standard_normal(T))
    slope = 0.01 + np.cumsum(0.001 * rng.standard_normal(T))
    curv = np.cumsum(0.001 * rng.standard_normal(T))
    x = m / 36.0
    Y = level[:, None] + slope[:, None] * (1 - np.exp(-x)) + curv[:, None] * x * np.exp(-x)
    Y = Y + 1e-5 * rng.standard_normal(Y.shape)
    return _panel(Y, list(maturities), pd.date_range("2000-01-31", periods=T, freq="ME"))


def test_nss_limits():
    p = NssParams(0.05, -0.02, 0.01, 0.005, 1.5, 8.0)
    assert curve.nss_yield(p, 1e-10) == pytest.approx(0.03, abs=1e-10)
    assert curve.nss_yield(p, 1e6) == pytest.approx(0.05, abs=1e-6)
    with pytest.raises(InvalidInput):
        curve.nss_yield(p, 0.0)
    with pytest.raises(InvalidInput):
        NssParams(0.05, 0, 0, 0, -1.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.1), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05),
       st.floats(0.3, 4.0), st.floats(5.0, 20.0))
def test_fit_nss_reproduces_curve(b0, b1, b2, b3, t1, t2):
    n = np.array([0.25, 0.5, 1, 2, 3, 5, 7, 10, 15, 20, 30])
    y = curve.nss_yield(NssParams(b0, b1, b2, b3, t1, t2), n)
    fit = curve.fit_nss(n, y)
    np.testing.assert_allclose(curve.nss_yield(fit, n), y, atol=2e-6)


def test_fit_nss_validation():
    with pytest.raises(InsufficientData):
        curve.fit_nss([1, 2, 3, 4, 5], [0.01] * 5)
    with pytest.raises(InvalidInput):
        curve.fit_nss([1, 2, 3, 4, 5, 6], [0.01] * 5 + [np.nan])
    est = curve.NelsonSiegelSvensson().fit(np.array([0.5, 1, 2, 5, 7, 10, 20.0]), np.full(7, 0.03))
    np.testing.assert_allclose(est.predict(np.array([3.0, 30.0])), 0.03, atol=1e-10)


def test_excess_returns_hand_case():
    # y(1) = 1.2%, y(11) = 2.4%, y(12) = 3.6% then y(11) falls to 1.2%
    panel = _panel([[0.012, 0.024, 0.036], [0.012, 0.012, 0.036]], [1, 11, 12])
    rx = curve.excess_returns(panel, [12]).frame
    expected = -11 / 12 * 0.012 + 0.036 - 0.012 / 12
    assert rx.iloc[0, 0] == pytest.approx(expected, rel=1e-14)
    assert rx.index[0] == DATES[1]


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.02, 0.15))
def test_flat_constant_curve_has_zero_excess_return(level):
    panel = _panel(np.full((5, 4), level), [1, 11, 12, 24])
    rx = curve.excess_returns(panel, [12]).frame
    np.testing.assert_allclose(rx.to_numpy(), 0.0, atol=1e-15)


def test_excess_returns_validation():
    with pytest.raises(SchemaError):
        curve.excess_returns(_panel(np.full((3, 2), 0.01), [11, 12]), [12])
    with pytest.raises(SchemaError):
        curve.excess_returns(_panel(np.full((3, 2), 0.01), [1, 12]), [12])
    gap = pd.DatetimeIndex(["2000-01-31", "2000-02-29", "2000-04-30"])
    with pytest.raises(ValidationError, match="consecutive"):
        curve.excess_returns(_panel(np.full((3, 3), 0.01), [1, 11, 12], gap), [12])
    with pytest.raises(ValidationError):
        _panel([[0.01, np.nan]], [1, 12])


def test_descriptive_stats_units():
    x = pd.DataFrame({"a": np.tile([0.01, -0.005], 30)})
    s = curve.descriptive_stats(x)
    assert s.loc["mean", "a"] == pytest.approx(0.0025 * 1200)
    assert s.loc["sd", "a"] == pytest.approx(x["a"].std() * 100 * np.sqrt(12))
    assert s.loc["rho1", "a"] == pytest.approx(-1.0)
    assert s.loc["sr", "a"] == pytest.approx(s.loc["mean", "a"] / s.loc["sd", "a"])


def test_pca_sign_convention_and_orthogonality():
    panel = _random_panel()
    res = curve.pca(panel, 3)
    assert np.all(res.loadings.sum(axis=0) > 0)
    np.testing.assert_allclose(res.loadings.T @ res.loadings, np.eye(3), atol=1e-12)
    scores = res.scores.to_numpy()
    cov = np.cov(scores.T)
    np.testing.assert_allclose(cov - np.diag(np.diag(cov)), 0.0, atol=1e-14)
    np.testing.assert_allclose(np.diag(cov), res.eigenvalues[:3], rtol=1e-10)
    assert np.all(np.diff(res.eigenvalues) <= 0)


def test_pca_rank_deficient():
    flat = _panel(np.outer(np.linspace(0.01, 0.05, 20), np.ones(5)), [1, 2, 3, 4, 5])
    assert curve.pca(flat, 1).loadings.shape == (5, 1)
    with pytest.raises(RankDeficient):
        curve.pca(flat, 2)


def test_yield_pca_estimator_round_trip():
    Y = _random_panel(maturities=range(3, 121, 3)).yields
    est = curve.YieldPCA(n_components=3).fit(Y)
    Z = est.transform(Y)
    np.testing.assert_allclose(Z, curve.pca(pd.DataFrame(Y), 3).scores.to_numpy(), atol=1e-14)
    assert np.abs(est.inverse_transform(Z) - Y).max() < 1e-4


@settings(max_examples=40, deadline=None)
@given(arrays(float, (30, 3), elements=st.floats(-1, 1)), arrays(float, 30, elements=st.floats(-1, 1)))
def test_orthogonalize_removes_covariance_keeps_mean(Y, f):
    if np.ptp(f) < 1e-3:
        with pytest.raises(RankDeficient):
            curve.orthogonalize(pd.DataFrame(Y, index=DATES[:30]), np.zeros(30))
        return
    out = curve.orthogonalize(pd.DataFrame(Y, index=DATES[:30]), f).to_numpy()
    fc = f - f.mean()
    np.testing.assert_allclose(fc @ (out - out.mean(axis=0)), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.mean(axis=0), Y.mean(axis=0), atol=1e-12)
    tr = curve.FactorOrthogonalizer().fit_transform(Y, f)
    np.testing.assert_allclose(tr, out, atol=1e-12)


def test_orthogonalize_series_alignment():
    panel = _random_panel(T=20, maturities=[1, 12])
    with pytest.raises(ValidationError):
        curve.orthogonalize(panel, pd.Series(np.arange(20.0), index=DATES[1:21]))
    with pytest.raises(RankDeficient):
        curve.orthogonalize(panel, np.ones(20))
    assert isinstance(curve.orthogonalize(panel, np.arange(20.0)), YieldPanel)


def test_standardize():
    s = pd.Series([1.0, 2.0, 4.0, 7.0], index=DATES[:4], name="x")
    z = curve.standardize(s)
    assert z.mean() == pytest.approx(0.0, abs=1e-15) and z.std(ddof=1) == pytest.approx(1.0)
    assert z.name == "x" and z.index.equals(s.index)
    with pytest.raises(InvalidInput):
        curve.standardize(np.ones(3))


def test_cp_factor_on_exact_linear_returns():
    panel = _random_panel(T=120)
    fwd = curve.forward_rates(panel)
    coef = np.array([0.001, -0.2, 0.1, 0.3, -0.05, 0.2])
    target = np.column_stack([np.ones(len(fwd)), fwd.to_numpy()]) @ coef
    returns = pd.DataFrame({n: np.r_[np.nan, target[:-1]] for n in (24, 36, 48, 60)}, index=panel.dates).iloc[1:]
    cp = curve.cp_factor(panel, curve.ReturnPanel(returns))
    assert cp.r2 == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(cp.coefficients, coef, atol=1e-8)
    assert list(fwd.columns) == ["y1", "f2", "f3", "f4", "f5"]
    with pytest.raises(SchemaError):
        curve.forward_rates(panel.select([1, 12]))
