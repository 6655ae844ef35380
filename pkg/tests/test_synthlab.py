import datetime as dt
import hashlib
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailbond import atsm, ingest, synthlab, tailrisk
from tailbond.exceptions import InvalidInput

# frozen outputs of the generators; a change here means old synthetic runs are not reproducible
GOLDEN_OPTIONS = "98d4afe1f1373711ff9077e4b669c4507121a0dd3a21be048c9145c8f4500d2f"
GOLDEN_PANEL = "a4ba87b8acb498b167d28f4d05de61520eda0513f0c87a7f459d2e3d5743df0d"


def test_tail_integral_oracle():
    assert synthlab.numeric_tail_integral(1.0, 1.0, 0.0) == pytest.approx(2.0, rel=1e-12)
    assert synthlab.numeric_tail_integral(2.0, 3.0, -0.1) == pytest.approx(
        3 * synthlab.numeric_tail_integral(2.0, 1.0, 0.1), rel=1e-13)
    with pytest.raises(InvalidInput):
        synthlab.numeric_tail_integral(0.0, 1.0, 0.1)


def test_black_price():
    F, tau, sigma = 100.0, 0.25, 0.2
    atm = synthlab.black_price(F, F, tau, sigma)
    assert atm == pytest.approx(0.3989 * F * sigma * math.sqrt(tau), rel=1e-3)
    assert synthlab.black_price(F, 90.0, tau, 0.0) == 10.0
    assert synthlab.black_price(F, 90.0, tau, 0.0, "P") == 0.0
    c, p = synthlab.black_price(F, 95.0, tau, sigma, "C"), synthlab.black_price(F, 95.0, tau, sigma, "P")
    assert c - p == pytest.approx(5.0, abs=1e-12)
    with pytest.raises(InvalidInput):
        synthlab.black_price(F, F, tau, sigma, "X")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(-0.3, 0.3), st.sampled_from(["C", "P"]))
def test_implied_vol_round_trip(sigma, k, kind):
    F, tau = 100.0, 30 / 365
    K = F * math.exp(k)
    price = synthlab.black_price(F, K, tau, sigma, kind)
    intrinsic = max(F - K, 0.0) if kind == "C" else max(K - F, 0.0)
    if price - intrinsic < 1e-10 * F:
        return
    assert synthlab.implied_vol(price, F, K, tau, kind) == pytest.approx(sigma, abs=1e-8)


def test_implied_vol_bounds():
    assert synthlab.implied_vol(10.0, 100.0, 90.0, 0.1) == 0.0
    with pytest.raises(InvalidInput):
        synthlab.implied_vol(9.0, 100.0, 90.0, 0.1)


def test_atm_iv30_recovers_flat_vol():
    spec = synthlab.TailGeneratorSpec(alpha=10.0, phi=1.0, atm_iv30=0.25)
    groups = {}
    for q in synthlab.gen_tail_options(spec):
        groups.setdefault((q.date, q.expiry), []).append(q)
    iv = synthlab.atm_iv30(groups, lambda date, tenor: spec.rate)
    # mids are exact Black prices so only the spread-free midpoint inversion is tested
    assert iv[spec.date] == pytest.approx(0.25, abs=1e-8)


def test_put_prices_scale_with_phi_and_rise_with_k():
    k = np.linspace(-0.6, -0.1, 6)
    zero = synthlab.btx_put_price(k, 8.0, 0.0, 0.1, 100.0, 0.02)
    one = synthlab.btx_put_price(k, 8.0, 1.5, 0.1, 100.0, 0.02)
    two = synthlab.btx_put_price(k, 8.0, 3.0, 0.1, 100.0, 0.02)
    np.testing.assert_array_equal(zero, 0.0)
    np.testing.assert_allclose(two, 2 * one, rtol=1e-15)
    assert np.all(np.diff(one) > 0)


def test_generated_chain_passes_filter_and_recovers_parameters():
    spec = synthlab.TailGeneratorSpec(alpha=11.0, phi=2.5)
    quotes = synthlab.gen_tail_options(spec)
    assert all(q.kind == "P" for q in quotes if q.strike < 70)
    groups = {}
    for q in quotes:
        groups.setdefault((q.date, q.expiry), []).append(q)
    by_date, dropped = ingest.prepare_chains(groups, lambda d, t: spec.rate, lambda d: spec.atm_iv30)
    chains = by_date[spec.date]
    assert not dropped and len(chains) == len(spec.tenors_days)
    assert tailrisk.estimate_alpha(chains) == pytest.approx(11.0, rel=1e-9)
    assert tailrisk.estimate_phi(chains, 11.0) == pytest.approx(2.5, rel=1e-9)


def test_tail_spec_validation():
    with pytest.raises(InvalidInput):
        synthlab.TailGeneratorSpec(alpha=1.0, phi=1.0, noise_sd=-0.1)
    with pytest.raises(InvalidInput):
        synthlab.TailGeneratorSpec(alpha=0.0, phi=1.0)
    with pytest.raises(InvalidInput):
        synthlab.TailGeneratorSpec(alpha=1.0, phi=1.0, moneyness_start=-1.0)


def test_atsm_panel_shapes_and_seed():
    spec = synthlab.default_atsm_spec(K=2, N=3, T=1, seed=4)
    X, rx, y = synthlab.gen_atsm_panel(spec)
    assert X.shape == (2, 2) and rx.shape == (1, 3) and list(rx.columns) == [6, 12, 18]
    assert y.shape == (2, 18) and rx.index[0] == X.index[1]
    a = synthlab.gen_atsm_panel(synthlab.default_atsm_spec(T=40, seed=4))
    b = synthlab.gen_atsm_panel(synthlab.default_atsm_spec(T=40, seed=4))
    c = synthlab.gen_atsm_panel(synthlab.default_atsm_spec(T=40, seed=5))
    for u, v in zip(a, b):
        assert u.equals(v)
    assert not a[1].equals(c[1])
    with pytest.raises(InvalidInput):
        synthlab.default_atsm_spec(Phi=np.eye(3))


def test_panel_returns_follow_from_yields():
    spec = synthlab.default_atsm_spec(K=3, N=4, T=30, seed=1, sigma2=0.0)
    _, rx, y = synthlab.gen_atsm_panel(spec)
    logp = -y.to_numpy() * np.arange(1, y.shape[1] + 1) / 12
    for n in (12, 24):
        expected = logp[1:, n - 2] - logp[:-1, n - 1] + logp[:-1, 0]
        np.testing.assert_allclose(rx[n].to_numpy(), expected, atol=1e-15)


def test_world_generator_is_coupled():
    w = synthlab.gen_world("2000-01-31", "2004-12-31", seed=1, days_per_month=2)
    assert len(w["truth"]) == 60 and w["yields"].shape == (60, 120)
    assert len(w["rates"]) == 120 and w["atm_iv"].index.equals(w["rates"].index)
    corr = np.corrcoef(np.log(w["truth"]["phi"]), w["yields"][120])[0, 1]
    assert abs(corr) > 0.3


def test_golden_hashes(tmp_path):
    quotes = synthlab.gen_tail_options(synthlab.TailGeneratorSpec(alpha=12.0, phi=2.0, noise_sd=0.01, seed=3))
    path = tmp_path / "chain.csv"
    ingest.write_option_chain(path, quotes)
    assert hashlib.sha256(path.read_bytes()).hexdigest() == GOLDEN_OPTIONS
    h = hashlib.sha256()
    for frame in synthlab.gen_atsm_panel(synthlab.default_atsm_spec(K=3, N=4, T=50, seed=9)):
        h.update(np.ascontiguousarray(frame.to_numpy()).tobytes())
    assert h.hexdigest() == GOLDEN_PANEL


def test_last_business_days():
    days = synthlab.last_business_days(pd.Period("2020-02", "M"), 3)
    assert days == [dt.date(2020, 2, 26), dt.date(2020, 2, 27), dt.date(2020, 2, 28)]
    assert synthlab.last_business_days(pd.Period("2020-05", "M"), 1) == [dt.date(2020, 5, 29)]


def test_exact_mode_uses_sample_var():
    spec = synthlab.default_atsm_spec(K=2, N=3, T=200, exact=True, seed=3)
    X, rx, y = synthlab.gen_atsm_panel(spec)
    mu, Phi, Sigma, _ = atsm.fit_var(X.to_numpy())
    model = atsm.AtsmModel(mu, Phi, Sigma, spec.lambda0, spec.lambda1, 0.0, spec.delta0, spec.delta1)
    a, b, _, _ = atsm.yield_recursions(model, 18)
    np.testing.assert_allclose(y.to_numpy(), -12 * (a + X.to_numpy() @ b.T) / np.arange(1, 19), atol=1e-15)
