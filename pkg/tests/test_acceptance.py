"""Acceptance criteria; each test records one PASS/FAIL line shown in the terminal summary."""

import os
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from conftest import ar1, csv_digests, record
from tailbond import _rng, atsm, curve, ingest, portfolio, predict, synthlab, tailrisk, threepass

GSW_DEFAULT = Path(__file__).resolve().parents[1] / "data" / "feds200628.csv"

TABLE1_MATURITIES = (12, 24, 36, 48, 60, 84, 120)
TABLE1_CORR = np.array([
    [1.000, 0.926, 0.849, 0.790, 0.739, 0.652, 0.549],
    [0.926, 1.000, 0.981, 0.946, 0.905, 0.821, 0.711],
    [0.849, 0.981, 1.000, 0.990, 0.966, 0.899, 0.799],
    [0.790, 0.946, 0.990, 1.000, 0.993, 0.949, 0.865],
    [0.739, 0.905, 0.966, 0.993, 1.000, 0.980, 0.915],
    [0.652, 0.821, 0.899, 0.949, 0.980, 1.000, 0.975],
    [0.549, 0.711, 0.799, 0.865, 0.915, 0.975, 1.000],
])


def test_c1_tail_formula_matches_quadrature():
    t0 = time.perf_counter()
    worst = 0.0
    for a in np.linspace(1.0, 40.0, 10):
        for phi in np.geomspace(1e-4, 1.0, 10):
            for K in np.linspace(0.05, 1.0, 10):
                closed = tailrisk.left_jump_volatility(a, phi, K) ** 2
                quad = synthlab.numeric_tail_integral(a, phi, K)
                worst = max(worst, abs(closed - quad) / quad)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 5.0
    record("C1 tail formula vs quadrature", ok, f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert ok


def _recover(spec):
    groups = {}
    for q in synthlab.gen_tail_options(spec):
        groups.setdefault((q.date, q.expiry), []).append(q)
    chains, _ = ingest.prepare_chains(groups, lambda d, tenor: spec.rate, lambda d: spec.atm_iv30)
    pooled = chains[spec.date]
    alpha = tailrisk.estimate_alpha(pooled)
    return alpha, tailrisk.estimate_phi(pooled, alpha)


def test_c2_tail_estimator_recovery():
    t0 = time.perf_counter()
    alpha, phi = 12.0, 3.0
    a0, p0 = _recover(synthlab.TailGeneratorSpec(alpha=alpha, phi=phi, strikes_per_tenor=10))
    exact = max(abs(a0 - alpha) / alpha, abs(p0 - phi) / phi)
    errs = np.array([
        _recover(synthlab.TailGeneratorSpec(alpha=alpha, phi=phi, strikes_per_tenor=10, noise_sd=0.01, seed=s))
        for s in range(200)
    ])
    med_a = np.median(np.abs(errs[:, 0] - alpha) / alpha)
    med_p = np.median(np.abs(errs[:, 1] - phi) / phi)
    elapsed = time.perf_counter() - t0
    ok = exact < 1e-10 and med_a < 0.10 and med_p < 0.15 and elapsed < 30.0
    record("C2 tail recovery", ok, f"zero-noise rel err {exact:.1e}; median rel err alpha {med_a:.3%}, "
                                   f"phi {med_p:.3%}; {elapsed:.1f}s")
    assert ok


def test_c3_public_bond_return_statistics():
    path = Path(os.environ.get("TAILBOND_GSW_PATH", GSW_DEFAULT))
    if not path.exists():
        record("C3 public-data bond return statistics", False, f"GSW file not available at {path}; set TAILBOND_GSW_PATH")
        pytest.fail(f"GSW yield file not found at {path}")
    panel = ingest.load_gsw(path, "1996-01-01", "2018-12-31", maturities_months=sorted({1, *range(11, 121)}))
    rx = curve.excess_returns(panel, TABLE1_MATURITIES).frame
    stats = curve.descriptive_stats(rx)
    mean10, sr10 = stats.loc["mean", 120], stats.loc["sr", 120]
    corr_err = np.abs(rx.corr().to_numpy() - TABLE1_CORR).max()
    ok = abs(mean10 - 4.097) <= 0.30 and abs(sr10 - 0.455) <= 0.05 and corr_err <= 0.03
    record("C3 public-data bond return statistics", ok, f"10y mean {mean10:.3f}, SR {sr10:.3f}, max corr dev {corr_err:.3f}")
    assert ok


def _true_beta(spec):
    a, b, _, _ = atsm.yield_recursions(spec.model, max(spec.return_maturities))
    return np.column_stack([b[n - 2] for n in spec.return_maturities])


def _atsm_estimates(seed):
    spec = synthlab.default_atsm_spec(K=3, N=20, T=5000, seed=seed)
    X, rx, y = synthlab.gen_atsm_panel(spec)
    model, _, _ = atsm.estimate(X, rx, y[1], zero_mean=False)
    return {"Phi": model.Phi, "beta": model.beta, "lambda0": model.lambda0, "lambda1": model.lambda1,
            "delta0": np.atleast_1d(model.delta0), "delta1": model.delta1}


def test_c4_atsm_round_trip():
    t0 = time.perf_counter()
    spec = synthlab.default_atsm_spec(K=3, N=20, T=5000)
    truth = {"Phi": spec.Phi, "beta": _true_beta(spec), "lambda0": spec.lambda0, "lambda1": spec.lambda1,
             "delta0": np.atleast_1d(spec.delta0), "delta1": spec.delta1}
    reps = [_atsm_estimates(seed) for seed in range(20)]
    worst_z, failed = 0.0, []
    for name, value in truth.items():
        draws = np.stack([r[name] for r in reps])
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(reps))
        dev = np.abs(draws.mean(axis=0) - value)
        # the short rate is exact in the generator, so its estimates differ only by rounding
        bad = dev > 3.0 * se + 1e-12
        if bad.any():
            failed.append(name)
        worst_z = max(worst_z, float(np.max(np.where(dev > 1e-12, dev / np.maximum(se, 1e-300), 0.0))))

    exact = synthlab.default_atsm_spec(K=3, N=20, T=5000, exact=True, zero_mean=True, mu=np.zeros(3))
    X, rx, y = synthlab.gen_atsm_panel(exact)
    fit = atsm.fit_atsm(X, rx, y, y[1], zero_mean=True, yield_maturities=atsm.STATE_MATURITIES)
    yield_err = float(np.abs(fit.yield_errors.to_numpy()).max())

    rn = synthlab.default_atsm_spec(K=3, N=20, T=5000, exact=True, zero_mean=True, mu=np.zeros(3),
                                    lambda0=np.zeros(3), lambda1=np.zeros((3, 3)))
    X, rx, y = synthlab.gen_atsm_panel(rn)
    fit0 = atsm.fit_atsm(X, rx, y, y[1], zero_mean=True, yield_maturities=atsm.STATE_MATURITIES)
    tp = float(np.abs(fit0.term_premia.to_numpy()).max())
    elapsed = time.perf_counter() - t0

    ok = not failed and yield_err < 1e-10 and tp < 1e-10 and elapsed < 60.0
    record("C4 ATSM round trip", ok, f"max |bias|/MC-SE {worst_z:.2f} (outside 3 SE: {failed or 'none'}); "
                                     f"exact-mode max yield err {yield_err:.1e}; max |TP| at lambda=0 {tp:.1e}; "
                                     f"{elapsed:.1f}s")
    assert ok


def _cw_null_rejects(seed, T=300, start=120):
    g = _rng.stream(seed, 3)
    x = ar1(g, T)
    r = 0.002 + 0.01 * g.standard_normal((T, 1))
    fm, fb = predict.recursive_forecasts(r, x[:, None], None, start, "rolling")
    _, p = predict.clark_west(fm[:, 0], fb[:, 0], r[start:, 0], nw_lags=12)
    return p < 0.10


def test_c5_forecast_evaluation_calibration(bh_null_pvalues):
    t0 = time.perf_counter()
    cw_rate = np.mean([_cw_null_rejects(s) for s in range(1000)])
    bh_rate = np.mean(bh_null_pvalues < 0.10)
    elapsed = time.perf_counter() - t0
    ok = 0.06 <= cw_rate <= 0.14 and 0.06 <= bh_rate <= 0.14
    record("C5 CW/BH calibration", ok, f"10% rejection rate CW {cw_rate:.1%} (1000 reps), "
                                       f"BH {bh_rate:.1%} (200 reps, B=499); {elapsed:.1f}s")
    assert ok


def test_c6_portfolio_identities():
    g = _rng.stream(5, 0)
    idx = pd.date_range("2000-01-31", periods=240, freq="ME")
    rx = pd.Series(0.003 + 0.02 * g.standard_normal(240), index=idx)
    y1m = pd.Series(0.03 + 0.005 * g.standard_normal(240), index=idx)
    fc = pd.Series(0.004 * g.standard_normal(120), index=idx[120:])
    frame = pd.DataFrame({"realized": rx.iloc[120:], "model": fc, "benchmark": fc})
    model, _ = portfolio.economic_value(frame, rx, y1m)
    zero = model.delta == 0.0 and model.theta == 0.0

    extreme = np.concatenate([g.standard_normal(500) * 10.0 ** g.uniform(-6, 3, 500), [np.inf, -np.inf]])
    w = portfolio.mv_weight(extreme, 10.0 ** g.uniform(-8, 1, extreme.size))
    in_bounds = bool(np.all((w >= -1.0) & (w <= 5.0)))

    cer_err = max(abs(portfolio.cer(np.full(120, r)) - 1200.0 * r) for r in (0.0, 0.0025, -0.001, 0.011))
    ok = zero and in_bounds and cer_err < 1e-10
    record("C6 portfolio identities", ok, f"delta {model.delta}, theta {model.theta}; weights in [-1, 5]: "
                                          f"{in_bounds}; constant-return CER err {cer_err:.1e}")
    assert ok


def _factor_world(T, n=25, p=3, gamma_g=0.07, seed=0, weak=False):
    g = _rng.stream(seed, 0)
    f = g.standard_normal((p, T))
    gamma = np.array([0.5, 0.3, 0.2])[:p]
    beta = g.standard_normal((n, p))
    R = beta @ (gamma[:, None] + f) + g.standard_normal((n, T))
    eta = np.zeros(p) if weak else gamma_g * gamma / (gamma @ gamma)
    G = eta @ f + 0.5 * g.standard_normal(T)
    return R, G[None, :], float(eta @ gamma)


def test_c7_three_pass_properties():
    t0 = time.perf_counter()
    R, G, truth = _factor_world(2000)
    p = 3
    base = threepass.three_pass(R, G, p)
    V, beta = threepass.gx_pca(R - R.mean(axis=1, keepdims=True), p)
    H = _rng.stream(1, 0).standard_normal((p, p)) + 3 * np.eye(p)
    beta_rot = beta @ np.linalg.inv(H)
    V_rot = H @ V
    gamma_rot = threepass.gx_cross_section(beta_rot, R.mean(axis=1))
    eta_rot, _, _ = threepass.gx_time_series(G - G.mean(axis=1, keepdims=True), V_rot)
    rot_err = float(np.abs(eta_rot @ gamma_rot - base.gamma_g).max())

    r2 = [threepass.three_pass(R, G, q).r2_g[0] for q in range(1, 9)]
    monotone = bool(np.all(np.diff(r2) >= -1e-12))

    se = threepass.gx_se(R, G, p, B=199, seed=3)[0]
    recovered = abs(base.gamma_g[0] - truth) <= 3 * se

    rejects = []
    for s in range(1000):
        Rw, Gw, _ = _factor_world(2000, seed=100 + s, weak=True)
        rejects.append(threepass.three_pass(Rw, Gw, p).weak_wald[1][0] < 0.10)
    size = float(np.mean(rejects))
    elapsed = time.perf_counter() - t0

    ok = rot_err < 1e-10 and monotone and recovered and 0.06 <= size <= 0.14
    record("C7 three-pass properties", ok, f"rotation err {rot_err:.1e}; R2_g monotone {monotone}; "
                                           f"gamma_g {base.gamma_g[0]:.4f} vs {truth:.4f} (SE {se:.4f}); "
                                           f"weak-test size {size:.1%} at T=2000; {elapsed:.1f}s")
    assert ok


def test_c8_pipeline_determinism(pipeline_runs):
    (out1, codes1), (out8, codes8) = pipeline_runs[1], pipeline_runs[8]
    d1, d8 = csv_digests(out1), csv_digests(out8)
    all_ok = all(c == 0 for c in (*codes1.values(), *codes8.values()))
    differing = sorted(k for k in set(d1) | set(d8) if d1.get(k) != d8.get(k))
    ok = all_ok and not differing and len(d1) > 10
    record("C8 determinism", ok, f"{len(d1)} CSV artifacts, exit codes all 0: {all_ok}, "
                                 f"differing between 1 and 8 threads: {differing or 'none'}")
    assert ok
