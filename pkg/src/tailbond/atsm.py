"""Gaussian affine term structure model estimated by three-step regressions.

Step one fits a VAR(1) to the pricing factors, step two regresses excess
returns on the VAR innovations and lagged factors, and step three recovers
the market prices of risk cross-sectionally. All recursion quantities are
monthly; yields are reported annualized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, stats
from sklearn.base import BaseEstimator

from . import _rng
from .curve import ReturnPanel, YieldPanel, orthogonalize, pca, standardize
from .exceptions import AlignmentError, InsufficientData, InvalidInput, RankDeficient
from .predict import check_full_rank

STATE_MATURITIES = tuple(range(3, 121, 3))
RETURN_MATURITIES = tuple(range(6, 121, 6))


@dataclass
class AtsmModel:
    mu: np.ndarray
    Phi: np.ndarray
    Sigma: np.ndarray
    lambda0: np.ndarray
    lambda1: np.ndarray
    sigma2: float
    delta0: float
    delta1: np.ndarray
    beta: np.ndarray | None = None  # K x N
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    a_rn: np.ndarray | None = None
    b_rn: np.ndarray | None = None
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        self.Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        self.lambda0 = np.asarray(self.lambda0, dtype=float).ravel()
        self.lambda1 = np.atleast_2d(np.asarray(self.lambda1, dtype=float))
        self.delta1 = np.asarray(self.delta1, dtype=float).ravel()
        K = self.K
        for name, shape in (("Phi", (K, K)), ("Sigma", (K, K)), ("lambda1", (K, K))):
            if getattr(self, name).shape != shape:
                raise InvalidInput(f"{name} must be {K}x{K}")
        if self.lambda0.size != K or self.delta1.size != K:
            raise InvalidInput("lambda0 and delta1 must have K entries")
        if not np.allclose(self.Sigma, self.Sigma.T, atol=1e-12):
            raise InvalidInput("Sigma must be symmetric")
        if np.linalg.eigvalsh(self.Sigma).min() < -1e-12 * max(1.0, np.abs(self.Sigma).max()):
            raise InvalidInput("Sigma must be positive semidefinite")
        if self.sigma2 < 0:
            raise InvalidInput("sigma2 must be non-negative")

    @property
    def K(self) -> int:
        return self.mu.size

    @property
    def Lambda(self) -> np.ndarray:
        return np.column_stack([self.lambda0, self.lambda1])


@dataclass
class AtsmFit:
    model: AtsmModel
    fitted_yields: pd.DataFrame
    rn_yields: pd.DataFrame
    term_premia: pd.DataFrame
    yield_errors: pd.DataFrame
    return_errors: pd.DataFrame
    factors: pd.DataFrame
    factor_means: np.ndarray | None = None
    factor_scales: np.ndarray | None = None
    var_innovations: np.ndarray | None = None


# -- state ---------------------------------------------------------------------


def build_state(tr_series: pd.Series, yields: YieldPanel, maturities=STATE_MATURITIES, n_pcs=5, tr_name="TR"):
    """Standardized ``[TR, PC1..PC5]`` with PCs of yields orthogonalized to TR.

    Returns ``(X, means, scales)`` where ``means``/``scales`` undo the
    standardization column by column.
    """
    panel = yields.select(list(maturities)) if isinstance(yields, YieldPanel) else YieldPanel(
        pd.DataFrame(yields)[list(maturities)])
    tr = pd.Series(tr_series, dtype=float)
    tr_p = pd.DatetimeIndex(tr.index).to_period("M")
    y_p = pd.DatetimeIndex(panel.dates).to_period("M")
    missing = y_p.difference(tr_p[tr.notna().to_numpy()])
    if len(missing):
        raise AlignmentError(f"tail series missing for {len(missing)} month(s): {', '.join(map(str, missing[:12]))}")
    tr = pd.Series(tr.to_numpy()[tr_p.get_indexer(y_p)], index=panel.dates, name=tr_name)
    ortho = orthogonalize(panel, tr)
    pcs = pca(ortho, n_pcs).scores
    raw = pd.concat([tr, pcs], axis=1)
    means = raw.mean().to_numpy()
    scales = raw.std(ddof=1).to_numpy()
    return standardize(raw), means, scales


# -- step 1 ----------------------------------------------------------------------


def fit_var(X, zero_mean=False):
    """OLS VAR(1); returns ``(mu, Phi, Sigma, V)`` with ``Sigma = V'V/T`` and V rows dated t+1."""
    X = np.asarray(X, dtype=float)
    T1, K = X.shape
    if T1 - 1 <= K + 1:
        raise InsufficientData(f"VAR needs more than {K + 2} observations")
    lhs, lag = X[1:], X[:-1]
    design = lag if zero_mean else np.column_stack([np.ones(T1 - 1), lag])
    coef, *_ = np.linalg.lstsq(design, lhs, rcond=None)
    if zero_mean:
        mu, Phi = np.zeros(K), coef.T
    else:
        mu, Phi = coef[0], coef[1:].T
    V = lhs - design @ coef
    Sigma = V.T @ V / V.shape[0]
    rho = np.max(np.abs(np.linalg.eigvals(Phi)))
    if rho >= 1.0:
        warnings.warn(f"estimated VAR is not stable (spectral radius {rho:.4f})", stacklevel=2)
    return mu, Phi, 0.5 * (Sigma + Sigma.T), V


# -- step 2 ----------------------------------------------------------------------


@dataclass
class ReturnRegression:
    a: np.ndarray
    beta: np.ndarray  # K x N
    c: np.ndarray  # N x K
    sigma2: float
    residuals: np.ndarray  # T x N
    design: np.ndarray = field(repr=False, default=None)


def return_regression(rx, V, X_lag) -> ReturnRegression:
    """Per-maturity OLS of ``rx`` (T x N) on ``[1, V, X_lag]``; ``sigma2 = tr(E'E)/(NT)``."""
    rx = np.asarray(rx, dtype=float)
    V = np.asarray(V, dtype=float)
    X_lag = np.asarray(X_lag, dtype=float)
    T, N = rx.shape
    K = V.shape[1]
    if V.shape[0] != T or X_lag.shape[0] != T:
        raise InvalidInput("returns, innovations and lagged factors must share T")
    if T <= 2 * K + 1:
        raise InsufficientData(f"return regression needs T > {2 * K + 1}")
    Z = np.column_stack([np.ones(T), V, X_lag])
    check_full_rank(Z, ["const"] + [f"v{i + 1}" for i in range(K)] + [f"x{i + 1}" for i in range(K)])
    coef, *_ = np.linalg.lstsq(Z, rx, rcond=None)
    E = rx - Z @ coef
    return ReturnRegression(coef[0], coef[1 : K + 1], coef[K + 1 :].T, float((E * E).sum() / (N * T)), E, Z)


def _bstar(beta):
    # rows vec(beta_n beta_n')
    return np.einsum("in,jn->nij", beta, beta).reshape(beta.shape[1], -1)


# -- step 3 ----------------------------------------------------------------------


def price_of_risk(a, beta, c, Sigma, sigma2):
    """Cross-sectional least squares for ``(lambda0, lambda1)`` via QR of ``beta'``."""
    beta = np.asarray(beta, dtype=float)
    K, N = beta.shape
    if N < K:
        raise RankDeficient(f"{N} maturities cannot identify {K} prices of risk")
    s = np.linalg.svd(beta, compute_uv=False)
    if s[-1] <= s[0] * max(K, N) * np.finfo(float).eps * 10:
        raise RankDeficient("beta beta' is singular")
    adj = np.asarray(a, dtype=float) + 0.5 * (_bstar(beta) @ np.asarray(Sigma, dtype=float).ravel() + sigma2)
    Q, R = linalg.qr(beta.T, mode="economic")
    rhs = np.column_stack([adj, np.asarray(c, dtype=float)])
    sol = linalg.solve_triangular(R, Q.T @ rhs)
    return sol[:, 0], sol[:, 1:]


def short_rate_regression(y1m, X):
    """OLS of ``y1m/12`` on ``[1, X]``; returns ``(delta0, delta1, resid_var)``."""
    r = np.asarray(y1m, dtype=float).ravel() / 12.0
    X = np.asarray(X, dtype=float)
    Z = np.column_stack([np.ones(len(r)), X])
    coef, *_ = np.linalg.lstsq(Z, r, rcond=None)
    e = r - Z @ coef
    return float(coef[0]), coef[1:], float(e @ e / len(r))


def yield_recursions(model: AtsmModel, n_max: int):
    """Bond price loadings ``log P_n = a_n + b_n' X`` for n = 1..n_max.

    Returns ``(a, b, a_rn, b_rn)``; ``b`` is (n_max, K) with row ``n-1``
    holding ``b_n``.
    """
    if n_max < 1:
        raise InvalidInput("n_max must be >= 1")

    def run(lam0, lam1):
        K = model.K
        a = np.empty(n_max)
        b = np.empty((n_max, K))
        a[0], b[0] = -model.delta0, -model.delta1
        drift = model.mu - lam0
        trans = (model.Phi - lam1).T
        for i in range(1, n_max):
            bp = b[i - 1]
            a[i] = a[i - 1] + bp @ drift + 0.5 * (bp @ model.Sigma @ bp + model.sigma2) - model.delta0
            b[i] = trans @ bp - model.delta1
        return a, b

    a, b = run(model.lambda0, model.lambda1)
    a_rn, b_rn = run(np.zeros(model.K), np.zeros((model.K, model.K)))
    return a, b, a_rn, b_rn


def _yields_from(a, b, X, maturities):
    n = np.asarray(maturities)
    return -12.0 * (a[n - 1][None, :] + X @ b[n - 1].T) / n[None, :]


def fit_yields(model: AtsmModel, X: pd.DataFrame, observed: YieldPanel | pd.DataFrame | None = None,
               maturities=None, return_errors=None) -> AtsmFit:
    frame = None
    if observed is not None:
        frame = observed.frame if isinstance(observed, YieldPanel) else pd.DataFrame(observed)
        maturities = list(frame.columns) if maturities is None else list(maturities)
        frame = frame.loc[X.index, maturities]
    if maturities is None:
        raise InvalidInput("give maturities or an observed panel")
    maturities = [int(m) for m in maturities]
    n_max = max(maturities)
    if model.a is None or len(model.a) < n_max:
        model.a, model.b, model.a_rn, model.b_rn = yield_recursions(model, n_max)
    Xv = X.to_numpy(dtype=float)
    fitted = pd.DataFrame(_yields_from(model.a, model.b, Xv, maturities), index=X.index, columns=maturities)
    rn = pd.DataFrame(_yields_from(model.a_rn, model.b_rn, Xv, maturities), index=X.index, columns=maturities)
    u = frame - fitted if frame is not None else pd.DataFrame(index=X.index, columns=maturities, dtype=float)
    return AtsmFit(model, fitted, rn, fitted - rn, u,
                   return_errors if return_errors is not None else pd.DataFrame(), X)


def estimate(X: pd.DataFrame, returns: ReturnPanel | pd.DataFrame, y1m: pd.Series, zero_mean=False):
    """Three-step estimates; returns ``(model, step2)``.

    ``returns`` columns are bond maturities ``n`` (held one month), dated at
    the end of the holding month; factors are dated at the start.
    """
    rframe = returns.frame if isinstance(returns, ReturnPanel) else pd.DataFrame(returns)
    Xv = X.to_numpy(dtype=float)
    mu, Phi, Sigma, V = fit_var(Xv, zero_mean)
    rx = _returns_on(rframe, X.index)
    step2 = return_regression(rx, V, Xv[:-1])
    lam0, lam1 = price_of_risk(step2.a, step2.beta, step2.c, Sigma, step2.sigma2)
    r = pd.Series(y1m, dtype=float)
    r_p = pd.DatetimeIndex(r.index).to_period("M")
    x_p = pd.DatetimeIndex(X.index).to_period("M")
    pos = r_p.get_indexer(x_p)
    if (pos < 0).any():
        raise AlignmentError("short rate missing at some factor dates")
    d0, d1, _ = short_rate_regression(r.to_numpy()[pos], Xv)
    model = AtsmModel(mu, Phi, Sigma, lam0, lam1, step2.sigma2, d0, d1, beta=step2.beta, names=list(X.columns))
    return model, step2, V


def _returns_on(rframe, factor_dates):
    """Returns over (t, t+1] for consecutive factor dates ``t``."""
    r_p = pd.DatetimeIndex(rframe.index).to_period("M")
    x_p = pd.DatetimeIndex(factor_dates).to_period("M")
    if np.any(np.diff(x_p.asi8) != 1):
        raise AlignmentError("factor dates must be consecutive months")
    pos = r_p.get_indexer(x_p[1:])
    if (pos < 0).any():
        missing = x_p[1:][pos < 0]
        raise AlignmentError(f"returns missing for {len(missing)} month(s): {', '.join(map(str, missing[:12]))}")
    return rframe.to_numpy(dtype=float)[pos]


def fit_atsm(X: pd.DataFrame, returns, yields, y1m, zero_mean=True, yield_maturities=None) -> AtsmFit:
    model, step2, V = estimate(X, returns, y1m, zero_mean)
    rframe = returns.frame if isinstance(returns, ReturnPanel) else pd.DataFrame(returns)
    errs = pd.DataFrame(step2.residuals, index=X.index[1:], columns=rframe.columns)
    fit = fit_yields(model, X, yields, yield_maturities, errs)
    fit.var_innovations = V
    return fit


# -- inference -------------------------------------------------------------------


def beta_variances(step2: ReturnRegression):
    """Diagonal HC0 sandwich variances of beta, shape K x N."""
    Z, E = step2.design, step2.residuals
    K = step2.beta.shape[0]
    bread = np.linalg.inv(Z.T @ Z)
    out = np.empty_like(step2.beta)
    for n in range(E.shape[1]):
        meat = (Z * E[:, n : n + 1] ** 2).T @ Z
        cov = bread @ meat @ bread
        out[:, n] = np.diag(cov)[1 : K + 1]
    return out


def wald_spanning(beta, var_beta):
    """Per factor ``W = sum_n beta_n^2 / var_n`` against chi2(N)."""
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    var_beta = np.atleast_2d(np.asarray(var_beta, dtype=float))
    if np.any(var_beta <= 0):
        raise InvalidInput("beta variances must be positive")
    W = (beta**2 / var_beta).sum(axis=1)
    return W, stats.chi2.sf(W, beta.shape[1])


def wald_prices(Lambda, var_Lambda):
    """Row-wise tests of ``[lambda0_i, lambda1_i]`` (chi2(K+1)) and ``lambda1_i`` (chi2(K)).

    ``var_Lambda`` is a list of (K+1)x(K+1) covariance matrices, one per row.
    """
    Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
    K = Lambda.shape[0]
    WL, WL1 = np.empty(K), np.empty(K)
    for i in range(K):
        cov = np.asarray(var_Lambda[i], dtype=float)
        row = Lambda[i]
        WL[i] = row @ np.linalg.lstsq(cov, row, rcond=None)[0]
        WL1[i] = row[1:] @ np.linalg.lstsq(cov[1:, 1:], row[1:], rcond=None)[0]
    return (WL, stats.chi2.sf(WL, K + 1)), (WL1, stats.chi2.sf(WL1, K))


def _circular_block_indices(T, block, rng):
    n_blocks = -(-T // block)
    starts = rng.integers(0, T, n_blocks)
    return ((starts[:, None] + np.arange(block)[None, :]) % T).ravel()[:T]


def lambda_bootstrap(X: pd.DataFrame, returns, zero_mean=True, B=999, block=12, seed=0, threads=1):
    """Covariances of each row of ``Lambda`` from a circular block bootstrap of residuals.

    Joint rows of VAR innovations and return errors are resampled in blocks;
    factors are rebuilt by the fitted VAR and returns by the step-two map.
    """
    rframe = returns.frame if isinstance(returns, ReturnPanel) else pd.DataFrame(returns)
    Xv = X.to_numpy(dtype=float)
    mu, Phi, Sigma, V = fit_var(Xv, zero_mean)
    rx = _returns_on(rframe, X.index)
    s2 = return_regression(rx, V, Xv[:-1])
    resid = np.column_stack([V, s2.residuals])
    T, K = V.shape

    def rep(b):
        g = _rng.stream(seed, b)
        idx = _circular_block_indices(T, block, g)
        Vb, Eb = resid[idx, :K], resid[idx, K:]
        Xb = np.empty_like(Xv)
        Xb[0] = Xv[0]
        for t in range(T):
            Xb[t + 1] = mu + Phi @ Xb[t] + Vb[t]
        _, _, Sb, Vhat = fit_var(Xb, zero_mean)
        rxb = s2.a + Vb @ s2.beta + Xb[:-1] @ s2.c.T + Eb
        r2 = return_regression(rxb, Vhat, Xb[:-1])
        l0, l1 = price_of_risk(r2.a, r2.beta, r2.c, Sb, r2.sigma2)
        return np.column_stack([l0, l1])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        draws = np.stack(_rng.parallel_map(rep, range(B), threads))
    return [np.cov(draws[:, i, :], rowvar=False) for i in range(K)], draws


def factor_contribution(fit: AtsmFit, factor):
    """Annualized contributions ``-(12/n) b_n[i] X_t[i]`` of one factor to yields, RN yields and TP."""
    i = fit.factors.columns.get_loc(factor) if not isinstance(factor, (int, np.integer)) else int(factor)
    n = np.asarray(fit.fitted_yields.columns, dtype=int)
    x = fit.factors.to_numpy(dtype=float)[:, i]
    m = fit.model
    y = -12.0 * np.outer(x, m.b[n - 1, i] / n)
    rn = -12.0 * np.outer(x, m.b_rn[n - 1, i] / n)
    cols = fit.fitted_yields.columns
    idx = fit.factors.index
    return pd.DataFrame(y, idx, cols), pd.DataFrame(rn, idx, cols), pd.DataFrame(y - rn, idx, cols)


def intercept_contribution(fit: AtsmFit):
    n = np.asarray(fit.fitted_yields.columns, dtype=int)
    return pd.Series(-12.0 * fit.model.a[n - 1] / n, index=fit.fitted_yields.columns)


def pricing_error_summary(errors: pd.DataFrame) -> pd.DataFrame:
    """Mean, sd, skewness, kurtosis and autocorrelations per maturity (errors in basis points)."""
    rows = {}
    for col in errors.columns:
        x = errors[col].dropna() * 1e4
        rows[col] = {
            "mean": x.mean(),
            "sd": x.std(ddof=1),
            "skew": x.skew(),
            "kurtosis": x.kurt() + 3.0,
            "rho1": x.autocorr(1),
            "rho6": x.autocorr(6),
        }
    return pd.DataFrame(rows)


class AffineTermStructureModel(BaseEstimator):
    """Three-step regression estimator.

    ``fit(X, returns, y1m=..., yields=...)`` with factors ``X`` (DataFrame),
    excess returns by maturity and the annualized one-month yield. After
    fitting, ``predict(X)`` gives annualized fitted yields.
    """

    def __init__(self, zero_mean=True, yield_maturities=STATE_MATURITIES, wald_reps=999, block=12, seed=0):
        self.zero_mean = zero_mean
        self.yield_maturities = yield_maturities
        self.wald_reps = wald_reps
        self.block = block
        self.seed = seed

    def fit(self, X, returns, y1m=None, yields=None):
        if y1m is None:
            raise InvalidInput("the one-month yield is required")
        X = pd.DataFrame(X)
        self.model_, self.step2_, _ = estimate(X, returns, y1m, self.zero_mean)
        self.model_.a, self.model_.b, self.model_.a_rn, self.model_.b_rn = yield_recursions(
            self.model_, max(self.yield_maturities))
        self.fit_ = fit_yields(self.model_, X, yields, list(self.yield_maturities) if yields is None else None)
        self.returns_ = returns
        self.X_ = X
        return self

    def predict(self, X):
        X = pd.DataFrame(X)
        return _yields_from(self.model_.a, self.model_.b, X.to_numpy(float), list(self.yield_maturities))

    def wald_tests(self, threads=1) -> pd.DataFrame:
        Wb, pb = wald_spanning(self.step2_.beta, beta_variances(self.step2_))
        covs, _ = lambda_bootstrap(self.X_, self.returns_, self.zero_mean, self.wald_reps, self.block, self.seed,
                                   threads)
        (WL, pL), (W1, p1) = wald_prices(self.model_.Lambda, covs)
        return pd.DataFrame({"W_beta": Wb, "p_beta": pb, "W_Lambda": WL, "p_Lambda": pL, "W_lambda1": W1,
                             "p_lambda1": p1}, index=self.X_.columns)
