"""Predictive regressions for bond excess returns.

In-sample regressions carry Newey-West (Bartlett kernel, no small-sample
correction, normal p-values) inference. Out-of-sample forecasts are
recursive over expanding or rolling windows and are evaluated with the
out-of-sample R^2, the Clark-West MSPE-adjusted test, and a parametric
yield-curve bootstrap that imposes no predictive power for the tail factor.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg, stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _rng
from .curve import ReturnPanel, YieldPanel, excess_returns
from .exceptions import AlignmentError, InsufficientData, InvalidInput, NumericalError, RankDeficient

logger = logging.getLogger(__name__)

SPECS = ("univ", "pc3", "pc5", "custom")
TR_NAME = "TR"


@dataclass
class RegressionResult:
    coefficients: np.ndarray
    nw_cov: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r2: float
    adj_r2: float
    residuals: np.ndarray
    nobs: int
    names: list = field(default_factory=list)
    X: np.ndarray | None = field(default=None, repr=False)
    y: np.ndarray | None = field(default=None, repr=False)
    nw_lags: int = 12

    @property
    def ssr(self) -> float:
        return float(self.residuals @ self.residuals)

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"coef": self.coefficients, "se": np.sqrt(np.diag(self.nw_cov)), "t": self.t_stats, "p": self.p_values},
            index=self.names or None,
        )


def check_full_rank(X, names=None):
    """Raise ``RankDeficient`` naming the columns a pivoted QR drops."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps * 10 if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < X.shape[1]:
        names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
        dropped = [names[i] for i in piv[rank:]]
        raise RankDeficient(f"design matrix is rank deficient; collinear columns: {', '.join(dropped)}", dropped)


def _hac_meat(U, lags):
    """Bartlett-weighted long-run covariance of score rows ``U`` (..., T, k)."""
    S = np.einsum("...ti,...tj->...ij", U, U)
    for j in range(1, lags + 1):
        w = 1.0 - j / (lags + 1.0)
        G = np.einsum("...ti,...tj->...ij", U[..., j:, :], U[..., :-j, :])
        S = S + w * (G + np.swapaxes(G, -1, -2))
    return S


def newey_west_cov(result, lags=12, X=None, residuals=None):
    """HAC sandwich ``(X'X)^-1 S (X'X)^-1`` with Bartlett weights ``1 - j/(L+1)``."""
    X = result.X if X is None else np.asarray(X, dtype=float)
    e = result.residuals if residuals is None else np.asarray(residuals, dtype=float)
    n = X.shape[0]
    if lags < 0:
        raise InvalidInput("lags must be >= 0")
    if lags >= n:
        raise InvalidInput(f"lags ({lags}) must be below the sample size ({n})")
    bread = np.linalg.inv(X.T @ X)
    cov = bread @ _hac_meat(X * e[:, None], lags) @ bread
    return 0.5 * (cov + cov.T)


def ols(y, X, names=None, nw_lags=12) -> RegressionResult:
    """OLS with Newey-West covariance; ``X`` must already hold the intercept."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.size != n:
        raise InvalidInput("y and X have different numbers of rows")
    if n <= k:
        raise InsufficientData(f"need more observations ({n}) than regressors ({k})")
    check_full_rank(X, names)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ssr = resid @ resid
    tss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ssr / tss if tss > 0 else (1.0 if ssr == 0 else 0.0)
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if n > k else np.nan
    res = RegressionResult(coef, np.zeros((k, k)), np.zeros(k), np.ones(k), float(r2), float(adj), resid, n,
                           list(names) if names is not None else [], X, y, nw_lags)
    res.nw_cov = newey_west_cov(res, nw_lags)
    se = np.sqrt(np.clip(np.diag(res.nw_cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.sign(coef) * np.inf))
    res.t_stats = t
    res.p_values = 2.0 * stats.norm.sf(np.abs(t))
    return res


class PredictiveRegression(BaseEstimator, RegressorMixin):
    """Linear regression with an intercept and Newey-West inference."""

    def __init__(self, nw_lags=12):
        self.nw_lags = nw_lags

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        design = np.column_stack([np.ones(len(X)), X])
        self.result_ = ols(y, design, ["const"] + [f"x{i}" for i in range(X.shape[1])], self.nw_lags)
        self.intercept_ = self.result_.coefficients[0]
        self.coef_ = self.result_.coefficients[1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.intercept_ + check_array(X) @ self.coef_


def spec_columns(spec, predictors, tr_name=TR_NAME):
    if spec == "univ":
        cols = [tr_name]
    elif spec == "pc3":
        cols = [tr_name, "PC1", "PC2", "PC3"]
    elif spec == "pc5":
        cols = [tr_name, "PC1", "PC2", "PC3", "PC4", "PC5"]
    elif spec == "custom":
        cols = [tr_name] + [c for c in predictors.columns if c != tr_name]
    else:
        raise InvalidInput(f"unknown spec {spec!r}; choose from {SPECS}")
    missing = [c for c in cols if c not in predictors.columns]
    if missing:
        raise InvalidInput(f"predictors lack columns {missing}")
    return cols


def align(returns, predictors):
    """Pair predictors dated ``t`` with returns dated ``t+1`` (calendar months).

    Rows with any missing value are dropped listwise.
    """
    rframe = returns.frame if isinstance(returns, ReturnPanel) else pd.DataFrame(returns)
    pframe = pd.DataFrame(predictors)
    rp = pd.DatetimeIndex(rframe.index).to_period("M")
    pp = pd.DatetimeIndex(pframe.index).to_period("M")
    if rp.has_duplicates or pp.has_duplicates:
        raise AlignmentError("duplicate months in returns or predictors")
    shifted = pframe.copy()
    shifted.index = pp + 1
    left = rframe.copy()
    left.index = rp
    joined = left.join(shifted, how="inner", rsuffix="_pred")
    if joined.empty:
        raise AlignmentError("no month t predictors line up with month t+1 returns")
    joined = joined.dropna()
    joined.index = pd.DatetimeIndex(rframe.index)[rp.get_indexer(joined.index)]
    return joined[list(rframe.columns)], joined[[c for c in joined.columns if c not in rframe.columns]]


@dataclass
class PredictiveResults:
    spec: str
    results: dict
    restricted: dict
    f_stats: dict
    f_pvalues: dict
    columns: list

    def table(self, bh_pvalues=None) -> pd.DataFrame:
        rows = {}
        for n, res in self.results.items():
            col = {
                "coef_TR": res.coefficients[1],
                "p_nw": res.p_values[1],
                "adj_r2": res.adj_r2,
                "adj_r2_no_TR": self.restricted[n].adj_r2,
                "f_stat": self.f_stats[n],
                "f_pvalue": self.f_pvalues[n],
            }
            if bh_pvalues is not None:
                col["p_bh"] = bh_pvalues.get(n, np.nan)
            rows[n] = col
        return pd.DataFrame(rows)


def predictive_regression(returns, predictors, spec="univ", nw_lags=12, tr_name=TR_NAME) -> PredictiveResults:
    """Per-maturity regressions of next-month returns on the tail factor (+ PCs).

    Also reports the F-test of the restriction that drops the tail factor.
    """
    cols = spec_columns(spec, pd.DataFrame(predictors), tr_name)
    Y, P = align(returns, pd.DataFrame(predictors)[cols])
    X = np.column_stack([np.ones(len(P)), P.to_numpy(dtype=float)])
    names = ["const"] + cols
    check_full_rank(X, names)
    Xr = np.delete(X, 1, axis=1)
    results, restricted, fstat, fp = {}, {}, {}, {}
    n, k = X.shape
    for m in Y.columns:
        y = Y[m].to_numpy(dtype=float)
        res = ols(y, X, names, nw_lags)
        rres = ols(y, Xr, [c for c in names if c != tr_name], nw_lags)
        F = (rres.ssr - res.ssr) / (res.ssr / (n - k)) if res.ssr > 0 else np.inf
        results[m], restricted[m] = res, rres
        fstat[m] = float(F)
        fp[m] = float(stats.f.sf(F, 1, n - k))
    return PredictiveResults(spec, results, restricted, fstat, fp, cols)


# -- out-of-sample -----------------------------------------------------------


@dataclass
class OosForecast:
    spec: str
    window: str
    frames: dict  # maturity -> DataFrame(realized, model, benchmark)

    def realized(self, n):
        return self.frames[n]["realized"].to_numpy()

    def model(self, n):
        return self.frames[n]["model"].to_numpy()

    def benchmark(self, n):
        return self.frames[n]["benchmark"].to_numpy()


def _pc_scores(Y, k):
    Yc = Y - Y.mean(axis=0)
    evals, evecs = np.linalg.eigh(Yc.T @ Yc)
    L = evecs[:, ::-1][:, :k]
    s = np.sign(L.sum(axis=0))
    s[s == 0] = 1.0
    return Yc @ (L * s)


def _window_bounds(j, start, window):
    return (0, j) if window == "expanding" else (j - start, j)


def recursive_forecasts(R, X_model, X_bench, start, window="expanding", pc_yields=None, n_pcs=0):
    """Core recursive engine on arrays.

    ``R`` (T, M) are returns realized at row ``i``'s target date and ``X_*``
    (T, k) the matching time-``t`` predictors without intercept; ``None`` for
    ``X_bench`` means the recursive historical mean. When ``pc_yields`` is
    given, ``n_pcs`` principal components are re-estimated in every window
    from the yields of rows ``lo..j`` and appended to both designs.
    Returns model and benchmark forecasts for rows ``start..T-1``.
    """
    T, M = R.shape
    fm = np.empty((T - start, M))
    fb = np.empty((T - start, M))
    for j in range(start, T):
        lo, hi = _window_bounds(j, start, window)
        xm = X_model[lo : j + 1]
        xb = None if X_bench is None else X_bench[lo : j + 1]
        if pc_yields is not None and n_pcs:
            pcs = _pc_scores(pc_yields[lo : j + 1], n_pcs)
            xm = np.column_stack([xm, pcs])
            xb = pcs if xb is None else np.column_stack([xb, pcs])
        rows = slice(0, hi - lo)
        y = R[lo:hi]
        dm = np.column_stack([np.ones(xm.shape[0]), xm])
        coef, *_ = np.linalg.lstsq(dm[rows], y, rcond=None)
        fm[j - start] = dm[-1] @ coef
        if xb is None or xb.shape[1] == 0:
            fb[j - start] = y.mean(axis=0)
        else:
            db = np.column_stack([np.ones(xb.shape[0]), xb])
            cb, *_ = np.linalg.lstsq(db[rows], y, rcond=None)
            fb[j - start] = db[-1] @ cb
    return fm, fb


def _first_forecast_row(dates, split):
    split_p = pd.Timestamp(split).to_period("M")
    periods = pd.DatetimeIndex(dates).to_period("M")
    start = int(np.searchsorted(periods.asi8, split_p.ordinal))
    if start <= 0 or start >= len(periods):
        raise InvalidInput(f"split {split} must fall strictly inside the sample")
    return start


def oos_forecast(returns, predictors, spec="univ", window="expanding", split=None, yields=None, pcs="recursive",
                 tr_name=TR_NAME, pc_maturities=None) -> OosForecast:
    """Recursive one-month-ahead forecasts for the model and its benchmark.

    ``split`` is the first target month of the evaluation period; rolling
    windows keep the initial training length. With ``pcs="recursive"`` and a
    yield panel, the PC controls are re-extracted inside every window.
    """
    if window not in ("expanding", "rolling"):
        raise InvalidInput("window must be expanding or rolling")
    pframe = pd.DataFrame(predictors)
    n_pcs = {"univ": 0, "pc3": 3, "pc5": 5}.get(spec, 0)
    recursive = n_pcs > 0 and pcs == "recursive"
    if recursive:
        if yields is None:
            raise InvalidInput("recursive PCs need the yield panel")
        ypanel = yields.frame if isinstance(yields, YieldPanel) else pd.DataFrame(yields)
        ycols = pc_maturities or default_pc_maturities(ypanel.columns)
        ytab = ypanel[list(ycols)].add_prefix("_y")
        base = pframe[[tr_name]].join(ytab, how="inner")
        Y, P = align(returns, base)
        X_model = P[[tr_name]].to_numpy(float)
        X_bench = np.empty((len(P), 0))
        pc_y = P[[c for c in P.columns if str(c).startswith("_y")]].to_numpy(float)
        cols = [tr_name]
    else:
        cols = spec_columns(spec, pframe, tr_name)
        Y, P = align(returns, pframe[cols])
        X_model = P.to_numpy(float)
        bench_cols = [c for c in cols if c != tr_name]
        X_bench = P[bench_cols].to_numpy(float) if bench_cols else None
        pc_y = None
    start = _first_forecast_row(Y.index, split)
    k = len(cols) + (n_pcs if recursive else 0)
    if start < k + 2:
        raise InsufficientData(f"training window of {start} rows is too short for {k} predictors")
    R = Y.to_numpy(float)
    fm, fb = recursive_forecasts(R, X_model, X_bench, start, window, pc_y, n_pcs if recursive else 0)
    idx = Y.index[start:]
    frames = {
        m: pd.DataFrame({"realized": R[start:, i], "model": fm[:, i], "benchmark": fb[:, i]}, index=idx)
        for i, m in enumerate(Y.columns)
    }
    return OosForecast(spec, window, frames)


def default_pc_maturities(columns):
    cols = [c for c in columns if c % 3 == 0 and 3 <= c <= 120]
    return cols if len(cols) >= 5 else list(columns)


def _check_aligned(*arrays):
    arrs = [np.asarray(a, dtype=float).ravel() for a in arrays]
    if len({a.size for a in arrs}) != 1:
        raise AlignmentError("forecast and realized series differ in length")
    if arrs[0].size == 0:
        raise InvalidInput("empty forecast series")
    return arrs


def r2_os(model_fcsts, bench_fcsts, realized) -> float:
    m, b, r = _check_aligned(model_fcsts, bench_fcsts, realized)
    den = ((r - b) ** 2).sum()
    if den == 0:
        raise NumericalError("benchmark has zero squared error; R2_OS undefined")
    return float(1.0 - ((r - m) ** 2).sum() / den)


def cw_terms(model_fcsts, bench_fcsts, realized):
    m, b, r = _check_aligned(model_fcsts, bench_fcsts, realized)
    return (r - b) ** 2 - ((r - m) ** 2 - (b - m) ** 2)


def clark_west(model_fcsts, bench_fcsts, realized, nw_lags=12):
    """Clark-West statistic: NW t-stat of the mean adjusted loss differential.

    Returns ``(t_stat, one_sided_upper_p)``.
    """
    cw = cw_terms(model_fcsts, bench_fcsts, realized)
    if cw.size < nw_lags + 2:
        raise InsufficientData(f"need at least {nw_lags + 2} forecasts")
    if np.ptp(cw) == 0:
        raise NumericalError("Clark-West series has zero variance")
    res = ols(cw, np.ones((cw.size, 1)), ["const"], nw_lags)
    t = float(res.t_stats[0])
    return t, float(stats.norm.sf(t))


def dcspe(model_fcsts, bench_fcsts, realized):
    """Cumulative (benchmark squared error - model squared error)."""
    m, b, r = _check_aligned(model_fcsts, bench_fcsts, realized)
    return np.cumsum((r - b) ** 2 - (r - m) ** 2)


@dataclass
class OosEval:
    forecasts_model: pd.Series
    forecasts_benchmark: pd.Series
    realized: pd.Series
    r2_os: float
    cw_stat: float
    cw_p_nw: float
    cw_p_boot: float = np.nan
    r2_p_boot: float = np.nan

    @property
    def dcspe(self):
        return pd.Series(dcspe(self.forecasts_model, self.forecasts_benchmark, self.realized), index=self.realized.index)


def evaluate_oos(forecast: OosForecast, nw_lags=12, cw_boot=None, r2_boot=None) -> dict:
    """Per-maturity ``OosEval``; bootstrap p-values are taken from ``BootstrapResult``s when given."""
    out = {}
    for n, f in forecast.frames.items():
        stat, p = clark_west(f["model"], f["benchmark"], f["realized"], nw_lags)
        out[n] = OosEval(
            f["model"], f["benchmark"], f["realized"],
            r2_os(f["model"], f["benchmark"], f["realized"]), stat, p,
            cw_boot.pvalues.get(n, np.nan) if cw_boot is not None else np.nan,
            r2_boot.pvalues.get(n, np.nan) if r2_boot is not None else np.nan,
        )
    return out


def oos_table(evals: dict) -> pd.DataFrame:
    rows = {
        n: {"r2_os_pct": 100 * e.r2_os, "cw_stat": e.cw_stat, "cw_p_nw": e.cw_p_nw, "cw_p_boot": e.cw_p_boot,
            "r2_p_boot": e.r2_p_boot}
        for n, e in evals.items()
    }
    return pd.DataFrame(rows)


# -- parametric yield-curve bootstrap ------------------------------------------


@dataclass
class BootstrapResult:
    stat: str
    observed: dict
    pvalues: dict
    draws: np.ndarray
    maturities: list
    B: int


def bootstrap_pvalue(observed, draws, two_sided=False):
    """Add-one p-value ``(1 + #{draw >= observed}) / (B + 1)``."""
    draws = np.asarray(draws, dtype=float)
    if two_sided:
        hits = np.sum(np.abs(draws) >= abs(observed))
    else:
        hits = np.sum(draws >= observed)
    return float((1 + hits) / (draws.size + 1))


def _fit_var1(Z):
    """OLS VAR(1) with intercept; rows are dates."""
    X = np.column_stack([np.ones(len(Z) - 1), Z[:-1]])
    coef, *_ = np.linalg.lstsq(X, Z[1:], rcond=None)
    resid = Z[1:] - X @ coef
    c, Phi = coef[0], coef[1:].T
    rho = np.max(np.abs(np.linalg.eigvals(Phi))) if Phi.size else 0.0
    if rho >= 1.0:
        warnings.warn(f"fitted VAR is not stable (spectral radius {rho:.4f}); shrinking by 0.99/rho", stacklevel=3)
        Phi = Phi * (0.99 / rho)
        resid = Z[1:] - c - Z[:-1] @ Phi.T
    return c, Phi, resid


def _simulate_var(c, Phi, z0, shocks):
    """Vectorized VAR(1) paths; ``shocks`` (B, T-1, K) -> (B, T, K)."""
    B, T1, K = shocks.shape
    out = np.empty((B, T1 + 1, K))
    out[:, 0] = z0
    for t in range(T1):
        out[:, t + 1] = c + out[:, t] @ Phi.T + shocks[:, t]
    return out


def _batched_pcs(Y, k):
    Yc = Y - Y.mean(axis=1, keepdims=True)
    cov = np.einsum("bti,btj->bij", Yc, Yc)
    _, evecs = np.linalg.eigh(cov)
    L = evecs[:, :, ::-1][:, :, :k]
    s = np.sign(L.sum(axis=1, keepdims=True))
    s[s == 0] = 1.0
    return np.einsum("bti,bik->btk", Yc, L * s)


def _batched_nw_t(X, Y, lags, col=1):
    """NW t-stats of coefficient ``col`` for every column of ``Y``; (B, M)."""
    XtX = np.einsum("btk,btl->bkl", X, X)
    coef = np.linalg.solve(XtX, np.einsum("btk,btm->bkm", X, Y))
    E = Y - np.einsum("btk,bkm->btm", X, coef)
    bread = np.linalg.inv(XtX)
    out = np.empty((X.shape[0], Y.shape[2]))
    for m in range(Y.shape[2]):
        U = X * E[:, :, m : m + 1]
        S = _hac_meat(U, lags)
        cov = bread @ S @ bread
        out[:, m] = coef[:, col, m] / np.sqrt(cov[:, col, col])
    return out


class _YieldModel:
    """Factor structure, factor VAR and independent AR(1) for the tail series."""

    def __init__(self, yields: pd.DataFrame, tr: np.ndarray, n_factors, pc_cols):
        Y = yields.to_numpy(float)
        self.columns = list(yields.columns)
        pc_idx = [self.columns.index(c) for c in pc_cols]
        scores = _pc_scores(Y[:, pc_idx], n_factors)
        design = np.column_stack([np.ones(len(Y)), scores])
        coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
        self.intercept, self.loadings = coef[0], coef[1:]
        self.meas_err = Y - design @ coef
        self.scores = scores
        self.c, self.Phi, self.var_resid = _fit_var1(scores)
        self.tr_mask = np.isfinite(tr)
        trf = np.where(self.tr_mask, tr, np.nan)
        pairs = self.tr_mask[1:] & self.tr_mask[:-1]
        x, y = trf[:-1][pairs], trf[1:][pairs]
        if x.size < 3:
            raise InsufficientData("tail series too short for its AR(1)")
        self.ar_c, self.ar_rho, self.ar_resid = self._fit_ar1(x, y)
        first = np.flatnonzero(self.tr_mask)[0]
        self.tr0 = trf[first]
        self.tr_first = first
        self.z0 = scores[0]
        self.T = len(Y)

    @staticmethod
    def _fit_ar1(x, y):
        X = np.column_stack([np.ones_like(x), x])
        (c, rho), *_ = np.linalg.lstsq(X, y, rcond=None)
        if abs(rho) >= 1.0:
            warnings.warn(f"tail AR(1) not stable (rho={rho:.4f}); shrinking by 0.99/|rho|", stacklevel=4)
            rho = rho * 0.99 / abs(rho)
        return c, rho, y - c - rho * x

    def simulate(self, seed, indices):
        """Artificial yields (B, T, N) and tail series (B, T) for replications ``indices``."""
        T = self.T
        nv, nw, nu = len(self.var_resid), len(self.ar_resid), len(self.meas_err)
        draws = []
        for b in indices:
            g = _rng.stream(seed, b)
            draws.append((g.integers(0, nv, T - 1), g.integers(0, nw, T - 1), g.integers(0, nu, T)))
        iv = np.stack([d[0] for d in draws])
        iw = np.stack([d[1] for d in draws])
        iu = np.stack([d[2] for d in draws])
        Z = _simulate_var(self.c, self.Phi, self.z0, self.var_resid[iv])
        Y = self.intercept + np.einsum("btk,kn->btn", Z, self.loadings) + self.meas_err[iu]
        B = len(indices)
        tr = np.empty((B, T))
        tr[:, : self.tr_first] = np.nan
        tr[:, self.tr_first] = self.tr0
        shocks = self.ar_resid[iw]
        for t in range(self.tr_first, T - 1):
            tr[:, t + 1] = self.ar_c + self.ar_rho * tr[:, t] + shocks[:, t]
        return Y, tr


class _StatEngine:
    """Computes a test statistic on (batches of) yield and tail arrays."""

    def __init__(self, columns, maturities, spec, stat, nw_lags, pc_cols, start=None, window="rolling",
                 pcs="full", tr_mask=None):
        self.cols = list(columns)
        self.maturities = list(maturities)
        self.spec, self.stat, self.nw_lags = spec, stat, nw_lags
        self.n_pcs = {"univ": 0, "pc3": 3, "pc5": 5}[spec]
        self.pc_idx = [self.cols.index(c) for c in pc_cols]
        self.i_n = [self.cols.index(n) for n in self.maturities]
        self.i_n1 = [self.cols.index(n - 1) for n in self.maturities]
        self.i_1 = self.cols.index(1)
        self.start, self.window, self.pcs = start, window, pcs
        self.tr_mask = tr_mask

    def returns(self, Y):
        n = np.array(self.maturities, dtype=float)
        return (-(n - 1) / 12.0 * Y[:, 1:, self.i_n1] + n / 12.0 * Y[:, :-1, self.i_n]
                - Y[:, :-1, [self.i_1]] / 12.0)

    def __call__(self, Y, tr):
        """Statistics of shape (B, M, n_stats)."""
        R = self.returns(Y)  # (B, T-1, M)
        rows = np.ones(R.shape[1], dtype=bool) if self.tr_mask is None else self.tr_mask[:-1].copy()
        if self.stat == ("coef_t",):
            parts = [np.ones(Y.shape[:2] + (1,)), tr[:, :, None]]
            if self.n_pcs:
                parts.append(_batched_pcs(Y[:, :, self.pc_idx], self.n_pcs))
            X = np.concatenate(parts, axis=2)[:, :-1][:, rows]
            return _batched_nw_t(X, R[:, rows], self.nw_lags, col=1)[:, :, None]
        out = np.empty((Y.shape[0], len(self.maturities), len(self.stat)))
        for b in range(Y.shape[0]):
            Rb = R[b][rows]
            xm = tr[b, :-1][rows][:, None]
            pc_y = None
            if self.n_pcs and self.pcs == "full":
                pcs = _pc_scores(Y[b][:, self.pc_idx], self.n_pcs)[:-1][rows]
                xm, xb = np.column_stack([xm, pcs]), pcs
            else:
                xb = np.empty((len(xm), 0)) if self.n_pcs else None
                if self.n_pcs:
                    pc_y = Y[b][:-1][rows][:, self.pc_idx]
            fm, fb = recursive_forecasts(Rb, xm, xb, self.start, self.window, pc_y,
                                         self.n_pcs if pc_y is not None else 0)
            r = Rb[self.start:]
            for i in range(r.shape[1]):
                for j, name in enumerate(self.stat):
                    if name == "r2_os":
                        out[b, i, j] = r2_os(fm[:, i], fb[:, i], r[:, i])
                    else:
                        cw = cw_terms(fm[:, i], fb[:, i], r[:, i])
                        out[b, i, j] = ols(cw, np.ones((cw.size, 1)), None, self.nw_lags).t_stats[0]
        return out


def bh_bootstrap(returns, yields, tr_series, spec="univ", stat="coef_t", B=5000, seed=0, n_factors=3, nw_lags=12,
                 oos_split=None, window="rolling", pcs="full", pc_maturities=None, threads=1,
                 batch_size=256) -> BootstrapResult:
    """Bootstrap p-values under the null that yields carry all predictive information.

    Yields follow a ``n_factors`` PC factor structure with a VAR(1) for the
    factors and iid-resampled measurement errors; the tail series follows an
    independent AR(1). Innovations are resampled from the fitted residuals.
    Replication ``b`` draws from its own counter-based stream, so the
    p-values do not depend on ``threads`` or ``batch_size``.

    ``returns`` only selects the maturities (its columns, or a sequence of
    maturities); returns are always rebuilt from ``yields`` so the observed
    and simulated statistics share one construction. ``stat`` may be a
    tuple of out-of-sample statistics (``("cw", "r2_os")``) to get a dict of
    results from one set of simulated forecasts.
    """
    if B < 100:
        raise InvalidInput(f"B must be at least 100, got {B}")
    stats_ = (stat,) if isinstance(stat, str) else tuple(stat)
    if not stats_ or any(st not in ("coef_t", "cw", "r2_os") for st in stats_):
        raise InvalidInput(f"unknown statistic {stat!r}")
    if "coef_t" in stats_ and len(stats_) > 1:
        raise InvalidInput("coef_t cannot be combined with out-of-sample statistics")
    frame = yields.frame if isinstance(yields, YieldPanel) else pd.DataFrame(yields)
    if isinstance(returns, ReturnPanel):
        returns = returns.frame
    maturities = [int(n) for n in (returns.columns if isinstance(returns, pd.DataFrame) else returns)]
    if any(n < 2 for n in maturities):
        raise InvalidInput("return maturities must be at least 2 months")
    pc_cols = list(pc_maturities or default_pc_maturities(frame.columns))
    needed = sorted({1, *pc_cols, *maturities, *(n - 1 for n in maturities)})
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise InvalidInput(f"yield panel lacks maturities {missing}")
    frame = frame[needed]
    trs = pd.Series(tr_series, dtype=float)
    trs.index = pd.DatetimeIndex(trs.index).to_period("M")
    tr = trs.reindex(pd.DatetimeIndex(frame.index).to_period("M")).to_numpy()

    start = None
    if stats_ != ("coef_t",):
        if oos_split is None:
            raise InvalidInput("out-of-sample statistics need oos_split")
        mask = np.isfinite(tr[:-1])
        ret_dates = pd.DatetimeIndex(frame.index[1:])[mask]
        start = _first_forecast_row(ret_dates, oos_split)

    model = _YieldModel(frame, tr, n_factors, pc_cols)
    engine = _StatEngine(needed, maturities, spec, stats_, nw_lags, pc_cols, start, window, pcs, model.tr_mask)
    observed = engine(frame.to_numpy(float)[None], tr[None])[0]

    batches = [list(range(i, min(i + batch_size, B))) for i in range(0, B, batch_size)]

    def run(batch):
        Y, t = model.simulate(seed, batch)
        return engine(Y, t)

    draws = np.concatenate(_rng.parallel_map(run, batches, threads), axis=0)
    results = {}
    for j, name in enumerate(stats_):
        two_sided = name == "coef_t"
        pvals = {n: bootstrap_pvalue(observed[i, j], draws[:, i, j], two_sided) for i, n in enumerate(maturities)}
        results[name] = BootstrapResult(name, dict(zip(maturities, observed[:, j].tolist())), pvals, draws[:, :, j],
                                        maturities, B)
    return results[stat] if isinstance(stat, str) else results
