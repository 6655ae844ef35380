"""Yield panels, Nelson-Siegel-Svensson curves, excess returns and PCA.

Units: yields are annualized continuously compounded decimals, maturities
are in months, and one-month excess log-returns are monthly decimals.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import FitFailed, InsufficientData, InvalidInput, RankDeficient, SchemaError, ValidationError


def _month_periods(index) -> pd.PeriodIndex:
    return pd.DatetimeIndex(index).to_period("M")


@dataclass(frozen=True)
class YieldPanel:
    """Dates x maturities grid of yields; columns are maturities in months."""

    frame: pd.DataFrame

    def __post_init__(self):
        frame = self.frame.copy()
        frame.index = pd.DatetimeIndex(frame.index)
        frame.columns = [int(c) for c in frame.columns]
        if list(frame.columns) != sorted(set(frame.columns)):
            raise ValidationError("maturities must be strictly increasing")
        if frame.isna().to_numpy().any():
            bad = frame.index[frame.isna().any(axis=1)]
            raise ValidationError(f"missing yields on {len(bad)} dates, first {bad[0].date()}")
        if not frame.index.is_monotonic_increasing or frame.index.has_duplicates:
            raise ValidationError("dates must be strictly increasing")
        object.__setattr__(self, "frame", frame.astype(float))

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.frame.index

    @property
    def maturities(self) -> list[int]:
        return list(self.frame.columns)

    @property
    def yields(self) -> np.ndarray:
        return self.frame.to_numpy()

    def select(self, maturities) -> "YieldPanel":
        missing = [m for m in maturities if m not in self.frame.columns]
        if missing:
            raise SchemaError(f"yield panel lacks maturities {missing}")
        return YieldPanel(self.frame[list(maturities)])

    def between(self, start=None, end=None) -> "YieldPanel":
        return YieldPanel(self.frame.loc[start:end])


@dataclass(frozen=True)
class ReturnPanel:
    """One-month excess log-returns stamped at the end of the holding month.

    Column ``n`` holds the return from buying the ``n``-month bond at ``t``
    and selling it as an ``n-1``-month bond at ``t+1``.
    """

    frame: pd.DataFrame

    @property
    def dates(self):
        return self.frame.index

    @property
    def maturities(self):
        return list(self.frame.columns)

    @property
    def returns(self) -> np.ndarray:
        return self.frame.to_numpy()


@dataclass(frozen=True)
class NssParams:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    tau1: float
    tau2: float

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise InvalidInput("NSS decay parameters tau1, tau2 must be positive")

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2, self.beta3])


@dataclass(frozen=True)
class PcaResult:
    loadings: np.ndarray
    scores: pd.DataFrame
    eigenvalues: np.ndarray
    means: np.ndarray
    maturities: list = field(default_factory=list)


def _g(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2.0, -np.expm1(-safe) / safe)


def _nss_basis(n, tau1, tau2):
    n = np.asarray(n, dtype=float)
    x1, x2 = n / tau1, n / tau2
    g1, g2 = _g(x1), _g(x2)
    return np.column_stack([np.ones_like(n), g1, g1 - np.exp(-x1), g2 - np.exp(-x2)])


def nss_yield(params: NssParams, n):
    """NSS yield at maturity ``n`` in years (scalar or array)."""
    arr = np.asarray(n, dtype=float)
    if np.any(arr <= 0):
        raise InvalidInput("maturity must be positive")
    out = _nss_basis(np.atleast_1d(arr), params.tau1, params.tau2) @ params.betas
    return float(out[0]) if arr.ndim == 0 else out


def nss_panel(dates, params: Sequence[NssParams], maturities_months) -> YieldPanel:
    maturities_months = [int(m) for m in maturities_months]
    years = np.array(maturities_months) / 12.0
    rows = [nss_yield(p, years) for p in params]
    return YieldPanel(pd.DataFrame(np.vstack(rows), index=pd.DatetimeIndex(dates), columns=maturities_months))


NSS_TAU1_GRID = (0.5, 1.0, 2.0, 5.0)
NSS_TAU2_GRID = (5.0, 10.0, 15.0)


def _profile_betas(n, y, tau1, tau2):
    basis = _nss_basis(n, tau1, tau2)
    beta, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = y - basis @ beta
    return beta, float(resid @ resid)


def fit_nss(maturities, yields) -> NssParams:
    """Least-squares NSS fit.

    Betas are profiled out by linear least squares for fixed decays; the two
    decays start from a fixed grid and are refined by Levenberg-Marquardt on
    their logs. The best start wins by residual sum of squares, then by the
    smaller ``tau1``.
    """
    n = np.asarray(maturities, dtype=float)
    y = np.asarray(yields, dtype=float)
    if n.shape != y.shape or n.ndim != 1:
        raise InvalidInput("maturities and yields must be 1-d and the same length")
    if np.unique(n).size < 6:
        raise InsufficientData("NSS needs at least 6 distinct maturities")
    if np.any(n <= 0) or not np.all(np.isfinite(y)):
        raise InvalidInput("maturities must be positive and yields finite")

    def resid(logtau):
        t1, t2 = np.exp(logtau)
        basis = _nss_basis(n, t1, t2)
        beta, *_ = np.linalg.lstsq(basis, y, rcond=None)
        return y - basis @ beta

    candidates, diagnostics = [], []
    for t1, t2 in itertools.product(NSS_TAU1_GRID, NSS_TAU2_GRID):
        _, grid_rss = _profile_betas(n, y, t1, t2)
        best = (grid_rss, t1, t2)
        try:
            sol = least_squares(resid, np.log([t1, t2]), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
            r1, r2 = np.exp(sol.x)
            if np.all(np.isfinite(sol.x)) and 1e-3 < r1 < 1e3 and 1e-3 < r2 < 1e3:
                _, rss = _profile_betas(n, y, r1, r2)
                if np.isfinite(rss) and rss <= grid_rss:
                    best = (rss, r1, r2)
        except (ValueError, np.linalg.LinAlgError) as exc:
            diagnostics.append(f"start ({t1}, {t2}): {exc}")
        if np.isfinite(best[0]):
            candidates.append(best)
    if not candidates:
        raise FitFailed("NSS fit failed on every start", diagnostics)
    candidates.sort(key=lambda c: (c[0], c[1]))
    rss, t1, t2 = candidates[0]
    beta, _ = _profile_betas(n, y, t1, t2)
    return NssParams(*beta, t1, t2)


class NelsonSiegelSvensson(BaseEstimator, RegressorMixin):
    """Estimator wrapper: ``fit(maturities_years, yields)``, ``predict(maturities_years)``."""

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False).ravel()
        self.params_ = fit_nss(X, np.asarray(y, dtype=float))
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, ensure_2d=False).ravel()
        return nss_yield(self.params_, X)


def check_consecutive_months(index, what="panel"):
    periods = _month_periods(index)
    gaps = np.flatnonzero(np.diff(periods.asi8) != 1)
    if gaps.size:
        raise ValidationError(f"{what} is not monthly-consecutive; first gap after {periods[gaps[0]]}")


def excess_returns(panel: YieldPanel, maturities=None) -> ReturnPanel:
    """One-month excess log-returns.

    ``rx[t+1, n] = -(n-1)/12 * y[t+1, n-1] + n/12 * y[t, n] - y[t, 1]/12``,
    requiring maturities ``n``, ``n-1`` and 1 month in the panel.
    """
    frame = panel.frame
    if maturities is None:
        maturities = [m for m in frame.columns if m >= 2 and (m - 1) in frame.columns]
    maturities = [int(m) for m in maturities]
    if 1 not in frame.columns:
        raise SchemaError("excess returns need the 1-month yield")
    missing = sorted({m for n in maturities for m in (n, n - 1) if m not in frame.columns})
    if missing:
        raise SchemaError(f"excess returns need maturities {missing}")
    if len(frame) < 2:
        raise InsufficientData("need at least two dates for returns")
    check_consecutive_months(frame.index, "yield panel")
    y = frame
    out = {}
    for n in maturities:
        out[n] = (
            -(n - 1) / 12.0 * y[n - 1].to_numpy()[1:]
            + n / 12.0 * y[n].to_numpy()[:-1]
            - y[1].to_numpy()[:-1] / 12.0
        )
    return ReturnPanel(pd.DataFrame(out, index=frame.index[1:], columns=maturities))


def descriptive_stats(frame: pd.DataFrame, periods_per_year=12) -> pd.DataFrame:
    """Table-1 style statistics; means and volatilities in annualized percent."""
    rows = {}
    for col in frame.columns:
        x = frame[col].dropna()
        mean = x.mean() * 100 * periods_per_year
        sd = x.std(ddof=1) * 100 * np.sqrt(periods_per_year)
        rows[col] = {
            "mean": mean,
            "sd": sd,
            "skew": x.skew(),
            "kurtosis": x.kurt() + 3.0,
            "rho1": x.autocorr(1),
            "rho6": x.autocorr(6),
            "rho12": x.autocorr(12),
            "sr": mean / sd if sd > 0 else np.nan,
        }
    return pd.DataFrame(rows)


def pca(panel, k: int) -> PcaResult:
    """Principal components of the yield covariance matrix.

    Loadings are flipped so that each column sums to a positive number.
    """
    frame = panel.frame if isinstance(panel, YieldPanel) else pd.DataFrame(panel)
    Y = frame.to_numpy(dtype=float)
    t, m = Y.shape
    if not 1 <= k <= m:
        raise InvalidInput(f"k must be in [1, {m}]")
    if t <= k:
        raise InsufficientData("sample length must exceed the number of components")
    means = Y.mean(axis=0)
    Yc = Y - means
    cov = Yc.T @ Yc / (t - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals[0], 0.0) * m * np.finfo(float).eps * 10
    if evals[0] <= 0 or evals[k - 1] <= tol:
        raise RankDeficient(f"yield covariance has rank below {k}")
    loadings = evecs[:, :k].copy()
    signs = np.sign(loadings.sum(axis=0))
    signs[signs == 0] = 1.0
    loadings *= signs
    scores = pd.DataFrame(Yc @ loadings, index=frame.index, columns=[f"PC{i + 1}" for i in range(k)])
    return PcaResult(loadings, scores, evals.copy(), means, list(frame.columns))


class YieldPCA(BaseEstimator, TransformerMixin):
    """Covariance PCA of yields with the positive-sum sign convention."""

    def __init__(self, n_components=3):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X)
        res = pca(pd.DataFrame(X), self.n_components)
        self.components_ = res.loadings.T
        self.mean_ = res.means
        self.explained_variance_ = res.eigenvalues[: self.n_components]
        self.eigenvalues_ = res.eigenvalues
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X)
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z) @ self.components_ + self.mean_


def _as_factor(factor, index):
    if isinstance(factor, pd.Series):
        if not pd.DatetimeIndex(factor.index).equals(pd.DatetimeIndex(index)):
            raise ValidationError("factor dates do not match the panel")
        return factor.to_numpy(dtype=float)
    arr = np.asarray(factor, dtype=float).ravel()
    if arr.size != len(index):
        raise ValidationError("factor length does not match the panel")
    return arr


def orthogonalize(panel, factor):
    """Remove each maturity's linear exposure to ``factor``, keeping its mean.

    The output is ``y - b * (f - mean(f))`` with ``b`` the OLS slope of ``y``
    on a constant and ``f``; it has zero sample covariance with ``f``.
    """
    frame = panel.frame if isinstance(panel, YieldPanel) else pd.DataFrame(panel)
    f = _as_factor(factor, frame.index)
    fc = f - f.mean()
    ss = fc @ fc
    if not ss > 1e-300 or np.ptp(f) == 0:
        raise RankDeficient("factor is constant; collinear with the intercept", ["factor"])
    Y = frame.to_numpy(dtype=float)
    slopes = fc @ (Y - Y.mean(axis=0)) / ss
    out = pd.DataFrame(Y - np.outer(fc, slopes), index=frame.index, columns=frame.columns)
    return YieldPanel(out) if isinstance(panel, YieldPanel) else out


class FactorOrthogonalizer(BaseEstimator, TransformerMixin):
    """``fit(Y, factor)`` learns per-column slopes; ``transform`` removes them."""

    def fit(self, X, y):
        X = check_array(X)
        f = np.asarray(y, dtype=float).ravel()
        fc = f - f.mean()
        ss = fc @ fc
        if not ss > 0:
            raise RankDeficient("factor is constant; collinear with the intercept", ["factor"])
        self.factor_mean_ = f.mean()
        self.coef_ = fc @ (X - X.mean(axis=0)) / ss
        return self

    def transform(self, X, y=None):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if y is None:
            raise ValidationError("transform needs the factor values")
        f = np.asarray(y, dtype=float).ravel()
        return X - np.outer(f - self.factor_mean_, self.coef_)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X, y)


def standardize(series):
    """Zero mean, unit sample variance (``ddof=1``)."""
    if isinstance(series, pd.DataFrame):
        return series.apply(standardize)
    values = np.asarray(series, dtype=float)
    mean = values.mean()
    centred = values - mean
    var = centred @ centred / (values.size - 1) if values.size > 1 else 0.0
    if not var > 0:
        raise InvalidInput("cannot standardize a constant series")
    out = centred / np.sqrt(var)
    if isinstance(series, pd.Series):
        return pd.Series(out, index=series.index, name=series.name)
    return out


@dataclass(frozen=True)
class CpFactor:
    factor: pd.Series
    coefficients: np.ndarray
    r2: float
    forwards: pd.DataFrame


CP_YEARS = (1, 2, 3, 4, 5)


def forward_rates(panel: YieldPanel) -> pd.DataFrame:
    """One-year forwards ``n*y(n) - (n-1)*y(n-1)`` for n = 2..5 years, plus y(1y)."""
    needed = [12 * n for n in CP_YEARS]
    missing = [m for m in needed if m not in panel.frame.columns]
    if missing:
        raise SchemaError(f"forward rates need maturities {missing}")
    y = panel.frame
    out = {"y1": y[12]}
    for n in CP_YEARS[1:]:
        out[f"f{n}"] = n * y[12 * n] - (n - 1) * y[12 * (n - 1)]
    return pd.DataFrame(out)


def cp_factor(panel: YieldPanel, returns: ReturnPanel | None = None, return_maturities=(24, 36, 48, 60)) -> CpFactor:
    """Return-forecasting factor built from a linear combination of forwards.

    The cross-maturity average of next-month excess returns is regressed on
    a constant and the five forward rates; the fitted values (defined on
    every date of the panel) are the factor.
    """
    fwd = forward_rates(panel)
    if returns is None:
        returns = excess_returns(panel, return_maturities)
    avg = returns.frame[list(return_maturities)].mean(axis=1)
    origin = avg.copy()
    origin.index = _month_periods(avg.index) - 1
    lhs = origin.reindex(_month_periods(fwd.index))
    mask = lhs.notna().to_numpy()
    X = np.column_stack([np.ones(len(fwd)), fwd.to_numpy()])
    if mask.sum() <= X.shape[1]:
        raise InsufficientData("not enough dates for the forward-rate regression")
    coef, *_ = np.linalg.lstsq(X[mask], lhs.to_numpy()[mask], rcond=None)
    fitted = X @ coef
    y = lhs.to_numpy()[mask]
    resid = y - fitted[mask]
    tss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - resid @ resid / tss if tss > 0 else 1.0
    return CpFactor(pd.Series(fitted, index=fwd.index, name="CP"), coef, float(r2), fwd)
