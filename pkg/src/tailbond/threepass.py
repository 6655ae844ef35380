"""Three-pass estimator of the risk premium of an observed factor.

Pass one extracts latent factors from test-asset returns, pass two prices
them cross-sectionally, pass three projects the observed factor onto them.
The premium ``gamma_g = eta gamma`` does not depend on how the latent
factors are rotated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import _rng
from .exceptions import InsufficientData, InvalidInput, RankDeficient
from .predict import _hac_meat


@dataclass
class ThreePassResult:
    p: int
    latent_scores: np.ndarray  # p x T
    latent_loadings: np.ndarray  # n x p
    gamma_hat: np.ndarray
    eta_hat: np.ndarray  # d x p
    gamma_g: np.ndarray
    r2_g: np.ndarray
    weak_wald: tuple
    se_gamma_g: np.ndarray | None = None


def _demean(a):
    return a - a.mean(axis=1, keepdims=True)


def gx_pca(Rbar, p):
    """``V = sqrt(T) * top-p eigenvectors of Rbar'Rbar/(nT)`` (p x T) and ``beta = Rbar V'/T``."""
    Rbar = np.asarray(Rbar, dtype=float)
    n, T = Rbar.shape
    if not 1 <= p <= min(n, T):
        raise InvalidInput(f"p must be in [1, {min(n, T)}]")
    # right singular vectors of Rbar are the eigenvectors of Rbar'Rbar
    _, s, Wt = np.linalg.svd(Rbar, full_matrices=False)
    if p < s.size and s[p - 1] > 0 and abs(s[p - 1] - s[p]) <= 1e-10 * s[0]:
        warnings.warn(f"eigenvalues {p} and {p + 1} are tied; the latent basis is not unique", stacklevel=2)
    if s[p - 1] <= s[0] * max(n, T) * np.finfo(float).eps:
        raise RankDeficient(f"return panel has rank below {p}")
    V = np.sqrt(T) * Wt[:p]
    beta = Rbar @ V.T / T
    return V, beta


def gx_cross_section(beta_hat, mean_returns):
    beta_hat = np.atleast_2d(np.asarray(beta_hat, dtype=float))
    r = np.asarray(mean_returns, dtype=float).ravel()
    s = np.linalg.svd(beta_hat, compute_uv=False)
    if s[-1] <= s[0] * max(beta_hat.shape) * np.finfo(float).eps * 10:
        raise RankDeficient("beta'beta is singular")
    return np.linalg.lstsq(beta_hat, r, rcond=None)[0]


def gx_time_series(Gbar, V):
    """``eta = G V'(V V')^-1``; returns ``(eta, residual Z, r2_g)``."""
    G = np.atleast_2d(np.asarray(Gbar, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    gg = np.einsum("dt,dt->d", G, G)
    if np.any(gg <= 0):
        raise InvalidInput("observed factor has zero variance")
    VV = V @ V.T
    eta = np.linalg.solve(VV, V @ G.T).T
    Z = G - eta @ V
    r2 = np.einsum("dp,pq,dq->d", eta, VV, eta) / gg
    return eta, Z, r2


def gx_weak_test(eta_hat, Z, V, lags=12):
    """HAC Wald test of ``eta = 0`` per observed factor; returns ``(W, p)`` arrays."""
    eta = np.atleast_2d(np.asarray(eta_hat, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    p, T = V.shape
    if lags >= T:
        raise InvalidInput("lags must be below T")
    bread = np.linalg.inv(V @ V.T)
    W = np.empty(eta.shape[0])
    for d in range(eta.shape[0]):
        cov = bread @ _hac_meat(V.T * Z[d][:, None], lags) @ bread
        W[d] = eta[d] @ np.linalg.lstsq(cov, eta[d], rcond=None)[0] if np.any(eta[d]) else 0.0
    return W, stats.chi2.sf(W, p)


def three_pass(R, G, p, lags=12) -> ThreePassResult:
    """Full pipeline on returns ``R`` (n x T) and observed factors ``G`` (d x T)."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if R.shape[1] != G.shape[1]:
        raise InvalidInput("returns and factor must share T")
    if R.shape[1] <= p + 1:
        raise InsufficientData("need T > p + 1")
    V, beta = gx_pca(_demean(R), p)
    gamma = gx_cross_section(beta, R.mean(axis=1))
    eta, Z, r2 = gx_time_series(_demean(G), V)
    weak = gx_weak_test(eta, Z, V, lags)
    return ThreePassResult(p, V, beta, gamma, eta, eta @ gamma, r2, weak)


def _circular_blocks(T, block, rng):
    starts = rng.integers(0, T, -(-T // block))
    return ((starts[:, None] + np.arange(block)) % T).ravel()[:T]


def gx_se(R, G, p, B=499, seed=0, block=12, threads=1):
    """Bootstrap SD of ``gamma_g`` over circular block resamples of dates."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    T = R.shape[1]

    def rep(b):
        idx = _circular_blocks(T, block, _rng.stream(seed, b))
        Rb, Gb = R[:, idx], G[:, idx]
        V, beta = gx_pca(_demean(Rb), p)
        gamma = gx_cross_section(beta, Rb.mean(axis=1))
        eta, _, _ = gx_time_series(_demean(Gb), V)
        return eta @ gamma

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        draws = np.array(_rng.parallel_map(rep, range(B), threads))
    return draws.std(axis=0, ddof=1)


def p_sweep(R, G, ps=range(1, 9), B=499, seed=0, lags=12, threads=1) -> pd.DataFrame:
    """``gamma_g``, its bootstrap SE, ``R2_g`` and the weak-test p-value for each p (first factor)."""
    cols = {}
    for p in ps:
        res = three_pass(R, G, p, lags)
        se = gx_se(R, G, p, B, seed, threads=threads)
        cols[p] = {"gamma_g": res.gamma_g[0], "se": se[0], "r2_g": res.r2_g[0], "weak_p": res.weak_wald[1][0]}
    return pd.DataFrame(cols)


class ThreePassEstimator(BaseEstimator):
    """``fit(X, g)`` with asset returns ``X`` (T x n) and observed factor(s) ``g`` (T or T x d)."""

    def __init__(self, n_latent=5, nw_lags=12, n_boot=0, seed=0):
        self.n_latent = n_latent
        self.nw_lags = nw_lags
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, g):
        X = check_array(X)
        G = np.asarray(g, dtype=float)
        G = G[:, None] if G.ndim == 1 else G
        res = three_pass(X.T, G.T, self.n_latent, self.nw_lags)
        if self.n_boot:
            res.se_gamma_g = gx_se(X.T, G.T, self.n_latent, self.n_boot, self.seed)
        self.result_ = res
        self.gamma_g_ = res.gamma_g
        self.r2_g_ = res.r2_g
        return self

    def transform(self, X):
        """Latent scores of new returns on the fitted loadings."""
        check_is_fitted(self, "result_")
        X = check_array(X)
        beta = self.result_.latent_loadings
        return np.linalg.lstsq(beta, (X - X.mean(axis=0)).T, rcond=None)[0].T
