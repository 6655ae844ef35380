"""Synthetic data generators and independent numerical oracles."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import integrate, optimize, stats

from . import _rng
from .atsm import AtsmModel, fit_var, yield_recursions
from .exceptions import InvalidInput
from .exceptions import InsufficientData
from .ingest import DAYS_PER_YEAR, MONEYNESS_CUTOFF, OptionQuote, implied_forward, match_pairs

SPREAD = 0.01


# -- Black model -------------------------------------------------------------------


def black_price(F, K, tau, sigma, kind="C"):
    """Undiscounted Black price; ``sigma = 0`` gives intrinsic value."""
    F, K, tau, sigma = (np.asarray(v, dtype=float) for v in (F, K, tau, sigma))
    sq = sigma * np.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(F / K) / sq + 0.5 * sq
        d2 = d1 - sq
        if kind in ("C", "call"):
            price = F * stats.norm.cdf(d1) - K * stats.norm.cdf(d2)
            intrinsic = np.maximum(F - K, 0.0)
        elif kind in ("P", "put"):
            price = K * stats.norm.cdf(-d2) - F * stats.norm.cdf(-d1)
            intrinsic = np.maximum(K - F, 0.0)
        else:
            raise InvalidInput(f"kind must be C or P, got {kind!r}")
    out = np.where(sq > 0, price, intrinsic)
    return float(out) if out.ndim == 0 else out


def implied_vol(price, F, K, tau, kind="C", lo=1e-9, hi=10.0):
    """Black implied volatility by bracketed root finding."""
    intrinsic = max(F - K, 0.0) if kind in ("C", "call") else max(K - F, 0.0)
    upper = F if kind in ("C", "call") else K
    if not intrinsic <= price < upper:
        raise InvalidInput(f"price {price} outside no-arbitrage bounds [{intrinsic}, {upper})")
    if price == intrinsic:
        return 0.0
    f = lambda s: black_price(F, K, tau, s, kind) - price  # noqa: E731
    if f(lo) > 0:
        return lo
    return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)


def atm_iv30(groups, rate_for, horizon_days=30):
    """30-day at-the-money implied volatility per date from grouped quotes.

    For each (date, expiry) the OTM option at the pair strike nearest the
    parity forward is inverted; tenors are then interpolated linearly in
    total variance, with flat volatility outside the quoted range.
    Dates without a usable tenor are omitted.
    """
    by_date = {}
    for (date, expiry), quotes in groups.items():
        tenor = (expiry - date).days
        if tenor <= 0:
            continue
        tau = tenor / DAYS_PER_YEAR
        try:
            rate = rate_for(date, tenor)
            pairs = match_pairs(quotes)
            F = implied_forward(pairs, rate, tau)
        except (InsufficientData, InvalidInput, KeyError):
            continue
        K, c, p = min(pairs, key=lambda x: abs(x[0] - F))
        kind, price = ("C", c) if K >= F else ("P", p)
        try:
            iv = implied_vol(price * math.exp(rate * tau), F, K, tau, kind)
        except (InvalidInput, ValueError):
            continue
        by_date.setdefault(date, []).append((tenor, iv))
    out = {}
    for date, pts in by_date.items():
        pts.sort()
        days = np.array([d for d, _ in pts], dtype=float)
        vols = np.array([v for _, v in pts])
        if horizon_days <= days[0]:
            out[date] = float(vols[0])
        elif horizon_days >= days[-1]:
            out[date] = float(vols[-1])
        else:
            w = np.interp(horizon_days, days, vols**2 * days)
            out[date] = float(math.sqrt(w / horizon_days))
    return out


# -- tail options ------------------------------------------------------------------


def btx_put_price(k, alpha, phi, tau, forward, rate):
    """Deep-OTM put price ``exp(-r tau) tau F phi exp((1+alpha) k) / (alpha (alpha+1))``."""
    k = np.asarray(k, dtype=float)
    return math.exp(-rate * tau) * tau * forward * phi * np.exp((1.0 + alpha) * k) / (alpha * (alpha + 1.0))


def numeric_tail_integral(alpha, phi, K):
    """Quadrature of ``int_K^inf u^2 phi exp(-alpha u) du``.

    Written as ``phi exp(-alpha K) int_0^inf (K + s)^2 exp(-alpha s) ds`` so the
    integrand is O(1) for any threshold.
    """
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    K = abs(K)
    val, _ = integrate.quad(lambda s: (K + s) ** 2 * math.exp(-alpha * s), 0.0, np.inf, epsabs=0.0, epsrel=1e-13,
                            limit=200)
    return phi * math.exp(-alpha * K) * val


@dataclass(frozen=True)
class TailGeneratorSpec:
    alpha: float
    phi: float
    strikes_per_tenor: int = 10
    tenors_days: tuple = (10, 20, 30, 40)
    rate: float = 0.02
    forward: float = 100.0
    noise_sd: float = 0.0
    seed: int = 0
    atm_iv30: float = 0.2
    date: dt.date = dt.date(2010, 1, 4)
    moneyness_start: float = -2.6
    moneyness_step: float = 0.3
    atm_pairs: int = 7

    def __post_init__(self):
        if self.noise_sd < 0:
            raise InvalidInput("noise_sd must be non-negative")
        if self.alpha <= 0 or self.phi < 0:
            raise InvalidInput("alpha must be positive and phi non-negative")
        if self.moneyness_start > MONEYNESS_CUTOFF or self.moneyness_step <= 0:
            raise InvalidInput("strikes must lie below the volatility-adjusted moneyness cutoff")

    def tail_k(self, tenor_days):
        s = self.atm_iv30 * math.sqrt(tenor_days / DAYS_PER_YEAR)
        return s * (self.moneyness_start - self.moneyness_step * np.arange(self.strikes_per_tenor))


def _quote(date, expiry, strike, kind, mid):
    return OptionQuote(date, expiry, float(strike), kind, float(mid * (1 - SPREAD)), float(mid * (1 + SPREAD)))


def gen_tail_options(spec: TailGeneratorSpec, rng=None) -> list:
    """Option quotes for one date: deep-OTM puts plus near-ATM call/put pairs per tenor."""
    rng = rng if rng is not None else _rng.stream(spec.seed, 0)
    out = []
    for tenor in spec.tenors_days:
        tau = tenor / DAYS_PER_YEAR
        expiry = spec.date + dt.timedelta(days=int(tenor))
        disc = math.exp(-spec.rate * tau)
        s = spec.atm_iv30 * math.sqrt(tau)
        for k in np.linspace(-1.5 * s, 1.5 * s, spec.atm_pairs):
            K = spec.forward * math.exp(k)
            for kind in ("C", "P"):
                out.append(_quote(spec.date, expiry, K, kind, disc * black_price(spec.forward, K, tau, spec.atm_iv30, kind)))
        k = spec.tail_k(tenor)
        prices = btx_put_price(k, spec.alpha, spec.phi, tau, spec.forward, spec.rate)
        if spec.noise_sd > 0:
            prices = prices * np.exp(spec.noise_sd * rng.standard_normal(prices.size))
        for kk, p in zip(k, prices):
            out.append(_quote(spec.date, expiry, spec.forward * math.exp(kk), "P", p))
    return out


# -- affine term structure ---------------------------------------------------------


@dataclass
class AtsmGeneratorSpec:
    K: int
    N: int
    T: int
    mu: np.ndarray
    Phi: np.ndarray
    Sigma: np.ndarray
    lambda0: np.ndarray
    lambda1: np.ndarray
    sigma2: float
    delta0: float
    delta1: np.ndarray
    seed: int = 0
    return_step: int = 6
    exact: bool = False
    zero_mean: bool = False
    start: str | None = None
    extra_maturities: tuple = field(default=())

    def __post_init__(self):
        self.model = AtsmModel(self.mu, self.Phi, self.Sigma, self.lambda0, self.lambda1, self.sigma2, self.delta0,
                               self.delta1)
        if self.model.K != self.K:
            raise InvalidInput("K does not match the parameter shapes")
        if np.max(np.abs(np.linalg.eigvals(self.model.Phi))) >= 1:
            raise InvalidInput("Phi must have spectral radius below one")
        if self.T < 1 or self.N < 1:
            raise InvalidInput("T and N must be positive")

    @property
    def return_maturities(self):
        return [self.return_step * (i + 1) for i in range(self.N)]


def gen_atsm_panel(spec: AtsmGeneratorSpec):
    """Simulate factors, excess returns and yields from the affine model.

    Returns ``(X, returns, yields)``: ``X`` has ``T+1`` monthly rows, returns
    ``T`` rows dated at the end of each holding month, and yields cover
    maturities 1..max on the factor dates. With ``exact=True`` the pricing
    recursions use the in-sample VAR estimates and zero return pricing
    error, so the three-step estimator reproduces the generating model to
    rounding error.
    """
    m = spec.model
    K, T = spec.K, spec.T
    g = _rng.stream(spec.seed, 0)
    w, Q = np.linalg.eigh(m.Sigma)
    chol = Q * np.sqrt(np.clip(w, 0.0, None))
    shocks = g.standard_normal((T, K)) @ chol.T
    X = np.empty((T + 1, K))
    X[0] = np.linalg.solve(np.eye(K) - m.Phi, m.mu)
    for t in range(T):
        X[t + 1] = m.mu + m.Phi @ X[t] + shocks[t]

    if spec.exact:
        mu_h, Phi_h, Sigma_h, _ = fit_var(X, spec.zero_mean)
        pricing = AtsmModel(mu_h, Phi_h, Sigma_h, m.lambda0, m.lambda1, 0.0, m.delta0, m.delta1)
        noise = np.zeros((T, spec.N))
    else:
        pricing = m
        noise = math.sqrt(m.sigma2) * _rng.stream(spec.seed, 1).standard_normal((T, spec.N))

    rmat = spec.return_maturities
    n_max = max(max(rmat), *spec.extra_maturities) if spec.extra_maturities else max(rmat)
    a, b, _, _ = yield_recursions(pricing, n_max)
    logp = a[None, :] + X @ b.T  # (T+1, n_max), column j is maturity j+1
    # nanosecond timestamps end in 2262; long panels start near the lower bound
    start = spec.start or ("2000-01-31" if T < 2400 else "1678-01-31")
    dates = pd.date_range(start, periods=T + 1, freq="ME")
    yields = pd.DataFrame(-12.0 * logp / np.arange(1, n_max + 1), index=dates, columns=range(1, n_max + 1))
    r = -logp[:-1, 0]
    rx = np.column_stack([logp[1:, n - 2] - logp[:-1, n - 1] - r for n in rmat]) + noise
    returns = pd.DataFrame(rx, index=dates[1:], columns=rmat)
    factors = pd.DataFrame(X, index=dates, columns=[f"x{i + 1}" for i in range(K)])
    return factors, returns, yields


def default_atsm_spec(K=3, N=20, T=5000, seed=0, **kw) -> AtsmGeneratorSpec:
    """A stable K-factor model in monthly units with unit-variance factors.

    Persistences are spread out so the return loadings stay well conditioned.
    """
    rho = np.linspace(0.97, 0.5, K)
    Phi = np.diag(rho)
    if K > 1:
        Phi[0, 1] = 0.05
    base = dict(
        mu=np.zeros(K),
        Phi=Phi,
        Sigma=np.diag(1.0 - rho**2),
        lambda0=np.linspace(-0.3, 0.2, K),
        lambda1=0.05 * np.eye(K) + 0.02 * np.eye(K, k=1),
        sigma2=1e-6,
        delta0=0.03 / 12,
        delta1=0.002 * (-0.75) ** np.arange(K),
    )
    base.update(kw)
    return AtsmGeneratorSpec(K=K, N=N, T=T, seed=seed, **base)


# -- full synthetic world ------------------------------------------------------------


def last_business_days(month: pd.Period, n=5):
    days = pd.bdate_range(month.start_time, month.end_time)
    return [d.date() for d in days[-n:]]


def gen_world(start="1996-01-31", end="2018-12-31", seed=0, days_per_month=5, noise_sd=0.0, tenors=(10, 20, 30, 40),
              strikes_per_tenor=8, n_factors=3, yield_noise_sd=5e-5):
    """Coupled synthetic world for end-to-end runs.

    The first factor of an affine yield model drives the tail level, so the
    tail series carries term-structure information. Returns a dict with
    ``options`` (quotes), ``rates`` and ``atm_iv`` (daily series), ``yields``
    (monthly grid 1..120) and ``truth`` (monthly parameters). Yields carry
    iid measurement error with sd ``yield_noise_sd`` so the panel has full
    rank.
    """
    months = pd.period_range(pd.Timestamp(start), pd.Timestamp(end), freq="M")
    spec = default_atsm_spec(K=n_factors, N=20, T=len(months) - 1, seed=seed, exact=False)
    X, _, yields = gen_atsm_panel(spec)
    yields.index = months.to_timestamp(how="end").normalize()
    yields = yields + yield_noise_sd * _rng.stream(seed, 11).standard_normal(yields.shape)

    g = _rng.stream(seed, 10)
    T = len(months)
    alpha = np.empty(T)
    a = 0.0
    for t in range(T):
        a = 0.8 * a + 0.1 * g.standard_normal()
        alpha[t] = 12.0 * math.exp(a)
    x1 = X["x1"].to_numpy()
    phi = 2.0 * np.exp(0.4 * x1)
    iv = 0.18 * np.exp(0.15 * x1 + 0.05 * g.standard_normal(T))

    options, rates, ivs, truth = [], {}, {}, []
    for i, month in enumerate(months):
        y1 = float(yields.iloc[i][1])
        for d in last_business_days(month, days_per_month):
            ts = TailGeneratorSpec(alpha=float(alpha[i]), phi=float(phi[i]), strikes_per_tenor=strikes_per_tenor,
                                   tenors_days=tenors, rate=y1, forward=100.0, noise_sd=noise_sd, seed=seed,
                                   atm_iv30=float(iv[i]), date=d)
            options.extend(gen_tail_options(ts, _rng.stream(seed, 20, d.toordinal())))
            rates[pd.Timestamp(d)] = y1
            ivs[pd.Timestamp(d)] = float(iv[i])
        truth.append((yields.index[i], alpha[i], phi[i], iv[i]))
    truth = pd.DataFrame(truth, columns=["date", "alpha", "phi", "atm_iv30"]).set_index("date")
    return {
        "options": options,
        "rates": pd.Series(rates, name="value"),
        "atm_iv": pd.Series(ivs, name="value"),
        "yields": yields,
        "truth": truth,
    }
