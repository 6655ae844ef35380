"""Left jump tail estimation from deep out-of-the-money puts.

The tail decay ``alpha`` is the LAD location of log price ratios over
adjacent moneyness pairs; the level ``phi`` is the LAD location of the
rescaled log prices given ``alpha``. Both LAD problems are one-dimensional,
so the median is their exact minimizer (for an even count we take the
midpoint of the two central order statistics).
"""

from __future__ import annotations

import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from .exceptions import DegenerateTail, InvalidInput, NoTailData
from .ingest import FilteredChain

logger = logging.getLogger(__name__)

THRESHOLD_MULTIPLE = 3.0
THRESHOLD_HORIZON_DAYS = 30.0


@dataclass(frozen=True)
class TailParams:
    as_of: dt.date
    alpha: float
    phi: float
    k_threshold: float
    n_options_alpha: int = 0
    n_options_phi: int = 0

    def __post_init__(self):
        if not (self.alpha > 0 and self.phi > 0 and self.k_threshold > 0):
            raise InvalidInput("alpha, phi and k_threshold must be positive")

    @property
    def tr(self) -> float:
        return left_jump_volatility(self.alpha, self.phi, self.k_threshold)


@dataclass(frozen=True)
class TailSeries:
    frame: pd.DataFrame
    sampling: str
    gaps: tuple = ()

    @property
    def tr(self) -> pd.Series:
        return self.frame["tr"]

    def to_csv(self, path):
        out = self.frame.copy()
        out.insert(0, "date", pd.DatetimeIndex(out.index).strftime("%Y-%m-%d"))
        out.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def decay_ratios(chains: Iterable[FilteredChain]) -> np.ndarray:
    """Slopes ``log(O_i / O_{i-1}) / (k_i - k_{i-1})`` of adjacent puts within each chain."""
    out = []
    for chain in chains:
        if chain.k.size < 2:
            continue
        order = np.argsort(-chain.k, kind="stable")
        k, price = chain.k[order], chain.price[order]
        out.append(np.diff(np.log(price)) / np.diff(k))
    return np.concatenate(out) if out else np.empty(0)


def estimate_alpha(chains: Sequence[FilteredChain]) -> float:
    x = decay_ratios(chains)
    if x.size == 0:
        raise NoTailData("no adjacent put pairs to estimate the tail decay")
    alpha = float(np.median(x)) - 1.0
    if not alpha > 0:
        raise DegenerateTail(f"estimated tail decay {alpha:.4g} is not positive")
    return alpha


def level_terms(chains: Iterable[FilteredChain], alpha: float) -> np.ndarray:
    """Per-quote estimates of ``log(phi)`` given ``alpha``."""
    out = []
    for c in chains:
        if c.k.size == 0:
            continue
        tau = c.tau
        out.append(
            np.log(np.exp(c.rate * tau) * c.price / (tau * c.forward))
            - (1.0 + alpha) * c.k
            + math.log(alpha + 1.0)
            + math.log(alpha)
        )
    return np.concatenate(out) if out else np.empty(0)


def estimate_phi(chains: Sequence[FilteredChain], alpha: float) -> float:
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    c = level_terms(chains, alpha)
    if c.size == 0:
        raise NoTailData("no eligible puts to estimate the tail level")
    return float(np.exp(np.median(c)))


def tail_threshold(atm_iv30: float) -> float:
    """Jump threshold magnitude: three 30-day-normalized ATM volatilities."""
    if not (atm_iv30 > 0 and math.isfinite(atm_iv30)):
        raise InvalidInput(f"atm_iv30 must be positive, got {atm_iv30}")
    return THRESHOLD_MULTIPLE * atm_iv30 * math.sqrt(THRESHOLD_HORIZON_DAYS / 365.0)


def left_jump_volatility(alpha, phi, k_threshold):
    """Square root of ``int_K^inf u^2 phi exp(-alpha u) du`` with ``K = |k|``.

    Vectorizes over array inputs.
    """
    alpha = np.asarray(alpha, dtype=float)
    phi = np.asarray(phi, dtype=float)
    K = np.abs(np.asarray(k_threshold, dtype=float))
    if np.any(alpha <= 0) or np.any(phi <= 0):
        raise InvalidInput("alpha and phi must be positive")
    ak = alpha * K
    out = np.sqrt(phi * np.exp(-ak) * (ak * (ak + 2.0) + 2.0) / alpha**3)
    return float(out) if out.ndim == 0 else out


def iso_week(date) -> tuple[int, int]:
    iso = date.isocalendar()
    return (iso[0], iso[1])


def estimate_daily_params(chains_by_date: dict, atm_iv_for) -> tuple[list[TailParams], list[tuple]]:
    """Weekly ``alpha`` pooled over the ISO week, daily ``phi`` and threshold.

    Days whose week yields no usable ``alpha`` are skipped (no carry-over
    from earlier weeks). Returns the params and ``(date, reason)`` skips.
    """
    weeks = {}
    for date, chains in chains_by_date.items():
        weeks.setdefault(iso_week(date), []).append(date)
    params, skipped = [], []
    for week in sorted(weeks):
        dates = sorted(weeks[week])
        pooled = [c for d in dates for c in chains_by_date[d]]
        try:
            alpha = estimate_alpha(pooled)
        except (NoTailData, DegenerateTail) as exc:
            for d in dates:
                skipped.append((d, f"week {week}: {exc}"))
            continue
        n_alpha = int(sum(c.n_puts for c in pooled if c.eligible))
        for d in dates:
            chains = chains_by_date[d]
            try:
                phi = estimate_phi(chains, alpha)
                k = tail_threshold(atm_iv_for(d))
            except (NoTailData, InvalidInput, KeyError) as exc:
                skipped.append((d, str(exc)))
                continue
            params.append(TailParams(d, alpha, phi, k, n_alpha, int(sum(c.n_puts for c in chains))))
    params.sort(key=lambda p: p.as_of)
    return params, skipped


def build_tail_series(daily: Sequence[TailParams], sampling="month_end", months=None) -> TailSeries:
    """Sample daily tail volatility to month ends.

    ``month_end`` keeps the last available day of each month; ``last5_mean``
    averages the last five available days (fewer, with a warning, when the
    month has less). When ``months`` is given, months without data are
    recorded as gaps; the output skips them either way.
    """
    if sampling not in ("month_end", "last5_mean"):
        raise InvalidInput(f"unknown sampling {sampling!r}")
    rows = pd.DataFrame(
        {
            "tr": [p.tr for p in daily],
            "alpha": [p.alpha for p in daily],
            "phi": [p.phi for p in daily],
            "k_threshold": [p.k_threshold for p in daily],
            "n_options": [p.n_options_phi for p in daily],
        },
        index=pd.DatetimeIndex([pd.Timestamp(p.as_of) for p in daily]),
    ).sort_index()
    if rows.index.has_duplicates:
        raise InvalidInput("duplicate daily tail parameters")
    out, short = {}, []
    for period, grp in rows.groupby(rows.index.to_period("M")):
        month_end = period.to_timestamp(how="end").normalize()
        if sampling == "month_end":
            out[month_end] = grp.iloc[-1]
        else:
            tail = grp.iloc[-5:]
            if len(tail) < 5:
                short.append(str(period))
            rec = tail.mean()
            rec["n_options"] = tail["n_options"].sum()
            out[month_end] = rec
    if short:
        warnings.warn(f"last5_mean averaged fewer than five days in {len(short)} month(s): {', '.join(short[:5])}", stacklevel=2)
    frame = pd.DataFrame(out).T if out else pd.DataFrame(columns=rows.columns)
    frame.index = pd.DatetimeIndex(frame.index, name="date")
    frame["n_options"] = frame["n_options"].astype(int)
    gaps = ()
    if months is not None:
        have = set(frame.index.to_period("M"))
        gaps = tuple(str(p) for p in pd.PeriodIndex(months, freq="M") if p not in have)
    return TailSeries(frame[["tr", "alpha", "phi", "k_threshold", "n_options"]], sampling, gaps)


class TailRiskEstimator(BaseEstimator):
    """Fit the tail decay and level on a pool of filtered put chains.

    ``fit(chains)`` sets ``alpha_`` and ``phi_``; ``tail_volatility(atm_iv30)``
    evaluates the left jump tail volatility at the implied threshold.
    """

    def __init__(self, alpha=None):
        self.alpha = alpha

    def fit(self, X, y=None):
        chains = list(X)
        self.alpha_ = float(self.alpha) if self.alpha is not None else estimate_alpha(chains)
        self.phi_ = estimate_phi(chains, self.alpha_)
        return self

    def tail_volatility(self, atm_iv30):
        return left_jump_volatility(self.alpha_, self.phi_, tail_threshold(atm_iv30))
