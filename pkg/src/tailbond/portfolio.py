"""Mean-variance bond allocation and economic value of return forecasts."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import AlignmentError, InsufficientData, InvalidInput, NumericalError

ANNUALIZE = 1200.0


def mv_weight(expected_rx, var_rx, gamma=5.0, bounds=(-1.0, 5.0)):
    """Clipped mean-variance weight ``E / (gamma Var)``; vectorizes."""
    E = np.asarray(expected_rx, dtype=float)
    V = np.asarray(var_rx, dtype=float)
    if gamma <= 0:
        raise InvalidInput("gamma must be positive")
    lo, hi = bounds
    if not lo < hi:
        raise InvalidInput("bounds must satisfy low < high")
    if np.any(~(V > 0)):
        raise NumericalError("return variance must be positive")
    w = np.clip(E / (gamma * V), lo, hi)
    return float(w) if w.ndim == 0 else w


def rolling_variance(returns: pd.Series, window=120, dates=None) -> pd.Series:
    """Trailing sample variance (ddof=1) of ``returns`` strictly before each date.

    ``dates`` defaults to the index of ``returns``. Dates with fewer than
    ``window`` earlier observations use all available history; the result
    carries ``attrs["short_history"]`` and a warning is emitted.
    """
    s = pd.Series(returns, dtype=float).dropna().sort_index()
    if len(s) < 2:
        raise InsufficientData("rolling variance needs at least two observations")
    dates = s.index if dates is None else pd.DatetimeIndex(dates)
    values = s.to_numpy()
    pos = np.searchsorted(s.index.values, pd.DatetimeIndex(dates).values, side="left")
    out = np.full(len(dates), np.nan)
    short = False
    for i, p in enumerate(pos):
        lo = max(0, p - window)
        if p - lo < window:
            short = True
        if p - lo >= 2:
            out[i] = np.var(values[lo:p], ddof=1)
    if short:
        warnings.warn(f"fewer than {window} observations before some dates; using available history", stacklevel=2)
    res = pd.Series(out, index=dates, name="var")
    res.attrs["short_history"] = short
    return res


def portfolio_return(w, y1m, rx):
    """Monthly portfolio return ``y1m/12 + w rx``; ``y1m`` is annualized."""
    return np.asarray(y1m, dtype=float) / 12.0 + np.asarray(w, dtype=float) * np.asarray(rx, dtype=float)


def cer(portfolio_returns, gamma=5.0) -> float:
    """Annualized percent certainty equivalent ``mu - gamma/2 sigma^2`` (population variance)."""
    r = np.asarray(portfolio_returns, dtype=float)
    if r.size == 0:
        raise InvalidInput("empty return series")
    return float((r.mean() - 0.5 * gamma * r.var()) * ANNUALIZE)


def _risk_free_simple(y1m):
    return np.expm1(np.asarray(y1m, dtype=float) / 12.0)


def _log_mpp(r, rf, gamma):
    gross = (1.0 + r) / (1.0 + rf)
    if np.any(1.0 + r <= 0) or np.any(1.0 + rf <= 0):
        raise NumericalError("gross returns must be positive")
    if gamma == 1.0:
        return float(np.mean(np.log(gross)))
    x = (1.0 - gamma) * np.log(gross)
    # log-mean-exp keeps large gamma finite
    m = x.max()
    return float((m + math.log(np.mean(np.exp(x - m)))) / (1.0 - gamma))


def mpp_theta(model_returns, bench_returns, y1m, gamma=5.0) -> float:
    """Annualized percent MPP gain of the model strategy over the benchmark."""
    rm = np.asarray(model_returns, dtype=float)
    rb = np.asarray(bench_returns, dtype=float)
    rf = _risk_free_simple(y1m)
    if not (rm.shape == rb.shape == rf.shape):
        raise AlignmentError("model, benchmark and risk-free series must align")
    if rm.size == 0:
        raise InvalidInput("empty return series")
    return (_log_mpp(rm, rf, gamma) - _log_mpp(rb, rf, gamma)) * ANNUALIZE


def dcru(model_returns, bench_returns, gamma=5.0) -> np.ndarray:
    """Cumulative difference in realized quadratic utility around each series' OOS mean."""
    rm = np.asarray(model_returns, dtype=float)
    rb = np.asarray(bench_returns, dtype=float)
    if rm.shape != rb.shape:
        raise AlignmentError("model and benchmark returns must align")
    um = rm - 0.5 * gamma * (rm - rm.mean()) ** 2
    ub = rb - 0.5 * gamma * (rb - rb.mean()) ** 2
    return np.cumsum(um - ub)


@dataclass
class BacktestResult:
    weights: pd.Series
    portfolio_returns: pd.Series
    cer: float
    binding: pd.Series
    delta: float = np.nan
    theta: float = np.nan


def backtest(forecasts: pd.Series, realized: pd.Series, rx_history: pd.Series, y1m: pd.Series, gamma=5.0,
             bounds=(-1.0, 5.0), window=120) -> BacktestResult:
    """Allocate each month on the forecast, realize at the next month.

    ``forecasts`` and ``realized`` share the target-month index; ``y1m`` holds
    the annualized one-month yield at each forecast origin and is matched to
    the target month one calendar month later.
    """
    forecasts = pd.Series(forecasts, dtype=float)
    realized = pd.Series(realized, dtype=float)
    if not forecasts.index.equals(realized.index):
        raise AlignmentError("forecasts and realized returns must share an index")
    var = rolling_variance(rx_history, window, forecasts.index)
    rf = _origin_rate(y1m, forecasts.index)
    w = mv_weight(forecasts.to_numpy(), var.to_numpy(), gamma, bounds)
    lo, hi = bounds
    r = portfolio_return(w, rf, realized.to_numpy())
    idx = forecasts.index
    return BacktestResult(
        pd.Series(w, index=idx, name="weight"),
        pd.Series(r, index=idx, name="return"),
        cer(r, gamma),
        pd.Series((w <= lo) | (w >= hi), index=idx, name="binding"),
    )


def _origin_rate(y1m, target_index):
    s = pd.Series(y1m, dtype=float)
    s.index = pd.DatetimeIndex(s.index).to_period("M") + 1
    out = s.reindex(pd.DatetimeIndex(target_index).to_period("M"))
    if out.isna().any():
        raise AlignmentError("one-month yield missing at some forecast origins")
    return out.to_numpy()


def economic_value(frame: pd.DataFrame, rx_history, y1m, gamma=5.0, bounds=(-1.0, 5.0), window=120):
    """Model and benchmark backtests on an OOS frame (realized/model/benchmark).

    The model result carries ``delta`` (CER gain) and ``theta`` (MPP gain).
    """
    model = backtest(frame["model"], frame["realized"], rx_history, y1m, gamma, bounds, window)
    bench = backtest(frame["benchmark"], frame["realized"], rx_history, y1m, gamma, bounds, window)
    model.delta = cer_gain(model, bench)
    rf = _origin_rate(y1m, frame.index)
    model.theta = mpp_theta(model.portfolio_returns.to_numpy(), bench.portfolio_returns.to_numpy(), rf, gamma)
    return model, bench


def cer_gain(model_result: BacktestResult, bench_result: BacktestResult) -> float:
    return model_result.cer - bench_result.cer
