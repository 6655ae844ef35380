"""Loading, validating and filtering raw inputs.

File schemas
------------
options CSV   ``date,expiry,strike,kind,bid,ask`` (ISO dates, ``kind`` in {C, P})
yields CSV    ``date,m3,m6,...`` annualized continuously compounded decimals,
              or the NSS form ``date,beta0,beta1,beta2,beta3,tau1,tau2``
series CSV    ``date,value``
config        flat ``key = value`` text, one RunConfig field per line
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import logging
import math
import os
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .exceptions import InsufficientData, InvalidInput, OptionDataError, SchemaError, ValidationError

logger = logging.getLogger(__name__)

OPTION_COLUMNS = ("date", "expiry", "strike", "kind", "bid", "ask")
MIN_PARITY_PAIRS = 5
MIN_TENOR_DAYS = 8
MAX_TENOR_DAYS = 45
MONEYNESS_CUTOFF = -2.5
DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class OptionQuote:
    date: dt.date
    expiry: dt.date
    strike: float
    kind: str
    bid: float
    ask: float

    def __post_init__(self):
        if self.kind not in ("C", "P"):
            raise InvalidInput(f"kind must be 'C' or 'P', got {self.kind!r}")
        if not (self.strike > 0 and math.isfinite(self.strike)):
            raise InvalidInput(f"strike must be positive, got {self.strike}")
        if not (self.bid >= 0 and self.ask >= 0):
            raise InvalidInput("bid and ask must be non-negative")
        if self.ask < self.bid:
            raise InvalidInput(f"ask {self.ask} below bid {self.bid}")
        if self.expiry < self.date:
            raise InvalidInput("expiry precedes quote date")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def tenor_days(self) -> int:
        return (self.expiry - self.date).days


@dataclass(frozen=True)
class FilteredChain:
    """Eligible deep-OTM puts for one (date, tenor).

    ``k`` is log-forward moneyness, sorted so that ``-k`` increases; ``price``
    is the mid quote and strictly decreases along that order.
    """

    date: dt.date
    tenor_days: int
    forward: float
    rate: float
    k: np.ndarray
    price: np.ndarray
    atm_iv30: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        object.__setattr__(self, "price", np.asarray(self.price, dtype=float))

    @property
    def tau(self) -> float:
        return self.tenor_days / DAYS_PER_YEAR

    @property
    def n_puts(self) -> int:
        return int(self.k.size)

    @property
    def eligible(self) -> bool:
        """True when the chain has an adjacent pair for the decay estimator."""
        return self.k.size >= 2


@dataclass(frozen=True)
class ExternalSeries:
    name: str
    dates: tuple
    values: tuple

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise ValidationError(f"series {self.name!r}: dates and values differ in length")
        for a, b in zip(self.dates, self.dates[1:]):
            if not b > a:
                raise ValidationError(f"series {self.name!r}: dates not strictly increasing at {b}")

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.DatetimeIndex(self.dates), name=self.name, dtype=float)

    def lookup(self, date) -> float:
        return float(self.to_series().loc[pd.Timestamp(date)])


@dataclass
class RunConfig:
    sample_start: dt.date = dt.date(1996, 1, 31)
    sample_end: dt.date = dt.date(2018, 12, 31)
    maturities_months: tuple = (12, 24, 36, 48, 60, 84, 120)
    nw_lags: int = 12
    gamma: float = 5.0
    weight_bounds: tuple = (-1.0, 5.0)
    bootstrap_reps: int = 5000
    seed: int = 20200101
    oos_split: dt.date = dt.date(2007, 7, 31)
    window: str = "rolling"
    tail_sampling: str = "month_end"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (self.sample_start < self.oos_split < self.sample_end):
            raise ValidationError("need sample_start < oos_split < sample_end")
        low, high = self.weight_bounds
        if not low < high:
            raise ValidationError("weight_bounds low must be below high")
        if self.bootstrap_reps < 1:
            raise ValidationError("bootstrap_reps must be >= 1")
        if self.nw_lags < 0:
            raise ValidationError("nw_lags must be >= 0")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if self.window not in ("expanding", "rolling"):
            raise ValidationError(f"window must be expanding or rolling, got {self.window!r}")
        if self.tail_sampling not in ("month_end", "last5_mean"):
            raise ValidationError(f"tail_sampling must be month_end or last5_mean, got {self.tail_sampling!r}")
        if not self.maturities_months or any(m < 2 for m in self.maturities_months):
            raise ValidationError("maturities_months must be integers >= 2")

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _parse_date(text, line=None, field_name=None) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except (ValueError, AttributeError):
        raise OptionDataError(f"invalid ISO date {text!r}", line, field_name) from None


def _parse_float(text, line=None, field_name=None) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise OptionDataError(f"invalid number {text!r}", line, field_name) from None
    if not math.isfinite(value):
        raise OptionDataError(f"non-finite number {text!r}", line, field_name)
    return value


def _coerce_config_value(name, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, dt.date):
            return dt.date.fromisoformat(raw)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if name == "maturities_months":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if name == "weight_bounds":
            low, high = (float(x) for x in raw.split(","))
            return (low, high)
    except ValueError:
        raise ValidationError(f"config key {name!r}: cannot parse {raw!r}") from None
    return raw


ENV_PREFIX = "TAILBOND_"


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    """Read a flat ``key = value`` config.

    Precedence is file < environment (``TAILBOND_<KEY>``) < ``overrides``.
    Unknown keys are rejected.
    """
    defaults = RunConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(RunConfig)}
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            raw[key] = value
    environ = os.environ if environ is None else environ
    for key in known:
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            raw[key] = environ[env_key]
    for key, value in (overrides or {}).items():
        if key not in known:
            raise ValidationError(f"unknown config override {key!r}")
        raw[key] = value
    values = {}
    for key, value in raw.items():
        values[key] = _coerce_config_value(key, value, known[key]) if isinstance(value, str) else value
    return RunConfig(**{**known, **values})


def load_option_chain(path) -> "OrderedDict[tuple, list[OptionQuote]]":
    """Parse an options CSV into quotes grouped by ``(date, expiry)``.

    Duplicate ``(date, expiry, strike, kind)`` rows keep the last occurrence.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"options file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise OptionDataError("empty options file") from None
        header = [h.strip() for h in header]
        if tuple(header) != OPTION_COLUMNS:
            raise SchemaError(f"options header must be {','.join(OPTION_COLUMNS)}, got {','.join(header)}")
        rows = OrderedDict()
        n_dupes = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(OPTION_COLUMNS):
                raise OptionDataError(f"expected {len(OPTION_COLUMNS)} fields, got {len(row)}", lineno)
            date = _parse_date(row[0], lineno, "date")
            expiry = _parse_date(row[1], lineno, "expiry")
            strike = _parse_float(row[2], lineno, "strike")
            kind = row[3].strip().upper()
            bid = _parse_float(row[4], lineno, "bid")
            ask = _parse_float(row[5], lineno, "ask")
            if kind not in ("C", "P"):
                raise OptionDataError(f"kind must be C or P, got {row[3]!r}", lineno, "kind")
            if strike <= 0:
                raise OptionDataError("strike must be positive", lineno, "strike")
            if bid < 0:
                raise OptionDataError("negative bid", lineno, "bid")
            if ask < bid:
                raise OptionDataError(f"ask {ask} below bid {bid}", lineno, "ask")
            if expiry < date:
                raise OptionDataError("expiry precedes date", lineno, "expiry")
            key = (date, expiry, strike, kind)
            if key in rows:
                n_dupes += 1
                del rows[key]
            rows[key] = OptionQuote(date, expiry, strike, kind, bid, ask)
    if not rows:
        raise OptionDataError("options file has a header but no rows")
    if n_dupes:
        warnings.warn(f"{n_dupes} duplicate option rows in {path.name}; kept the last of each", stacklevel=2)
    groups = OrderedDict()
    for quote in rows.values():
        groups.setdefault((quote.date, quote.expiry), []).append(quote)
    return groups


def write_option_chain(path, quotes: Iterable[OptionQuote]):
    """Write quotes in the options CSV schema; floats round-trip exactly."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OPTION_COLUMNS)
        for q in quotes:
            writer.writerow([q.date.isoformat(), q.expiry.isoformat(), repr(q.strike), q.kind, repr(q.bid), repr(q.ask)])


def load_series(path, name=None) -> ExternalSeries:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"series file not found: {path}")
    frame = pd.read_csv(path)
    if list(frame.columns) != ["date", "value"]:
        raise SchemaError(f"{path.name}: series header must be date,value")
    if frame.empty:
        raise ValidationError(f"{path.name}: empty series")
    dates = tuple(pd.to_datetime(frame["date"]).dt.date)
    if len(set(dates)) != len(dates):
        raise ValidationError(f"{path.name}: duplicate dates")
    return ExternalSeries(name or path.stem, dates, tuple(frame["value"].astype(float)))


def write_series(path, series: pd.Series):
    frame = pd.DataFrame({"date": pd.DatetimeIndex(series.index).strftime("%Y-%m-%d"), "value": series.to_numpy()})
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


NSS_COLUMNS = ("date", "beta0", "beta1", "beta2", "beta3", "tau1", "tau2")


def load_yields(path, maturities_months: Sequence[int] | None = None):
    """Load a yields CSV in grid or NSS form and return a ``YieldPanel``.

    For the NSS form, ``maturities_months`` selects the grid to evaluate
    (default 1..120 months).
    """
    from .curve import NssParams, YieldPanel, nss_panel

    path = Path(path)
    if not path.exists():
        raise ValidationError(f"yields file not found: {path}")
    frame = pd.read_csv(path)
    if frame.empty:
        raise ValidationError(f"{path.name}: no rows")
    if not frame.columns.size or frame.columns[0] != "date":
        raise SchemaError(f"{path.name}: first column must be date")
    dates = pd.DatetimeIndex(pd.to_datetime(frame["date"]))
    if tuple(frame.columns) == NSS_COLUMNS:
        params = [NssParams(*row) for row in frame.iloc[:, 1:].itertuples(index=False)]
        return nss_panel(dates, params, maturities_months or range(1, 121))
    maturities = []
    for col in frame.columns[1:]:
        if not (col.startswith("m") and col[1:].isdigit()):
            raise SchemaError(f"{path.name}: grid column {col!r} is not of the form m<months>")
        maturities.append(int(col[1:]))
    values = frame.iloc[:, 1:].to_numpy(dtype=float)
    panel = YieldPanel(pd.DataFrame(values, index=dates, columns=maturities))
    if maturities_months is not None:
        panel = panel.select(maturities_months)
    return panel


def match_pairs(quotes: Sequence[OptionQuote]) -> list[tuple[float, float, float]]:
    """Strike-matched ``(K, call_mid, put_mid)`` pairs among usable quotes.

    A quote is usable when its bid is positive and its spread is positive.
    """
    calls, puts = {}, {}
    for q in quotes:
        if q.bid > 0 and q.ask > q.bid:
            (calls if q.kind == "C" else puts)[q.strike] = q.mid
    return [(k, calls[k], puts[k]) for k in sorted(set(calls) & set(puts))]


def implied_forward(pairs, rate: float, tenor: float) -> float:
    """Forward price from put-call parity, median over strike-matched pairs.

    ``pairs`` holds ``(strike, call, put)`` triples; each implies
    ``K + (C - P) * exp(rate * tenor)``.
    """
    pairs = list(pairs)
    if len(pairs) < MIN_PARITY_PAIRS:
        raise InsufficientData(f"need {MIN_PARITY_PAIRS} call/put pairs for the forward, got {len(pairs)}")
    if not math.isfinite(rate) or not math.isfinite(tenor):
        raise InvalidInput("rate and tenor must be finite")
    arr = np.asarray(pairs, dtype=float)
    forwards = arr[:, 0] + (arr[:, 1] - arr[:, 2]) * math.exp(rate * tenor)
    forward = float(np.median(forwards))
    if not forward > 0:
        raise InvalidInput(f"implied forward is not positive ({forward})")
    return forward


def volatility_adjusted_moneyness(k, atm_iv30: float, tenor_days: float):
    return np.asarray(k, dtype=float) / (atm_iv30 * np.sqrt(tenor_days / DAYS_PER_YEAR))


def filter_chain(quotes, forward: float, rate: float, atm_iv30: float) -> FilteredChain:
    """Keep the deep-OTM puts used by the tail estimators.

    ``quotes`` is one (date, expiry) group of ``OptionQuote`` or an already
    filtered ``FilteredChain`` (the filters are idempotent). Raises
    ``InsufficientData`` when the tenor is outside [8, 45] days; a chain with
    fewer than two surviving puts is returned with ``eligible == False``.
    """
    if not forward > 0:
        raise InvalidInput("forward must be positive")
    if not atm_iv30 > 0:
        raise InvalidInput("atm_iv30 must be positive")

    if isinstance(quotes, FilteredChain):
        date, tenor = quotes.date, quotes.tenor_days
        k = quotes.k.copy()
        prices = quotes.price.copy()
    else:
        quotes = list(quotes)
        if not quotes:
            raise InsufficientData("no quotes")
        date = quotes[0].date
        tenor = quotes[0].tenor_days
        if any(q.date != date or q.tenor_days != tenor for q in quotes):
            raise ValidationError("filter_chain expects quotes from a single (date, expiry)")
        puts = [q for q in quotes if q.kind == "P" and q.bid > 0 and q.ask > q.bid]
        strikes = np.array([q.strike for q in puts], dtype=float)
        prices = np.array([q.mid for q in puts], dtype=float)
        k = np.log(strikes / forward)

    if not MIN_TENOR_DAYS <= tenor <= MAX_TENOR_DAYS:
        raise InsufficientData(f"tenor {tenor} days outside [{MIN_TENOR_DAYS}, {MAX_TENOR_DAYS}]")

    keep = (k < 0) & (prices > 0)
    k, prices = k[keep], prices[keep]
    keep = volatility_adjusted_moneyness(k, atm_iv30, tenor) <= MONEYNESS_CUTOFF
    k, prices = k[keep], prices[keep]

    # least-OTM first; stable sort keeps input order for equal strikes
    order = np.argsort(-k, kind="stable")
    k, prices = k[order], prices[order]
    kept = []
    last = np.inf
    for i, p in enumerate(prices):
        if p < last:
            kept.append(i)
            last = p
    kept = np.asarray(kept, dtype=int)
    return FilteredChain(date, int(tenor), float(forward), float(rate), k[kept], prices[kept], float(atm_iv30))


def prepare_chains(groups, rate_for, atm_iv_for):
    """Turn grouped quotes into filtered chains, dropping unusable tenors.

    ``rate_for(date, tenor_days)`` and ``atm_iv_for(date)`` supply the
    risk-free rate and 30-day ATM implied volatility. Returns a dict
    ``date -> list[FilteredChain]`` and a list of ``(date, expiry, reason)``
    drop records.
    """
    chains, dropped = {}, []
    for (date, expiry), quotes in groups.items():
        tenor = (expiry - date).days
        if not MIN_TENOR_DAYS <= tenor <= MAX_TENOR_DAYS:
            dropped.append((date, expiry, f"tenor {tenor} days outside range"))
            continue
        try:
            iv = atm_iv_for(date)
            rate = rate_for(date, tenor)
            forward = implied_forward(match_pairs(quotes), rate, tenor / DAYS_PER_YEAR)
            chain = filter_chain(quotes, forward, rate, iv)
        except (InsufficientData, InvalidInput, KeyError) as exc:
            reason = str(exc) if not isinstance(exc, KeyError) else f"missing input for {exc}"
            logger.info("dropping %s/%s: %s", date, expiry, reason)
            dropped.append((date, expiry, reason))
            continue
        if chain.n_puts == 0:
            dropped.append((date, expiry, "no puts survive the filters"))
            continue
        chains.setdefault(date, []).append(chain)
    return chains, dropped


GSW_PARAM_COLUMNS = ("BETA0", "BETA1", "BETA2", "BETA3", "TAU1", "TAU2")


def load_gsw(path, start=None, end=None, maturities_months=range(1, 121)):
    """Month-end yield grid from the Federal Reserve's published NSS parameter file.

    The file carries a free-text preamble before the ``Date`` header; betas
    are in percent. The last available day of each month is used.
    """
    from .curve import NssParams, nss_panel

    path = Path(path)
    if not path.exists():
        raise ValidationError(f"GSW parameter file not found: {path}")
    with path.open() as fh:
        lines = fh.readlines()
    try:
        head = next(i for i, line in enumerate(lines) if line.split(",")[0].strip().strip('"') == "Date")
    except StopIteration:
        raise SchemaError(f"{path.name}: no Date header row") from None
    frame = pd.read_csv(path, skiprows=head, na_values=["NA", "", "-999.99"])
    missing = [c for c in GSW_PARAM_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path.name}: missing columns {missing}")
    frame["Date"] = pd.to_datetime(frame["Date"])
    frame = frame.dropna(subset=list(GSW_PARAM_COLUMNS)).sort_values("Date")
    if start is not None:
        frame = frame[frame["Date"] >= pd.Timestamp(start) - pd.offsets.MonthBegin(1)]
    if end is not None:
        frame = frame[frame["Date"] <= pd.Timestamp(end)]
    if frame.empty:
        raise ValidationError(f"{path.name}: no parameter rows in the requested window")
    last = frame.groupby(frame["Date"].dt.to_period("M")).tail(1)
    params = [
        NssParams(r.BETA0 / 100, r.BETA1 / 100, r.BETA2 / 100, r.BETA3 / 100, r.TAU1, r.TAU2)
        for r in last.itertuples(index=False)
    ]
    dates = last["Date"].dt.to_period("M").dt.to_timestamp(how="end").dt.normalize()
    return nss_panel(pd.DatetimeIndex(dates), params, maturities_months)
