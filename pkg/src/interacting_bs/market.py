"""Daily market series with their CSV I/O, parameter estimation from price
history, and synthetic markets carrying a planted bubble."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bubble import BubbleSpec
from .errors import InsufficientHistoryError, ModelDomainError, ParseError
from .pde import GridSpec, default_grid, evaluate_on_path, solve_interacting
from .pricing import MarketParams, OptionContract

CSV_COLUMNS = ("date", "underlying", "option")


@dataclass
class MarketSeries:
    """Aligned daily samples ``(t_k, S_emp(t_k), pi_emp(t_k))``."""

    days: np.ndarray
    underlying: np.ndarray
    option: np.ndarray
    dates: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.days = np.asarray(self.days, dtype=float)
        self.underlying = np.asarray(self.underlying, dtype=float)
        self.option = np.asarray(self.option, dtype=float)
        n = self.days.size
        if self.underlying.size != n or self.option.size != n:
            raise ModelDomainError("days, underlying and option must have equal lengths")
        if np.any(np.diff(self.days) <= 0):
            raise ModelDomainError("days must be strictly increasing")
        if np.any(~(self.underlying > 0)):
            raise ModelDomainError("underlying prices must be > 0")
        if self.dates and len(self.dates) != n:
            raise ModelDomainError("dates must align with days")
        if self.dates and "date_range" not in self.meta:
            self.meta["date_range"] = [self.dates[0], self.dates[-1]]

    def __len__(self):
        return int(self.days.size)


@dataclass(frozen=True)
class EstimationWindow:
    pre_window: int = 90
    rate: float = 0.0

    def __post_init__(self):
        if self.pre_window < 2:
            raise ModelDomainError("pre_window must be >= 2")


def _read_rows(path, required):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {missing}; header is {header}", line=1)
        idx = {c: header.index(c) for c in header}
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            rows.append((lineno, {c: row[i].strip() for c, i in idx.items()}))
    if not rows:
        raise ParseError("no data rows", line=2)
    return rows


def _parse_dates_and_numbers(rows, numeric):
    dates, values = [], {c: [] for c in numeric}
    prev = None
    for lineno, rec in rows:
        try:
            d = dt.date.fromisoformat(rec["date"])
        except ValueError:
            raise ParseError(f"bad ISO-8601 date {rec['date']!r}", line=lineno) from None
        if prev is not None and d <= prev:
            kind = "duplicated" if d == prev else "non-monotone"
            raise ParseError(f"{kind} date {d.isoformat()}", line=lineno)
        prev = d
        dates.append(d.isoformat())
        for c in numeric:
            try:
                v = float(rec[c])
            except ValueError:
                raise ParseError(f"non-numeric {c} value {rec[c]!r}", line=lineno) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite {c} value {rec[c]!r}", line=lineno)
            values[c].append(v)
    return dates, values


def load_series(path, contract_id: str | None = None) -> MarketSeries:
    """Read a ``date,underlying,option`` CSV; days are numbered 1..N in file order."""
    rows = _read_rows(path, CSV_COLUMNS)
    dates, vals = _parse_dates_and_numbers(rows, ("underlying", "option"))
    for (lineno, _), s in zip(rows, vals["underlying"]):
        if s <= 0:
            raise ParseError(f"underlying price must be > 0, got {s}", line=lineno)
    n = len(dates)
    meta = {"contract_id": contract_id or Path(path).stem, "source": str(path)}
    return MarketSeries(days=np.arange(1, n + 1, dtype=float), underlying=vals["underlying"],
                        option=vals["option"], dates=dates, meta=meta)


def load_history(path) -> np.ndarray:
    """Underlying prices from a ``date,underlying[,...]`` CSV (for the estimation window)."""
    rows = _read_rows(path, ("date", "underlying"))
    _, vals = _parse_dates_and_numbers(rows, ("underlying",))
    prices = np.asarray(vals["underlying"])
    if np.any(prices <= 0):
        raise ParseError("underlying prices must be > 0")
    return prices


def write_series(series: MarketSeries, path) -> None:
    dates = series.dates or [str(int(d)) for d in series.days]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for d, s, p in zip(dates, series.underlying, series.option):
            w.writerow([d, repr(float(s)), repr(float(p))])


def estimate_params(pre_series, window: EstimationWindow = EstimationWindow()) -> MarketParams:
    """sigma and mu from daily log-returns over the last ``pre_window`` prices.

    ``sigma`` is the sample standard deviation and ``mu`` the sample mean of
    the log-returns; ``r`` is taken from the window. A flat history yields
    ``sigma = 0``, which ``MarketParams.valid_for_pricing`` reports as unusable.
    """
    prices = np.asarray(pre_series, dtype=float)
    if prices.size < window.pre_window:
        raise InsufficientHistoryError(
            f"need {window.pre_window} prices for the estimation window, got {prices.size}")
    if np.any(~(prices > 0)):
        raise ModelDomainError("history prices must be > 0")
    rets = np.diff(np.log(prices[-window.pre_window:]))
    sigma = float(np.std(rets, ddof=1)) if rets.size > 1 else 0.0
    return MarketParams(r=window.rate, mu=float(np.mean(rets)), sigma=sigma)


def simulated_option_price(F, K):
    """Intrinsic value ``max(F - K, 0)`` used as the simulated market price."""
    out = np.maximum(np.asarray(F, dtype=float) - K, 0.0)
    return out[()] if out.ndim == 0 else out


def simulate_gbm_path(s0: float, params: MarketParams, n_days: int, seed: int) -> np.ndarray:
    """Exact lognormal daily GBM path of ``n_days`` prices starting at ``s0``."""
    if n_days < 1:
        raise ModelDomainError("n_days must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n_days - 1)
    steps = (params.mu - 0.5 * params.sigma ** 2) + params.sigma * z
    return s0 * np.exp(np.concatenate(([0.0], np.cumsum(steps))))


def business_dates(start: str, n: int) -> list[str]:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return [str(d) for d in np.busday_offset(first, np.arange(n), roll="forward")]


def synthesize_market(params: MarketParams, contract: OptionContract, spec: BubbleSpec, n_days: int,
                      seed: int, s0: float | None = None, grid: GridSpec | None = None,
                      start_date: str = "2000-01-03") -> MarketSeries:
    """Synthetic market whose option prices solve the interacting equation.

    Days run 1..n_days; the underlying follows an exact-lognormal GBM from
    ``s0`` (default: the strike, i.e. the strike equals the opening price).
    Option prices are the PDE solution with the planted bubble's potential,
    read off the surface along the path.
    """
    if n_days > contract.maturity_T:
        raise ModelDomainError(f"n_days={n_days} exceeds maturity T={contract.maturity_T}")
    spec.validate(contract.maturity_T, params)
    s0 = contract.strike if s0 is None else float(s0)
    days = np.arange(1, n_days + 1, dtype=float)
    path = simulate_gbm_path(s0, params, n_days, seed)
    if grid is None:
        grid = default_grid(contract, t_start=days[0])
    surface = solve_interacting(contract, params, spec, grid, t_start=days[0])
    option = evaluate_on_path(surface, days, path)
    meta = {"contract_id": f"synthetic-seed{seed}", "seed": seed, "bubble": spec.to_dict()}
    return MarketSeries(days=days, underlying=path, option=option,
                        dates=business_dates(start_date, n_days), meta=meta)
