"""Zero-intelligence trader simulation.

Each timestep: (1) every resting order is independently cancelled with
probability delta, (2) Binomial(N_a, alpha/N_a) unit limit orders arrive,
side fair-coin, priced an exponential depth away from the mid, (3)
Binomial(N_a, mu/N_a) unit market orders arrive, side fair-coin. alpha
and mu are mean order counts per timestep; dividing by N_a turns them
into per-agent submission probabilities.

Two engines produce the per-second record:

* ``reference`` drives :class:`marketcal.lob.OrderBook` order by order,
  recomputing the mid before every limit placement;
* ``fast`` (default) runs on :class:`marketcal.fastbook.AggregateBook`
  and prices each step's limit batch off the step-start mid. Limit
  orders cannot cross under either convention, and the two engines are
  statistically indistinguishable at the sampled-record level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .fastbook import AggregateBook
from .lob import Order, OrderBook, OrderKind, Side, Trade
from .records import QuoteStream, SimRecord


class ParameterError(ValueError):
    """Raised for out-of-domain model parameters."""


@dataclass(frozen=True)
class ThetaZI:
    """ZI rates in natural units (sampled and reported in log10 space)."""

    alpha: float  # mean limit orders per timestep
    mu: float  # mean market orders per timestep
    delta: float  # per-order cancellation probability per timestep
    lam: float  # exponential depth rate, ticks^-1 (mean depth 1/lam)

    def __post_init__(self):
        for name in ("alpha", "mu", "delta", "lam"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.delta > 1:
            raise ParameterError("delta is a probability, must be <= 1")

    @staticmethod
    def from_log10(values) -> "ThetaZI":
        a, m, d, l = (10.0 ** float(v) for v in values)
        return ThetaZI(alpha=a, mu=m, delta=d, lam=l)

    def to_log10(self) -> np.ndarray:
        return np.log10([self.alpha, self.mu, self.delta, self.lam])


@dataclass(frozen=True)
class ZIConfig:
    n_agents: int = 10_000
    n_steps: int = 600
    initial_price: int = 1_000
    seed: int = 0
    grid_size: int = 8_192
    warmup_steps: int = 0  # steps simulated before recording starts

    def __post_init__(self):
        if self.n_agents < 1:
            raise ParameterError("n_agents must be >= 1")
        if self.n_steps < 1:
            raise ParameterError("n_steps must be >= 1")
        if self.initial_price < 1:
            raise ParameterError("initial_price must be >= 1 tick")


def sample_depth(rng: np.random.Generator, lam: float, mid: Optional[float] = None) -> int:
    """One depth draw: max(1, round(Exp(rate=lam))), clamped to keep prices >= 1."""
    if lam <= 0:
        raise ParameterError("lam must be > 0")
    depth = max(1, int(round(rng.exponential(1.0 / lam))))
    if mid is not None:
        depth = min(depth, max(1, int(math.floor(mid)) - 1))
    return depth


def _sample_depths(rng: np.random.Generator, lam: float, n: int) -> np.ndarray:
    if lam <= 0:
        raise ParameterError("lam must be > 0")
    draws = rng.exponential(1.0 / lam, size=n)
    return np.maximum(1, np.rint(draws)).astype(np.int64)


def _rates(theta: ThetaZI, n_agents: int):
    p_limit = theta.alpha / n_agents
    p_market = theta.mu / n_agents
    if p_limit > 1 or p_market > 1:
        raise ParameterError(
            "per-agent submission probability exceeds 1; increase n_agents"
        )
    return p_limit, p_market


def zi_step(
    book: OrderBook,
    theta: ThetaZI,
    config: ZIConfig,
    rng: np.random.Generator,
    id_source=None,
) -> List[Trade]:
    """One reference-engine timestep against the object book.

    Draw order is fixed: cancellations, limit orders, market orders.
    Returns the trades executed during the step.
    """
    if id_source is None:
        id_source = iter(range(10**9))
    p_limit, p_market = _rates(theta, config.n_agents)

    # 1. independent cancellation of every resting order
    resting = book.resting_orders()
    if resting and theta.delta > 0:
        n_cancel = rng.binomial(len(resting), theta.delta)
        if n_cancel:
            picks = rng.choice(len(resting), size=n_cancel, replace=False)
            for k in picks:
                book.cancel(resting[k].id)

    # 2. limit orders, priced off the current mid one at a time
    trades: List[Trade] = []
    n_limit = rng.binomial(config.n_agents, p_limit)
    sides = rng.random(n_limit) < 0.5
    for is_bid in sides:
        mid = book.mid_price()
        depth = sample_depth(rng, theta.lam, mid=mid if is_bid else None)
        if is_bid:
            price = int(math.floor(mid)) - depth
            price = max(1, price)
            side = Side.BID
        else:
            price = int(math.ceil(mid)) + depth
            side = Side.ASK
        order = Order(
            id=next(id_source), side=side, kind=OrderKind.LIMIT, price=price, volume=1,
            submitted_at=book.clock,
        )
        trades.extend(book.submit_limit(order))

    # 3. market orders
    n_market = rng.binomial(config.n_agents, p_market)
    mkt_sides = rng.random(n_market) < 0.5
    for is_buy in mkt_sides:
        order = Order(
            id=next(id_source),
            side=Side.BID if is_buy else Side.ASK,
            kind=OrderKind.MARKET,
            price=None,
            volume=1,
            submitted_at=book.clock,
        )
        trades.extend(book.submit_market(order))
    return trades


def run_zi(theta: ThetaZI, config: ZIConfig, engine: str = "fast") -> SimRecord:
    """Simulate a session and return the per-second record."""
    if engine == "fast":
        return _run_fast(theta, config)
    if engine == "reference":
        return _run_reference(theta, config)
    raise ValueError(f"unknown engine {engine!r}")


def _run_reference(theta: ThetaZI, config: ZIConfig) -> SimRecord:
    import itertools

    rng = np.random.default_rng(config.seed)
    book = OrderBook(initial_price=config.initial_price)
    rec = _Recorder(config.n_steps)
    ids = itertools.count()
    for t in range(config.n_steps):
        book.clock = t
        trades = zi_step(book, theta, config, rng, id_source=ids)
        snap = book.snapshot()
        quote = (snap.best_bid_price, snap.best_bid_volume,
                 snap.best_ask_price, snap.best_ask_volume)
        rec.add_step(t, quote, quote, snap.mid_price, book.last_trade_price,
                     sum(tr.volume for tr in trades))
    book.clear_expired()
    return rec.finish()


def _run_fast(theta: ThetaZI, config: ZIConfig) -> SimRecord:
    rng = np.random.default_rng(config.seed)
    book = AggregateBook(size=config.grid_size, initial_price=config.initial_price)
    p_limit, p_market = _rates(theta, config.n_agents)
    rec = _Recorder(config.n_steps)
    lam = theta.lam
    if lam <= 0:
        raise ParameterError("lam must be > 0")
    n_agents = config.n_agents
    total = config.warmup_steps + config.n_steps
    for step in range(total):
        t = step - config.warmup_steps
        # 1. cancellations
        if theta.delta > 0:
            book.cancel_binomial(rng, theta.delta)
        # 2. limit batch priced off the step-start mid
        n_limit = int(rng.binomial(n_agents, p_limit)) if p_limit > 0 else 0
        mid = book.mid()
        if n_limit:
            is_bid = rng.random(n_limit) < 0.5
            depths = _sample_depths(rng, lam, n_limit)
            nb = int(is_bid.sum())
            if nb:
                bid_floor = int(math.floor(mid))
                d = np.minimum(depths[is_bid], max(1, bid_floor - 1))
                book.add_limits(0, np.maximum(1, bid_floor - d))
            if n_limit - nb:
                ask_ceil = int(math.ceil(mid))
                d = np.maximum(1, np.minimum(depths[~is_bid], book.size - ask_ceil))
                book.add_limits(1, np.minimum(book.size, ask_ceil + d))
        quote_a = book.touch()
        # 3. market orders, sequential
        executed = 0
        n_market = int(rng.binomial(n_agents, p_market)) if p_market > 0 else 0
        if n_market:
            buys = rng.random(n_market) < 0.5
            for is_buy in buys:
                executed += book.market(0 if is_buy else 1, 1)
        if t >= 0:
            quote_b = book.touch()
            rec.add_step(t, quote_a, quote_b, book.mid(),
                         book.last_trade if book.last_trade > 0 else None, executed)
    book.clear()
    return rec.finish()


class _Recorder:
    """Accumulates per-step snapshots plus two quote events per step."""

    def __init__(self, n_steps: int):
        n = n_steps
        self.t = np.arange(n, dtype=np.int64)
        self.bb = np.full(n, np.nan)
        self.bbv = np.zeros(n)
        self.ba = np.full(n, np.nan)
        self.bav = np.zeros(n)
        self.mid = np.full(n, np.nan)
        self.lt = np.full(n, np.nan)
        self.vol = np.zeros(n)
        self.q_int = np.repeat(np.arange(n, dtype=np.int64), 2)
        self.q_bp = np.full(2 * n, np.nan)
        self.q_bv = np.zeros(2 * n)
        self.q_ap = np.full(2 * n, np.nan)
        self.q_av = np.zeros(2 * n)

    def add_step(self, t, quote_a, quote_b, mid, last_trade, traded_volume):
        self.bb[t] = np.nan if quote_b[0] is None else quote_b[0]
        self.bbv[t] = quote_b[1]
        self.ba[t] = np.nan if quote_b[2] is None else quote_b[2]
        self.bav[t] = quote_b[3]
        self.mid[t] = mid
        self.lt[t] = np.nan if last_trade is None else last_trade
        self.vol[t] = traded_volume
        for j, q in ((2 * t, quote_a), (2 * t + 1, quote_b)):
            self.q_bp[j] = np.nan if q[0] is None else q[0]
            self.q_bv[j] = q[1]
            self.q_ap[j] = np.nan if q[2] is None else q[2]
            self.q_av[j] = q[3]

    def finish(self) -> SimRecord:
        return SimRecord(
            timestep=self.t,
            best_bid=self.bb,
            best_bid_vol=self.bbv,
            best_ask=self.ba,
            best_ask_vol=self.bav,
            mid=self.mid,
            last_trade=self.lt,
            traded_volume=self.vol,
            quotes=QuoteStream(self.q_int, self.q_bp, self.q_bv, self.q_ap, self.q_av),
        )
