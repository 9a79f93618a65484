"""Extended Chiarella dynamics on top of the limit order book.

Aggregate demand per step combines four components: fundamentalist
mean-reversion kappa*(v_t - p_t)*dt, medium-frequency momentum
beta*tanh(gamma_m*M_t), high-frequency momentum
beta_hf*tanh(gamma_hf*Mhf_t), and Gaussian noise sigma_N*eps*sqrt(dt).
Price moves by kyle_lambda times the demand.

The medium trend M_t is an EWMA of one-step price changes. The
high-frequency trend is an EWMA of one-step *fractional returns*: the
calibration prior puts beta_hf four to six orders of magnitude above the
other demand scales, and measuring the fast trend in return units is
what keeps its tanh argument small enough for all four components to
coexist on one price path.

The book mapping: a background ZI-style limit flow anchored at the
current model price supplies liquidity (crossing limit orders let the
book chase the model price), and each step's aggregate demand becomes
one market order of volume round(order_scale*|d|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .fastbook import AggregateBook
from .records import QuoteStream, SimRecord
from .zi import ParameterError, _sample_depths


class SimulationDivergedError(RuntimeError):
    """Raised when the model price stops being finite."""


@dataclass(frozen=True)
class ThetaChiarella:
    """Demand parameters in natural units (log10 space for sampling)."""

    sigma_n: float  # noise demand std
    beta: float  # momentum demand scale
    gamma_m: float  # momentum saturation
    kappa: float  # fundamental mispricing coefficient
    beta_hf: float  # high-frequency momentum scale
    gamma_hf: float  # high-frequency saturation

    def __post_init__(self):
        for name in ("sigma_n", "beta", "gamma_m", "kappa", "beta_hf", "gamma_hf"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0")

    @staticmethod
    def from_log10(values) -> "ThetaChiarella":
        s, b, g, k, bh, gh = (10.0 ** float(v) for v in values)
        return ThetaChiarella(s, b, g, k, bh, gh)

    def to_log10(self) -> np.ndarray:
        return np.log10(
            [self.sigma_n, self.beta, self.gamma_m, self.kappa, self.beta_hf, self.gamma_hf]
        )


@dataclass(frozen=True)
class BackgroundFlow:
    """ZI-style liquidity flow anchored at the model price."""

    limit_rate: float = 60.0  # mean limit orders per step
    depth_rate: float = 0.25  # exponential depth rate (mean 4 ticks)
    cancel_prob: float = 0.02


@dataclass(frozen=True)
class ChiarellaConfig:
    """Fixed (non-calibrated) model and book-mapping parameters.

    The defaults were chosen by a stability sweep over the calibration
    prior: kyle_lambda*dt*kappa stays below 2 (no explosive fundamental
    overshoot) for every kappa in the prior box, the per-step noise
    impact kyle_lambda*sigma_N*sqrt(dt) spans roughly 0.1-11 ticks, and
    the momentum feedback loops go super-critical only in small corners
    of the prior (where tanh saturation still bounds the excursions).
    """

    dt: float = 0.02
    kyle_lambda: float = 80.0
    alpha_m: float = 0.002
    alpha_hf: float = 0.01
    fundamental: str = "constant"  # "constant" | "random-walk"
    fundamental_walk_std: float = 0.0
    order_scale: float = 1.0
    background: BackgroundFlow = field(default_factory=BackgroundFlow)
    n_steps: int = 600
    initial_price: int = 300_000
    seed: int = 0
    grid_size: int = 660_000
    price_floor: float = 1.0
    price_cap: Optional[float] = None  # default: grid_size - 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError("dt must be > 0")
        if self.kyle_lambda <= 0:
            raise ParameterError("kyle_lambda must be > 0")
        if not (0 < self.alpha_m <= 1) or not (0 < self.alpha_hf <= 1):
            raise ParameterError("decay rates must be in (0, 1]")
        if self.alpha_hf <= self.alpha_m:
            raise ParameterError("alpha_hf must exceed alpha_m")
        if self.fundamental not in ("constant", "random-walk"):
            raise ParameterError(f"unknown fundamental spec {self.fundamental!r}")

    @property
    def effective_cap(self) -> float:
        return self.price_cap if self.price_cap is not None else float(self.grid_size - 1)


@dataclass
class ChiarellaState:
    price: float
    trend: float = 0.0  # EWMA of price changes
    trend_hf: float = 0.0  # EWMA of fractional returns
    fundamental: float = 0.0

    def check_finite(self):
        if not (
            math.isfinite(self.price)
            and math.isfinite(self.trend)
            and math.isfinite(self.trend_hf)
        ):
            raise SimulationDivergedError(
                f"non-finite state: p={self.price}, M={self.trend}, Mhf={self.trend_hf}"
            )


# ----------------------------------------------------------------------
# demand components


def demand_fundamental(kappa: float, v_t: float, p_t: float, dt: float) -> float:
    return kappa * (v_t - p_t) * dt


def demand_momentum(beta: float, gamma: float, trend: float) -> float:
    return beta * math.tanh(gamma * trend)


def demand_noise(sigma_n: float, eps: float, dt: float) -> float:
    return sigma_n * eps * math.sqrt(dt)


def update_trend(trend: float, alpha: float, price_change: float) -> float:
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must be in (0, 1]")
    return (1.0 - alpha) * trend + alpha * price_change


# ----------------------------------------------------------------------


def chiarella_step(
    state: ChiarellaState,
    theta: ThetaChiarella,
    config: ChiarellaConfig,
    eps: float,
):
    """One demand/price/trend update. Returns (new_state, demand)."""
    state.check_finite()
    d = (
        demand_fundamental(theta.kappa, state.fundamental, state.price, config.dt)
        + demand_momentum(theta.beta, theta.gamma_m, state.trend)
        + demand_momentum(theta.beta_hf, theta.gamma_hf, state.trend_hf)
        + demand_noise(theta.sigma_n, eps, config.dt)
    )
    new_price = state.price + config.kyle_lambda * d
    new_price = min(max(new_price, config.price_floor), config.effective_cap)
    dp = new_price - state.price
    new_state = ChiarellaState(
        price=new_price,
        trend=update_trend(state.trend, config.alpha_m, dp),
        # fractional return against the fixed session-start price: dividing
        # by the current price would amplify the feedback as price falls
        trend_hf=update_trend(state.trend_hf, config.alpha_hf, dp / config.initial_price),
        fundamental=state.fundamental,
    )
    new_state.check_finite()
    return new_state, d


def run_chiarella(theta: ThetaChiarella, config: ChiarellaConfig) -> SimRecord:
    """Simulate a session; deterministic given config.seed."""
    rng = np.random.default_rng(config.seed)
    book = AggregateBook(size=config.grid_size, initial_price=config.initial_price)
    bg = config.background
    state = ChiarellaState(price=float(config.initial_price),
                           fundamental=float(config.initial_price))
    n = config.n_steps
    rec = _ChRecorder(n)
    for t in range(n):
        # 1. background liquidity anchored at the model price
        if bg.cancel_prob > 0:
            book.cancel_binomial(rng, bg.cancel_prob)
        n_bg = rng.poisson(bg.limit_rate)
        if n_bg:
            anchor = int(round(state.price))
            is_bid = rng.random(n_bg) < 0.5
            depths = _sample_depths(rng, bg.depth_rate, n_bg)
            for i in range(n_bg):
                d_i = int(depths[i])
                if is_bid[i]:
                    price = max(1, min(book.size, anchor - d_i))
                    book.add_limit_crossing(0, price, 1)
                else:
                    price = max(1, min(book.size, anchor + d_i))
                    book.add_limit_crossing(1, price, 1)
        quote_a = book.touch()
        # 2. demand update and price impact
        if config.fundamental == "random-walk" and config.fundamental_walk_std > 0:
            state.fundamental += rng.normal(0.0, config.fundamental_walk_std)
        eps = rng.standard_normal()
        state, demand = chiarella_step(state, theta, config, eps)
        # 3. demand hits the book as one market order
        volume = int(round(config.order_scale * abs(demand)))
        executed = 0
        if volume > 0:
            executed = book.market(0 if demand > 0 else 1, volume)
        quote_b = book.touch()
        rec.add_step(t, quote_a, quote_b, book.mid(),
                     book.last_trade if book.last_trade > 0 else None,
                     executed, state.price)
    book.clear()
    return rec.finish()


class _ChRecorder:
    def __init__(self, n: int):
        from .zi import _Recorder

        self.inner = _Recorder(n)
        self.model_price = np.zeros(n)

    def add_step(self, t, quote_a, quote_b, mid, last_trade, traded, model_price):
        self.inner.add_step(t, quote_a, quote_b, mid, last_trade, traded)
        self.model_price[t] = model_price

    def finish(self) -> SimRecord:
        rec = self.inner.finish()
        return replace_model_price(rec, self.model_price)


def replace_model_price(rec: SimRecord, model_price: np.ndarray) -> SimRecord:
    rec.model_price = model_price
    return rec
