"""Aggregate-volume order book used by the batch simulation engines.

ZI orders are unit-volume and statistically exchangeable, so the book
state reduces to per-level volume counts: FIFO identity never affects
prices, volumes, or which level a cancellation hits (uniform choice over
resting orders == volume-weighted choice over levels). This array-backed
book is orders of magnitude faster than the object engine in
:mod:`marketcal.lob` and is what the dataset builder runs on; the object
engine remains the reference for matching semantics.
"""

from __future__ import annotations

import numpy as np


class GridOverflowError(RuntimeError):
    """Simulated prices escaped the pre-allocated price grid."""


class AggregateBook:
    """Per-level volume book on a fixed integer price grid [1, size]."""

    def __init__(self, size: int, initial_price: int):
        if not 1 <= initial_price <= size:
            raise ValueError("initial price outside the price grid")
        self.size = size
        self.initial_price = initial_price
        # index i holds volume at price i (index 0 unused: prices >= 1)
        self.bid_vol = np.zeros(size + 1, dtype=np.int64)
        self.ask_vol = np.zeros(size + 1, dtype=np.int64)
        self.best_bid = -1  # -1 == side empty
        self.best_ask = -1
        self.bid_lo = self.bid_hi = initial_price  # occupied window (inclusive)
        self.ask_lo = self.ask_hi = initial_price
        self.bid_count = 0
        self.ask_count = 0
        self.last_trade = -1

    # ------------------------------------------------------------------

    def mid(self) -> float:
        if self.best_bid > 0 and self.best_ask > 0:
            return (self.best_bid + self.best_ask) / 2
        if self.last_trade > 0:
            return float(self.last_trade)
        return float(self.initial_price)

    def resting_count(self) -> int:
        return self.bid_count + self.ask_count

    def touch(self):
        bb, ba = self.best_bid, self.best_ask
        return (
            bb if bb > 0 else None,
            int(self.bid_vol[bb]) if bb > 0 else 0,
            ba if ba > 0 else None,
            int(self.ask_vol[ba]) if ba > 0 else 0,
        )

    # ------------------------------------------------------------------

    def add_limits(self, side: int, prices: np.ndarray) -> None:
        """Rest a batch of non-crossing unit-volume limit orders."""
        if len(prices) == 0:
            return
        if side == 0:
            np.add.at(self.bid_vol, prices, 1)
            self.bid_count += len(prices)
            pmax = int(prices.max())
            self.bid_lo = min(self.bid_lo, int(prices.min()))
            self.bid_hi = max(self.bid_hi, pmax)
            if pmax > self.best_bid:
                self.best_bid = pmax
        else:
            np.add.at(self.ask_vol, prices, 1)
            self.ask_count += len(prices)
            pmin = int(prices.min())
            self.ask_lo = min(self.ask_lo, pmin)
            self.ask_hi = max(self.ask_hi, int(prices.max()))
            if self.best_ask < 0 or pmin < self.best_ask:
                self.best_ask = pmin

    def add_limit_crossing(self, side: int, price: int, volume: int) -> int:
        """Limit order that may cross; returns executed volume, rests the rest."""
        executed = 0
        if side == 0:
            while volume > 0 and self.best_ask > 0 and self.best_ask <= price:
                took = self._eat(1, self.best_ask, volume)
                executed += took
                volume -= took
        else:
            while volume > 0 and self.best_bid > 0 and self.best_bid >= price:
                took = self._eat(0, self.best_bid, volume)
                executed += took
                volume -= took
        if volume > 0:
            if not 1 <= price <= self.size:
                raise GridOverflowError(f"limit price {price} outside grid")
            if side == 0:
                self.bid_vol[price] += volume
                self.bid_count += volume
                self.bid_lo = min(self.bid_lo, price)
                self.bid_hi = max(self.bid_hi, price)
                if price > self.best_bid:
                    self.best_bid = price
            else:
                self.ask_vol[price] += volume
                self.ask_count += volume
                self.ask_lo = min(self.ask_lo, price)
                self.ask_hi = max(self.ask_hi, price)
                if self.best_ask < 0 or price < self.best_ask:
                    self.best_ask = price
        return executed

    def market(self, side: int, volume: int) -> int:
        """Market order; side 0 buys (hits asks), side 1 sells. Returns fill."""
        maker_side = 1 - side
        best = self.best_ask if maker_side == 1 else self.best_bid
        if best < 0 or volume <= 0:
            return 0
        vols = self.ask_vol if maker_side == 1 else self.bid_vol
        if volume <= vols[best]:
            return self._eat(maker_side, best, volume)
        return self._market_bulk(maker_side, volume)

    def _market_bulk(self, maker_side: int, volume: int) -> int:
        """Consume several levels at once via a cumulative-volume cut."""
        if maker_side == 1:
            lo, hi = self.best_ask, self.ask_hi
            seg = self.ask_vol[lo : hi + 1]
        else:
            lo, hi = self.bid_lo, self.best_bid
            seg = self.bid_vol[lo : hi + 1][::-1]  # walk downward from best
        cum = np.cumsum(seg)
        executed = int(min(volume, cum[-1]))
        # first index where cumulative volume reaches the target
        cut = int(np.searchsorted(cum, executed))
        consumed_before = int(cum[cut - 1]) if cut > 0 else 0
        seg[:cut] = 0
        seg[cut] -= executed - consumed_before
        if maker_side == 1:
            self.ask_count -= executed
            self.last_trade = lo + cut if executed > 0 else self.last_trade
            self.best_ask = self._scan_ask(lo)
        else:
            self.bid_count -= executed
            self.last_trade = hi - cut if executed > 0 else self.last_trade
            self.best_bid = self._scan_bid(hi)
        return executed

    def _eat(self, maker_side: int, price: int, volume: int) -> int:
        """Consume up to `volume` from the level; updates best pointers."""
        vols = self.bid_vol if maker_side == 0 else self.ask_vol
        took = min(volume, int(vols[price]))
        vols[price] -= took
        self.last_trade = price
        if maker_side == 0:
            self.bid_count -= took
            if vols[price] == 0:
                self.best_bid = self._scan_bid(price - 1)
        else:
            self.ask_count -= took
            if vols[price] == 0:
                self.best_ask = self._scan_ask(price + 1)
        return took

    def _scan_bid(self, start: int) -> int:
        lo = self.bid_lo
        if start < lo or self.bid_count == 0:
            return -1
        seg = self.bid_vol[lo : start + 1]
        nz = np.nonzero(seg)[0]
        if len(nz) == 0:
            return -1
        return int(lo + nz[-1])

    def _scan_ask(self, start: int) -> int:
        hi = self.ask_hi
        if start > hi or self.ask_count == 0:
            return -1
        seg = self.ask_vol[start : hi + 1]
        nz = np.nonzero(seg)[0]
        if len(nz) == 0:
            return -1
        return int(start + nz[0])

    # ------------------------------------------------------------------

    def cancel_binomial(self, rng: np.random.Generator, delta: float) -> int:
        """Cancel each resting order independently with probability delta."""
        cancelled = 0
        if self.bid_count > 0:
            lo, hi = self.bid_lo, self.bid_hi
            seg = self.bid_vol[lo : hi + 1]
            drops = rng.binomial(seg, delta)
            ndrop = int(drops.sum())
            if ndrop:
                seg -= drops
                self.bid_count -= ndrop
                cancelled += ndrop
                if self.best_bid > 0 and self.bid_vol[self.best_bid] == 0:
                    self.best_bid = self._scan_bid(self.best_bid - 1)
        if self.ask_count > 0:
            lo, hi = self.ask_lo, self.ask_hi
            seg = self.ask_vol[lo : hi + 1]
            drops = rng.binomial(seg, delta)
            ndrop = int(drops.sum())
            if ndrop:
                seg -= drops
                self.ask_count -= ndrop
                cancelled += ndrop
                if self.best_ask > 0 and self.ask_vol[self.best_ask] == 0:
                    self.best_ask = self._scan_ask(self.best_ask + 1)
        return cancelled

    def clear(self) -> int:
        count = self.resting_count()
        self.bid_vol[:] = 0
        self.ask_vol[:] = 0
        self.best_bid = self.best_ask = -1
        self.bid_lo = self.bid_hi = self.initial_price
        self.ask_lo = self.ask_hi = self.initial_price
        self.bid_count = self.ask_count = 0
        return count
