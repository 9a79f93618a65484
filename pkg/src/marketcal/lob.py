"""Continuous-double-auction matching engine with price-time priority.

Prices are integer ticks (tick size 1) and the mid-price is an exact
half-integer, which keeps all book comparisons free of float rounding.
Cancellation is lazy: a cancelled order is flagged and unlinked from the
aggregate volume immediately, and physically dropped when matching or a
level purge reaches it.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Deque, Dict, List, Optional


class Side(IntEnum):
    BID = 0
    ASK = 1

    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID


class OrderKind(IntEnum):
    LIMIT = 0
    MARKET = 1


class InvalidOrderError(ValueError):
    """Raised when an order violates the book's preconditions."""


@dataclass(slots=True)
class Order:
    id: int
    side: Side
    kind: OrderKind
    price: Optional[int]  # ticks; None for market orders
    volume: int
    submitted_at: int = 0
    agent_id: int = 0
    active: bool = field(default=True, repr=False)


@dataclass(slots=True)
class Trade:
    price: int
    volume: int
    aggressor_side: Side
    maker_order_id: int
    taker_order_id: int
    timestep: int


@dataclass(slots=True)
class MarketSnapshot:
    timestep: int
    best_bid_price: Optional[int]
    best_ask_price: Optional[int]
    best_bid_volume: int
    best_ask_volume: int
    mid_price: float
    last_trade_price: Optional[int]

    @property
    def spread(self) -> Optional[int]:
        if self.best_bid_price is None or self.best_ask_price is None:
            return None
        return self.best_ask_price - self.best_bid_price


class OrderBook:
    """Price-time-priority limit order book over integer ticks."""

    tick_size = 1

    def __init__(self, initial_price: int = 100):
        if initial_price < 1:
            raise InvalidOrderError("initial price must be >= 1 tick")
        self.initial_price = initial_price
        self.clock = 0
        self.last_trade_price: Optional[int] = None
        # per side: price -> FIFO queue of resting orders (may hold
        # lazily-cancelled entries), and price -> live aggregate volume
        self._queues: List[Dict[int, Deque[Order]]] = [{}, {}]
        self._volumes: List[Dict[int, int]] = [{}, {}]
        # lazy best-price heaps: max-heap via negation for bids
        self._heaps: List[List[int]] = [[], []]
        self._orders: Dict[int, Order] = {}
        self._resting = 0

    # ------------------------------------------------------------------
    # queries

    def resting_count(self) -> int:
        return self._resting

    def depth_at(self, side: Side, price: int) -> int:
        return self._volumes[side].get(price, 0)

    def best_price(self, side: Side) -> Optional[int]:
        heap = self._heaps[side]
        vols = self._volumes[side]
        while heap:
            price = -heap[0] if side is Side.BID else heap[0]
            if vols.get(price, 0) > 0:
                return price
            heapq.heappop(heap)
            self._purge_level(side, price)
        return None

    def best_bid(self) -> Optional[int]:
        return self.best_price(Side.BID)

    def best_ask(self) -> Optional[int]:
        return self.best_price(Side.ASK)

    def mid_price(self) -> float:
        bb, ba = self.best_bid(), self.best_ask()
        if bb is not None and ba is not None:
            return (bb + ba) / 2
        if self.last_trade_price is not None:
            return float(self.last_trade_price)
        return float(self.initial_price)

    def snapshot(self) -> MarketSnapshot:
        bb, ba = self.best_bid(), self.best_ask()
        return MarketSnapshot(
            timestep=self.clock,
            best_bid_price=bb,
            best_ask_price=ba,
            best_bid_volume=self._volumes[Side.BID].get(bb, 0) if bb is not None else 0,
            best_ask_volume=self._volumes[Side.ASK].get(ba, 0) if ba is not None else 0,
            mid_price=self.mid_price(),
            last_trade_price=self.last_trade_price,
        )

    def resting_orders(self) -> List[Order]:
        return [o for o in self._orders.values() if o.active]

    # ------------------------------------------------------------------
    # submissions

    def submit_limit(self, order: Order) -> List[Trade]:
        if order.kind is not OrderKind.LIMIT:
            raise InvalidOrderError("submit_limit requires a limit order")
        if order.price is None or order.price < 1:
            raise InvalidOrderError(f"limit price must be >= 1 tick, got {order.price}")
        if order.volume < 1:
            raise InvalidOrderError(f"volume must be >= 1, got {order.volume}")
        if order.id in self._orders:
            raise InvalidOrderError(f"duplicate order id {order.id}")
        trades = self._match(order, limit_price=order.price)
        if order.volume > 0:
            self._rest(order)
        return trades

    def submit_market(self, order: Order) -> List[Trade]:
        if order.kind is not OrderKind.MARKET:
            raise InvalidOrderError("submit_market requires a market order")
        if order.price is not None:
            raise InvalidOrderError("market orders carry no price")
        if order.volume < 1:
            raise InvalidOrderError(f"volume must be >= 1, got {order.volume}")
        # whatever cannot fill is discarded, never queued
        return self._match(order, limit_price=None)

    def cancel(self, order_id: int) -> bool:
        order = self._orders.get(order_id)
        if order is None or not order.active:
            return False
        order.active = False
        side = order.side
        vols = self._volumes[side]
        vols[order.price] -= order.volume
        if vols[order.price] <= 0:
            self._purge_level(side, order.price)
        del self._orders[order_id]
        self._resting -= 1
        return True

    def clear_expired(self) -> int:
        count = self._resting
        for side in (Side.BID, Side.ASK):
            self._queues[side].clear()
            self._volumes[side].clear()
            self._heaps[side].clear()
        self._orders.clear()
        self._resting = 0
        return count

    # ------------------------------------------------------------------
    # internals

    def _match(self, taker: Order, limit_price: Optional[int]) -> List[Trade]:
        maker_side = taker.side.opposite()
        trades: List[Trade] = []
        while taker.volume > 0:
            best = self.best_price(maker_side)
            if best is None:
                break
            if limit_price is not None:
                if taker.side is Side.BID and best > limit_price:
                    break
                if taker.side is Side.ASK and best < limit_price:
                    break
            queue = self._queues[maker_side][best]
            while taker.volume > 0 and queue:
                maker = queue[0]
                if not maker.active:
                    queue.popleft()
                    continue
                vol = min(taker.volume, maker.volume)
                maker.volume -= vol
                taker.volume -= vol
                self._volumes[maker_side][best] -= vol
                if maker.volume == 0:
                    maker.active = False
                    queue.popleft()
                    del self._orders[maker.id]
                    self._resting -= 1
                self.last_trade_price = best
                trades.append(
                    Trade(
                        price=best,
                        volume=vol,
                        aggressor_side=taker.side,
                        maker_order_id=maker.id,
                        taker_order_id=taker.id,
                        timestep=self.clock,
                    )
                )
            if not queue:
                self._purge_level(maker_side, best)
        return trades

    def _rest(self, order: Order) -> None:
        side = order.side
        queue = self._queues[side].get(order.price)
        if queue is None:
            queue = deque()
            self._queues[side][order.price] = queue
            key = -order.price if side is Side.BID else order.price
            heapq.heappush(self._heaps[side], key)
        queue.append(order)
        self._volumes[side][order.price] = self._volumes[side].get(order.price, 0) + order.volume
        self._orders[order.id] = order
        self._resting += 1

    def _purge_level(self, side: Side, price: int) -> None:
        self._queues[side].pop(price, None)
        self._volumes[side].pop(price, None)
