"""Per-second market records produced by the simulators.

A :class:`SimRecord` holds one row per sampled second (one simulation
timestep is one second) plus an optional finer stream of best-quote
observations used for VWAP aggregation. The CSV schema matches the
historical-ingestion format:

    timestep,best_bid,best_bid_vol,best_ask,best_ask_vol,mid,last_trade

with empty cells where a side (or the last trade) is missing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

CSV_COLUMNS = (
    "timestep",
    "best_bid",
    "best_bid_vol",
    "best_ask",
    "best_ask_vol",
    "mid",
    "last_trade",
)


class IngestionError(ValueError):
    """Raised for malformed snapshot CSV input."""


@dataclass
class QuoteStream:
    """Best-level quote observations, possibly several per sampled second."""

    interval: np.ndarray  # int, index of the 1-second interval
    bid_price: np.ndarray  # float, NaN when side empty
    bid_volume: np.ndarray
    ask_price: np.ndarray
    ask_volume: np.ndarray

    def __len__(self) -> int:
        return len(self.interval)


@dataclass
class SimRecord:
    timestep: np.ndarray
    best_bid: np.ndarray  # float, NaN when missing
    best_bid_vol: np.ndarray
    best_ask: np.ndarray
    best_ask_vol: np.ndarray
    mid: np.ndarray
    last_trade: np.ndarray  # float, NaN before first trade
    traded_volume: np.ndarray = field(default=None)  # per-second executed volume
    quotes: Optional[QuoteStream] = None
    trade_price: Optional[np.ndarray] = None  # flat per-trade stream (optional)
    trade_volume: Optional[np.ndarray] = None
    trade_step: Optional[np.ndarray] = None
    model_price: Optional[np.ndarray] = None  # Chiarella model price path

    def __post_init__(self):
        if self.traded_volume is None:
            self.traded_volume = np.zeros(len(self.timestep))

    def __len__(self) -> int:
        return len(self.timestep)

    # ------------------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for i in range(len(self)):
                writer.writerow(
                    [
                        int(self.timestep[i]),
                        _cell(self.best_bid[i]),
                        _cell(self.best_bid_vol[i]),
                        _cell(self.best_ask[i]),
                        _cell(self.best_ask_vol[i]),
                        _fmt(self.mid[i]),
                        _cell(self.last_trade[i]),
                    ]
                )


def _cell(value: float) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _fmt(value: float) -> str:
    if np.isnan(value):
        return ""
    return repr(float(value)) if value != int(value) else str(int(value))


def read_csv(path) -> SimRecord:
    """Parse a snapshot CSV back into a :class:`SimRecord`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("empty CSV: missing header") from None
        header = [h.strip() for h in header]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise IngestionError(f"CSV missing required column(s): {', '.join(missing)}")
        idx = {name: header.index(name) for name in CSV_COLUMNS}
        rows = list(reader)
    if not rows:
        raise IngestionError("CSV has no data rows")
    n = len(rows)
    cols = {name: np.full(n, np.nan) for name in CSV_COLUMNS}
    for i, row in enumerate(rows):
        if len(row) < len(header):
            raise IngestionError(f"row {i + 2}: expected {len(header)} cells, got {len(row)}")
        for name in CSV_COLUMNS:
            cell = row[idx[name]].strip()
            if cell == "":
                continue
            try:
                cols[name][i] = float(cell)
            except ValueError:
                raise IngestionError(f"row {i + 2}: non-numeric cell {cell!r} in {name}") from None
    if np.isnan(cols["timestep"]).any():
        raise IngestionError("timestep column contains empty cells")
    return SimRecord(
        timestep=cols["timestep"].astype(np.int64),
        best_bid=cols["best_bid"],
        best_bid_vol=np.nan_to_num(cols["best_bid_vol"]),
        best_ask=cols["best_ask"],
        best_ask_vol=np.nan_to_num(cols["best_ask_vol"]),
        mid=cols["mid"],
        last_trade=cols["last_trade"],
    )
