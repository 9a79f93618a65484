"""Fixed-length observation vectors for calibration.

Touch features are [best bid price, best bid volume, best ask price,
best ask volume] at one-second intervals; VWAP features are the
volume-weighted average best bid / best ask price over each interval.
Values are laid out channel-blocked: all T samples of channel 0, then
channel 1, etc.

Normalization maps each price channel to log-returns against its first
sample and z-scores every channel with statistics fitted on the training
split only (stats carry a provenance tag so leakage is assertable).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .records import SimRecord

logger = logging.getLogger(__name__)

TOUCH_CHANNELS = ("best_bid_price", "best_bid_volume", "best_ask_price", "best_ask_volume")
VWAP_CHANNELS = ("bid_vwap", "ask_vwap")
PRICE_CHANNELS = {
    "touch": (0, 2),
    "vwap": (0, 1),
}


class FeatureLengthError(ValueError):
    """Record too short for the requested observation length."""


@dataclass
class SummarySeries:
    kind: str  # "touch" | "vwap"
    length: int  # T, sampled seconds
    sample_interval: float = 1.0
    values: np.ndarray = None  # flat, channel-blocked, length n_channels*T

    @property
    def n_channels(self) -> int:
        return 4 if self.kind == "touch" else 2

    def channel(self, c: int) -> np.ndarray:
        return self.values[c * self.length : (c + 1) * self.length]


def _locf(col: np.ndarray) -> np.ndarray:
    """Last observation carried forward; leading NaNs backfilled."""
    col = col.copy()
    mask = np.isnan(col)
    if mask.all():
        return col
    idx = np.where(~mask, np.arange(len(col)), -1)
    np.maximum.accumulate(idx, out=idx)
    valid = idx >= 0
    col[valid] = col[np.maximum(idx[valid], 0)]
    if not valid.all():  # leading gap: backfill from first observation
        first = col[valid][0]
        col[~valid] = first
    return col


def extract_touch(record: SimRecord, T: int) -> SummarySeries:
    if len(record) < T:
        raise FeatureLengthError(f"record has {len(record)} ticks, need {T}")
    mid = _locf(record.mid[:T])
    bb = record.best_bid[:T].copy()
    ba = record.best_ask[:T].copy()
    bbv = record.best_bid_vol[:T].astype(float).copy()
    bav = record.best_ask_vol[:T].astype(float).copy()
    # a missing side contributes the mid price with zero volume
    bb_missing = np.isnan(bb)
    ba_missing = np.isnan(ba)
    bb[bb_missing] = mid[bb_missing]
    ba[ba_missing] = mid[ba_missing]
    bbv[bb_missing] = 0.0
    bav[ba_missing] = 0.0
    values = np.concatenate([bb, bbv, ba, bav])
    return SummarySeries(kind="touch", length=T, values=values)


def extract_vwap(record: SimRecord, T: int) -> SummarySeries:
    if len(record) < T:
        raise FeatureLengthError(f"record has {len(record)} ticks, need {T}")
    mid = _locf(record.mid[:T])
    if record.quotes is not None:
        q = record.quotes
        keep = q.interval < T
        interval = q.interval[keep]
        bid_vwap = _interval_vwap(interval, q.bid_price[keep], q.bid_volume[keep], T)
        ask_vwap = _interval_vwap(interval, q.ask_price[keep], q.ask_volume[keep], T)
    else:
        # one quote per sampled second (ingested CSV path)
        ones = np.arange(T, dtype=np.int64)
        bid_vwap = _interval_vwap(ones, record.best_bid[:T], record.best_bid_vol[:T], T)
        ask_vwap = _interval_vwap(ones, record.best_ask[:T], record.best_ask_vol[:T], T)
    bid_vwap = _locf(bid_vwap)
    ask_vwap = _locf(ask_vwap)
    # still-NaN columns mean that side never quoted: fall back to the mid
    nb, na = np.isnan(bid_vwap), np.isnan(ask_vwap)
    bid_vwap[nb] = mid[nb]
    ask_vwap[na] = mid[na]
    return SummarySeries(kind="vwap", length=T, values=np.concatenate([bid_vwap, ask_vwap]))


def _interval_vwap(interval, price, volume, T) -> np.ndarray:
    price = np.asarray(price, dtype=float)
    volume = np.asarray(volume, dtype=float)
    ok = ~np.isnan(price) & (volume > 0)
    pv = np.zeros(T)
    v = np.zeros(T)
    np.add.at(pv, interval[ok], price[ok] * volume[ok])
    np.add.at(v, interval[ok], volume[ok])
    out = np.full(T, np.nan)
    nz = v > 0
    out[nz] = pv[nz] / v[nz]
    return out


# ----------------------------------------------------------------------
# normalization


@dataclass
class FeatureStats:
    kind: str
    mean: np.ndarray  # per channel, in transformed space
    std: np.ndarray
    provenance: str = "train"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "provenance": self.provenance,
        }

    @staticmethod
    def from_dict(d: dict) -> "FeatureStats":
        return FeatureStats(
            kind=d["kind"],
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            provenance=d.get("provenance", "train"),
        )


def _transform(series: SummarySeries) -> Tuple[np.ndarray, np.ndarray]:
    """Log-return price channels; returns (transformed (C,T), price refs)."""
    T = series.length
    n_ch = series.n_channels
    price_idx = PRICE_CHANNELS[series.kind]
    out = np.empty((n_ch, T))
    refs = np.zeros(n_ch)
    for c in range(n_ch):
        col = series.channel(c)
        if c in price_idx:
            refs[c] = col[0]
            out[c] = np.log(col / col[0])
        else:
            out[c] = col
    return out, refs


def fit_stats(training: Sequence[SummarySeries]) -> FeatureStats:
    """Per-channel moments of the transformed features, training split only."""
    if not training:
        raise ValueError("cannot fit stats on an empty training set")
    kind = training[0].kind
    n_ch = training[0].n_channels
    acc = [[] for _ in range(n_ch)]
    for s in training:
        if s.kind != kind:
            raise ValueError("mixed feature kinds in one training set")
        tr, _ = _transform(s)
        for c in range(n_ch):
            acc[c].append(tr[c])
    mean = np.empty(n_ch)
    std = np.empty(n_ch)
    for c in range(n_ch):
        flat = np.concatenate(acc[c])
        mean[c] = flat.mean()
        s = flat.std()
        if s == 0.0:
            logger.warning("zero-variance channel %d; scale fixed to 1", c)
            s = 1.0
        std[c] = s
    return FeatureStats(kind=kind, mean=mean, std=std, provenance="train")


def n_channels_for(kind: str) -> int:
    return 4 if kind == "touch" else 2


def transform_matrix(X: np.ndarray, kind: str, T: int) -> np.ndarray:
    """Log-return price transform applied to a stacked (N, C*T) matrix."""
    out = np.array(X, dtype=float, copy=True)
    for c in PRICE_CHANNELS[kind]:
        block = out[:, c * T:(c + 1) * T]
        out[:, c * T:(c + 1) * T] = np.log(block / block[:, :1])
    return out


def fit_stats_matrix(X_train: np.ndarray, kind: str, T: int) -> FeatureStats:
    """Matrix form of `fit_stats`; same result as the per-series path."""
    tr = transform_matrix(X_train, kind, T)
    n_ch = n_channels_for(kind)
    mean = np.empty(n_ch)
    std = np.empty(n_ch)
    for c in range(n_ch):
        flat = tr[:, c * T:(c + 1) * T].reshape(-1)
        mean[c] = flat.mean()
        s = flat.std()
        if s == 0.0:
            logger.warning("zero-variance channel %d; scale fixed to 1", c)
            s = 1.0
        std[c] = s
    return FeatureStats(kind=kind, mean=mean, std=std, provenance="train")


def normalize_matrix(X: np.ndarray, kind: str, T: int,
                     stats: FeatureStats) -> np.ndarray:
    if stats.kind != kind:
        raise ValueError(f"stats fitted for {stats.kind!r}, data is {kind!r}")
    tr = transform_matrix(X, kind, T)
    n_ch = n_channels_for(kind)
    for c in range(n_ch):
        tr[:, c * T:(c + 1) * T] = (tr[:, c * T:(c + 1) * T] - stats.mean[c]) / stats.std[c]
    return tr


def normalize(series: SummarySeries, stats: FeatureStats) -> np.ndarray:
    if stats.kind != series.kind:
        raise ValueError(f"stats fitted for {stats.kind!r}, series is {series.kind!r}")
    tr, _ = _transform(series)
    z = (tr - stats.mean[:, None]) / stats.std[:, None]
    return z.reshape(-1)


def normalize_with_refs(series: SummarySeries, stats: FeatureStats):
    tr, refs = _transform(series)
    z = (tr - stats.mean[:, None]) / stats.std[:, None]
    return z.reshape(-1), refs


def denormalize(values: np.ndarray, stats: FeatureStats, refs: np.ndarray,
                kind: str, T: int) -> SummarySeries:
    n_ch = 4 if kind == "touch" else 2
    z = values.reshape(n_ch, T)
    tr = z * stats.std[:, None] + stats.mean[:, None]
    out = np.empty_like(tr)
    price_idx = PRICE_CHANNELS[kind]
    for c in range(n_ch):
        if c in price_idx:
            out[c] = refs[c] * np.exp(tr[c])
        else:
            out[c] = tr[c]
    return SummarySeries(kind=kind, length=T, values=out.reshape(-1))
