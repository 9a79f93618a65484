"""Evaluation-only stylised-fact metrics.

These never enter the calibration loss; they quantify how market-like a
price/volume record is. Estimator choices (R/S Hurst, method-of-moments
Gamma shape, log-log OLS impact exponent) are deliberately simple and
each is mirrored by a brute-force oracle in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .records import SimRecord


class InputError(ValueError):
    pass


def log_returns(prices: np.ndarray, horizon: int = 1) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    if np.any(prices <= 0):
        raise InputError("prices must be strictly positive")
    if horizon < 1 or horizon >= len(prices):
        raise InputError("horizon must be in [1, len(prices))")
    return np.log(prices[horizon:] / prices[:-horizon])


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation, lags 0..max_lag."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= max_lag:
        raise InputError("series must be longer than max_lag")
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0.0:
        return np.full(max_lag + 1, np.nan)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = np.dot(x[:-k], x[k:]) / denom
    return out


def moments(series: np.ndarray) -> Tuple[float, float]:
    """(skewness, excess kurtosis) via standardized central moments."""
    x = np.asarray(series, dtype=float)
    m = x.mean()
    c = x - m
    var = np.mean(c**2)
    if var == 0.0:
        return 0.0, 0.0
    skew = np.mean(c**3) / var**1.5
    kurt = np.mean(c**4) / var**2 - 3.0
    return float(skew), float(kurt)


def hurst(series: np.ndarray) -> float:
    """Rescaled-range estimate over dyadic window sizes."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 512:
        raise InputError("need at least 512 samples for the R/S estimate")
    sizes = []
    w = 8
    while w <= n // 2:
        sizes.append(w)
        w *= 2
    log_w, log_rs = [], []
    for w in sizes:
        rs_vals = []
        for start in range(0, n - w + 1, w):
            block = x[start : start + w]
            dev = block - block.mean()
            z = np.cumsum(dev)
            r = z.max() - z.min()
            s = block.std()
            if s > 0:
                rs_vals.append(r / s)
        if rs_vals:
            log_w.append(math.log(w))
            log_rs.append(math.log(np.mean(rs_vals)))
    if len(log_w) < 2:
        return float("nan")
    slope = np.polyfit(log_w, log_rs, 1)[0]
    return float(slope)


def _window_stats(returns: np.ndarray, aux: np.ndarray, window: int):
    n = len(returns) // window
    vols = np.empty(n)
    sums = np.empty(n)
    for i in range(n):
        seg = returns[i * window : (i + 1) * window]
        vols[i] = seg.std()
        sums[i] = aux[i * window : (i + 1) * window].sum()
    return vols, sums


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.std() == 0.0 or b.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def vol_volume_correlation(record: SimRecord, window: int = 30) -> float:
    """Pearson correlation of windowed realized volatility and summed volume."""
    prices = _mid(record)
    r = log_returns(prices)
    vols, volsum = _window_stats(r, record.traded_volume[1:], window)
    return _pearson(vols, volsum)


def ret_vol_correlation(record: SimRecord, window: int = 30) -> float:
    """Pearson correlation of windowed mean return and realized volatility."""
    prices = _mid(record)
    r = log_returns(prices)
    n = len(r) // window
    means = np.array([r[i * window : (i + 1) * window].mean() for i in range(n)])
    vols = np.array([r[i * window : (i + 1) * window].std() for i in range(n)])
    return _pearson(means, vols)


def price_impact(trade_volumes: np.ndarray, mid_moves: np.ndarray,
                 n_buckets: int = 8) -> float:
    """Power-law exponent of |mid move| against trade volume.

    Buckets trades by volume, regresses log mean |move| on log mean
    volume. NaN when volumes are degenerate (fewer than two buckets).
    """
    v = np.asarray(trade_volumes, dtype=float)
    m = np.abs(np.asarray(mid_moves, dtype=float))
    ok = (v > 0) & np.isfinite(m)
    v, m = v[ok], m[ok]
    if len(v) == 0 or v.min() == v.max():
        return float("nan")
    edges = np.quantile(v, np.linspace(0, 1, n_buckets + 1))
    edges = np.unique(edges)
    if len(edges) < 3:
        return float("nan")
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, len(edges) - 2)
    log_v, log_m = [], []
    for b in range(len(edges) - 1):
        sel = idx == b
        if sel.sum() == 0:
            continue
        mean_move = m[sel].mean()
        if mean_move <= 0:
            continue
        log_v.append(math.log(v[sel].mean()))
        log_m.append(math.log(mean_move))
    if len(log_v) < 2:
        return float("nan")
    return float(np.polyfit(log_v, log_m, 1)[0])


def fit_gamma(volumes: np.ndarray) -> float:
    """Method-of-moments Gamma shape: mean^2 / variance."""
    v = np.asarray(volumes, dtype=float)
    v = v[np.isfinite(v) & (v > 0)]
    if len(v) < 2:
        return float("nan")
    var = v.var()
    if var == 0.0:
        return float("nan")
    return float(v.mean() ** 2 / var)


@dataclass
class StylisedFactReport:
    skewness: Dict[str, float]
    excess_kurtosis: Dict[str, float]
    acf_returns: np.ndarray
    acf_abs_returns: np.ndarray
    hurst: float
    vol_volume_corr: float
    ret_vol_corr: float
    impact_exponent: float
    gamma_shape_bid: float
    gamma_shape_ask: float

    def to_dict(self) -> dict:
        return {
            "skewness_1s": self.skewness["1s"],
            "skewness_60s": self.skewness["60s"],
            "excess_kurtosis_1s": self.excess_kurtosis["1s"],
            "excess_kurtosis_60s": self.excess_kurtosis["60s"],
            "hurst": self.hurst,
            "vol_volume_corr": self.vol_volume_corr,
            "ret_vol_corr": self.ret_vol_corr,
            "impact_exponent": self.impact_exponent,
            "gamma_shape_bid": self.gamma_shape_bid,
            "gamma_shape_ask": self.gamma_shape_ask,
        }


def _mid(record: SimRecord) -> np.ndarray:
    mid = np.asarray(record.mid, dtype=float)
    if np.isnan(mid).any():
        raise InputError("record mid contains NaNs")
    return mid


def report(record: SimRecord, max_lag: int = 50, window: int = 30) -> StylisedFactReport:
    prices = _mid(record)
    r1 = log_returns(prices, 1)
    skew, kurt = {}, {}
    skew["1s"], kurt["1s"] = moments(r1)
    if len(prices) > 60:
        r60 = log_returns(prices, 60)
        skew["60s"], kurt["60s"] = moments(r60)
    else:
        skew["60s"] = kurt["60s"] = float("nan")
    lags = min(max_lag, len(r1) - 1)
    a_r = acf(r1, lags)
    a_abs = acf(np.abs(r1), lags)
    h = hurst(r1) if len(r1) >= 512 else float("nan")
    impact = price_impact(record.traded_volume[:-1], np.diff(prices))
    return StylisedFactReport(
        skewness=skew,
        excess_kurtosis=kurt,
        acf_returns=a_r,
        acf_abs_returns=a_abs,
        hurst=h,
        vol_volume_corr=vol_volume_correlation(record, window),
        ret_vol_corr=ret_vol_correlation(record, window),
        impact_exponent=impact,
        gamma_shape_bid=fit_gamma(record.best_bid_vol),
        gamma_shape_ask=fit_gamma(record.best_ask_vol),
    )
