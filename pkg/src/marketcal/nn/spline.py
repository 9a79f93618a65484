"""Monotone rational-quadratic splines with linear tails.

Each 1-d transform is a piecewise rational-quadratic bijection on
[-B, B] (identity outside), parameterized by K bin widths, K bin
heights and K-1 interior derivatives: 3K - 1 raw parameters per
dimension. Raw parameters of zero give the exact identity map: widths
and heights soften to uniform bins and the derivative activation is
shifted so softplus(0 + shift) = 1 - min_derivative + min_derivative = 1.

The forward pass is differentiable through the autodiff engine (raw
parameters come from a conditioner network); the inverse is evaluated
in plain numpy via the quadratic formula and is used for sampling only.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from .autodiff import Tensor, concat, softmax, where

DEFAULT_BINS = 8
DEFAULT_BOUND = 3.0
MIN_BIN = 1e-3
MIN_DERIVATIVE = 1e-3

# softplus(shift) == 1 - MIN_DERIVATIVE, so zero raw params give unit slope
DERIVATIVE_SHIFT = math.log(math.expm1(1.0 - MIN_DERIVATIVE))


def n_params(n_bins: int = DEFAULT_BINS) -> int:
    return 3 * n_bins - 1


def _partition(raw: Tensor, n_bins: int) -> Tuple[Tensor, Tensor, Tensor]:
    widths = raw[..., :n_bins]
    heights = raw[..., n_bins:2 * n_bins]
    derivs = raw[..., 2 * n_bins:]
    return widths, heights, derivs


def _bin_edges(raw_sizes: Tensor, n_bins: int, bound: float) -> Tuple[Tensor, Tensor]:
    """Softmax bins with a width floor; returns (sizes, cumulative edges)."""
    probs = softmax(raw_sizes, axis=-1)
    sizes = (probs * (1.0 - MIN_BIN * n_bins) + MIN_BIN) * (2.0 * bound)
    cum = sizes.cumsum(axis=-1) - bound
    return sizes, cum


def _derivatives(raw: Tensor) -> Tensor:
    return (raw + DERIVATIVE_SHIFT).softplus() + MIN_DERIVATIVE


def forward(x: Tensor, raw_params: Tensor, n_bins: int = DEFAULT_BINS,
            bound: float = DEFAULT_BOUND) -> Tuple[Tensor, Tensor]:
    """Apply the spline elementwise. Returns (y, log|dy/dx|).

    `x` has shape (...,); `raw_params` has shape (..., 3K-1). Inputs
    outside [-bound, bound] pass through the identity with zero
    log-derivative. Gradients flow through both `x` and `raw_params`.
    """
    rw, rh, rd = _partition(raw_params, n_bins)
    widths, xcum = _bin_edges(rw, n_bins, bound)
    heights, ycum = _bin_edges(rh, n_bins, bound)
    inner = _derivatives(rd)
    ones_shape = list(inner.data.shape)
    ones_shape[-1] = 1
    ones = Tensor(np.ones(ones_shape))
    derivs = concat([ones, inner, ones], axis=-1)  # boundary slope 1 matches tails

    inside = np.abs(x.data) < bound  # strict: boundary points take identity branch
    # clamp the values fed through the spline branch so it is well-defined
    x_safe = where(inside, x, Tensor(np.zeros_like(x.data)))

    xedges = np.concatenate(
        [np.full((*xcum.data.shape[:-1], 1), -bound), xcum.data], axis=-1)
    # locate bins on detached data; index is a constant of the graph
    k = np.sum(xedges[..., :-1] <= x_safe.data[..., None], axis=-1) - 1
    k = np.clip(k, 0, n_bins - 1)
    kk = k[..., None]

    x_lo = concat([Tensor(np.full((*xcum.data.shape[:-1], 1), -bound)),
                   xcum[..., :-1]], axis=-1).take_along_axis(kk, -1)[..., 0]
    y_lo = concat([Tensor(np.full((*ycum.data.shape[:-1], 1), -bound)),
                   ycum[..., :-1]], axis=-1).take_along_axis(kk, -1)[..., 0]
    w = widths.take_along_axis(kk, -1)[..., 0]
    h = heights.take_along_axis(kk, -1)[..., 0]
    d0 = derivs.take_along_axis(kk, -1)[..., 0]
    d1 = derivs.take_along_axis(kk + 1, -1)[..., 0]
    s = h / w

    xi = (x_safe - x_lo) / w
    xi1m = 1.0 - xi
    denom = s + (d0 + d1 - 2.0 * s) * xi * xi1m
    y_in = y_lo + h * (s * xi * xi + d0 * xi * xi1m) / denom
    logdet_in = ((s * s * (d1 * xi * xi + 2.0 * s * xi * xi1m + d0 * xi1m * xi1m)).log()
                 - denom.log() * 2.0)

    y = where(inside, y_in, x)
    logdet = where(inside, logdet_in, Tensor(np.zeros_like(x.data)))
    return y, logdet


def inverse(y: np.ndarray, raw_params: np.ndarray, n_bins: int = DEFAULT_BINS,
            bound: float = DEFAULT_BOUND) -> np.ndarray:
    """Numerical inverse of `forward` (numpy only, for sampling)."""
    y = np.asarray(y, dtype=np.float64)
    raw = np.asarray(raw_params, dtype=np.float64)
    rw = raw[..., :n_bins]
    rh = raw[..., n_bins:2 * n_bins]
    rd = raw[..., 2 * n_bins:]

    def edges(rs):
        e = np.exp(rs - rs.max(axis=-1, keepdims=True))
        p = e / e.sum(axis=-1, keepdims=True)
        sizes = (p * (1.0 - MIN_BIN * n_bins) + MIN_BIN) * (2.0 * bound)
        cum = np.cumsum(sizes, axis=-1) - bound
        return sizes, np.concatenate(
            [np.full((*cum.shape[:-1], 1), -bound), cum], axis=-1)

    widths, xedges = edges(rw)
    heights, yedges = edges(rh)
    inner = np.logaddexp(0.0, rd + DERIVATIVE_SHIFT) + MIN_DERIVATIVE
    pad = np.ones((*inner.shape[:-1], 1))
    derivs = np.concatenate([pad, inner, pad], axis=-1)

    inside = np.abs(y) < bound
    y_safe = np.where(inside, y, 0.0)
    k = np.sum(yedges[..., :-1] <= y_safe[..., None], axis=-1) - 1
    k = np.clip(k, 0, n_bins - 1)
    take = lambda arr, idx: np.take_along_axis(arr, idx[..., None], -1)[..., 0]
    x_lo = take(xedges, k)
    y_lo = take(yedges, k)
    w = take(widths, k)
    h = take(heights, k)
    d0 = take(derivs, k)
    d1 = take(derivs, k + 1)
    s = h / w

    dy = y_safe - y_lo
    a = h * (s - d0) + dy * (d0 + d1 - 2.0 * s)
    b = h * d0 - dy * (d0 + d1 - 2.0 * s)
    c = -s * dy
    disc = b * b - 4.0 * a * c
    disc = np.maximum(disc, 0.0)
    xi = 2.0 * c / (-b - np.sqrt(disc))  # stable root in [0, 1]
    x = x_lo + xi * w
    return np.where(inside, x, y)
