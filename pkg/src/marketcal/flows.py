"""Conditional normalizing flows: masked affine (MAF) and spline (NSF) stacks.

Density evaluation runs in the x -> z direction through the autodiff
engine; sampling inverts dimension-by-dimension in plain numpy (the
autoregressive inverse needs d conditioner passes). Transforms are
interleaved with order-reversal permutations so every dimension
conditions on every other across the stack. Zero-initialized output
heads make the freshly built flow the exact identity, so its log_prob
equals the standard-normal density.
"""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from .nn import spline
from .nn.autodiff import Tensor, where
from .nn.layers import MadeConditioner, ParamStore

LOG_SCALE_CLAMP = 4.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _soft_clamp(raw: Tensor, limit: float = LOG_SCALE_CLAMP) -> Tensor:
    return (raw * (1.0 / limit)).tanh() * limit


class MafTransform:
    """Affine autoregressive map z_i = (x_i - mu_i(x_<i, c)) * exp(-a_i(x_<i, c))."""

    params_per_dim = 2

    def __init__(self, store: ParamStore, name: str, n_dim: int,
                 context_dim: int, hidden: Tuple[int, ...]):
        self.n_dim = n_dim
        self.net = MadeConditioner(store, name, n_dim, hidden,
                                   params_per_dim=2, context_dim=context_dim,
                                   zero_init_output=True)

    def forward(self, x: Tensor, context: Optional[Tensor]):
        p = self.net(x, context)
        mu = p[:, :, 0]
        a = _soft_clamp(p[:, :, 1])
        z = (x - mu) * (-a).exp()
        return z, -a.sum(axis=1)

    def inverse(self, z: np.ndarray, context: Optional[np.ndarray]) -> np.ndarray:
        x = np.zeros_like(z)
        ctx = Tensor(context) if context is not None else None
        for _ in range(self.n_dim):
            p = self.net(Tensor(x), ctx).data
            mu = p[:, :, 0]
            a = np.tanh(p[:, :, 1] / LOG_SCALE_CLAMP) * LOG_SCALE_CLAMP
            x = z * np.exp(a) + mu
        return x


class NsfTransform:
    """Autoregressive rational-quadratic spline map."""

    def __init__(self, store: ParamStore, name: str, n_dim: int,
                 context_dim: int, hidden: Tuple[int, ...],
                 n_bins: int = spline.DEFAULT_BINS,
                 bound: float = spline.DEFAULT_BOUND):
        self.n_dim = n_dim
        self.n_bins = n_bins
        self.bound = bound
        self.net = MadeConditioner(store, name, n_dim, hidden,
                                   params_per_dim=spline.n_params(n_bins),
                                   context_dim=context_dim,
                                   zero_init_output=True)

    def forward(self, x: Tensor, context: Optional[Tensor]):
        raw = self.net(x, context)
        z, logdet = spline.forward(x, raw, self.n_bins, self.bound)
        return z, logdet.sum(axis=1)

    def inverse(self, z: np.ndarray, context: Optional[np.ndarray]) -> np.ndarray:
        x = np.zeros_like(z)
        ctx = Tensor(context) if context is not None else None
        for _ in range(self.n_dim):
            raw = self.net(Tensor(x), ctx).data
            x = spline.inverse(z, raw, self.n_bins, self.bound)
        return x


class ConditionalFlow:
    """Stack of autoregressive transforms with reversal permutations."""

    def __init__(self, store: ParamStore, name: str, n_dim: int,
                 context_dim: int = 0, flavor: str = "nsf",
                 n_transforms: int = 3, hidden: Tuple[int, ...] = (128, 128)):
        if flavor not in ("maf", "nsf"):
            raise ValueError(f"unknown flow flavor {flavor!r}")
        cls = MafTransform if flavor == "maf" else NsfTransform
        self.n_dim = n_dim
        self.flavor = flavor
        self.transforms: List = [
            cls(store, f"{name}.t{i}", n_dim, context_dim, hidden)
            for i in range(n_transforms)
        ]

    def _to_latent(self, x: Tensor, context: Optional[Tensor]):
        logdet_total = Tensor(np.zeros(x.shape[0]))
        for i, tr in enumerate(self.transforms):
            if i > 0:
                x = x[:, ::-1]
            x, logdet = tr.forward(x, context)
            logdet_total = logdet_total + logdet
        return x, logdet_total

    def log_prob(self, x: Tensor, context: Optional[Tensor] = None) -> Tensor:
        z, logdet = self._to_latent(x, context)
        base = (z * z).sum(axis=1) * (-0.5) - self.n_dim * _HALF_LOG_2PI
        return base + logdet

    def forward_array(self, x: np.ndarray,
                      context: Optional[np.ndarray] = None) -> np.ndarray:
        ctx = Tensor(context) if context is not None else None
        z, _ = self._to_latent(Tensor(x), ctx)
        return z.data

    def inverse_array(self, z: np.ndarray,
                      context: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.asarray(z, dtype=np.float64)
        for i in reversed(range(len(self.transforms))):
            x = self.transforms[i].inverse(x, context)
            if i > 0:
                x = x[:, ::-1]
        return x

    def sample(self, n: int, rng: np.random.Generator,
               context: Optional[np.ndarray] = None) -> np.ndarray:
        z = rng.standard_normal((n, self.n_dim))
        if context is not None:
            context = np.asarray(context, dtype=np.float64)
            if context.ndim == 1:
                context = np.broadcast_to(context, (n, context.size)).copy()
        return self.inverse_array(z, context)
