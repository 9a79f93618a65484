"""Network building blocks on the autodiff engine.

Everything is double precision. Parameters live in a flat `ParamStore`
so optimizers and serialization can treat a whole model uniformly.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, concat


class ParamStore:
    """Named parameter registry shared by a model's layers."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> List[str]:
        return sorted(self._params)

    def tensors(self) -> List[Tensor]:
        return [self._params[n] for n in self.names()]

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        return {n: self._params[n].data.copy() for n in self.names()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for n, v in state.items():
            tgt = self._params[n]
            if tgt.data.shape != v.shape:
                raise ValueError(f"shape mismatch for {n!r}: {tgt.data.shape} vs {v.shape}")
            tgt.data = np.asarray(v, dtype=np.float64).copy()


class Dense:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 zero_init: bool = False):
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            w = store.rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
        self.w = store.add(f"{name}.w", w)
        self.b = store.add(f"{name}.b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Dropout:
    """Inverted dropout; identity when `training` is False."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def __call__(self, x: Tensor, rng: np.random.Generator, training: bool) -> Tensor:
        if not training or self.rate == 0.0:
            return x
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask


class Mlp:
    """ReLU MLP with dropout after each hidden activation."""

    def __init__(self, store: ParamStore, name: str, n_in: int,
                 hidden: Sequence[int], n_out: int, dropout: float = 0.0):
        dims = [n_in, *hidden, n_out]
        self.layers = [Dense(store, f"{name}.{i}", dims[i], dims[i + 1])
                       for i in range(len(dims) - 1)]
        self.dropout = Dropout(dropout)

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None,
                 training: bool = False) -> Tensor:
        for layer in self.layers[:-1]:
            x = layer(x).relu()
            if training:
                x = self.dropout(x, rng, training)
        return self.layers[-1](x)


def made_degrees(n_dim: int, hidden: Sequence[int]) -> List[np.ndarray]:
    """Autoregressive degree assignment: inputs 1..d, hidden round-robin in [1, d-1]."""
    if n_dim < 2:
        raise ValueError("MADE needs at least 2 dimensions")
    degrees = [np.arange(1, n_dim + 1)]
    for h in hidden:
        degrees.append(1 + np.arange(h) % (n_dim - 1))
    return degrees


class MaskedDense:
    def __init__(self, store: ParamStore, name: str, in_degrees: np.ndarray,
                 out_degrees: np.ndarray, is_output: bool,
                 zero_init: bool = False):
        n_in, n_out = len(in_degrees), len(out_degrees)
        if is_output:
            # output unit for dim i may only see inputs with degree < i
            mask = (in_degrees[:, None] < out_degrees[None, :]).astype(float)
        else:
            mask = (in_degrees[:, None] <= out_degrees[None, :]).astype(float)
        self.mask = mask
        if zero_init:
            w = np.zeros((n_in, n_out))
        else:
            w = store.rng.normal(0.0, np.sqrt(2.0 / max(1, n_in)), size=(n_in, n_out))
        self.w = store.add(f"{name}.w", w * mask)
        self.b = store.add(f"{name}.b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ (self.w * self.mask) + self.b


class MadeConditioner:
    """Masked autoregressive network producing `params_per_dim` outputs per dim.

    The context vector (embedding of the observation) enters through an
    unmasked dense layer added into the first hidden activation, so every
    output may depend on all of it.
    """

    def __init__(self, store: ParamStore, name: str, n_dim: int,
                 hidden: Sequence[int], params_per_dim: int,
                 context_dim: int = 0, zero_init_output: bool = True):
        self.n_dim = n_dim
        self.params_per_dim = params_per_dim
        degs = made_degrees(n_dim, hidden)
        self.hidden_layers: List[MaskedDense] = []
        for i in range(len(hidden)):
            self.hidden_layers.append(
                MaskedDense(store, f"{name}.h{i}", degs[i], degs[i + 1], is_output=False))
        out_degs = np.repeat(np.arange(1, n_dim + 1), params_per_dim)
        self.out_layer = MaskedDense(store, f"{name}.out", degs[-1], out_degs,
                                     is_output=True, zero_init=zero_init_output)
        self.context_layer = (Dense(store, f"{name}.ctx", context_dim, hidden[0])
                              if context_dim > 0 else None)

    def __call__(self, x: Tensor, context: Optional[Tensor] = None) -> Tensor:
        """Returns (batch, n_dim, params_per_dim)."""
        h = self.hidden_layers[0](x)
        if self.context_layer is not None:
            if context is None:
                raise ValueError("conditioner built with context requires one")
            h = h + self.context_layer(context)
        h = h.relu()
        for layer in self.hidden_layers[1:]:
            h = layer(h).relu()
        out = self.out_layer(h)
        return out.reshape(-1, self.n_dim, self.params_per_dim)
