"""Adam, plateau learning-rate scheduling and early stopping."""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from .layers import ParamStore


class Adam:
    def __init__(self, store: ParamStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {n: np.zeros_like(store[n].data) for n in store.names()}
        self._v = {n: np.zeros_like(store[n].data) for n in store.names()}

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name in self.store.names():
            p = self.store[name]
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class ReduceOnPlateau:
    """Halving schedule on stalled validation loss."""

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 5,
                 min_lr: float = 1e-6):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = np.inf
        self.stale = 0

    def step(self, val_loss: float) -> bool:
        """Returns True when the learning rate was reduced."""
        if val_loss < self.best:
            self.best = val_loss
            self.stale = 0
            return False
        self.stale += 1
        if self.stale > self.patience:
            self.stale = 0
            new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
            reduced = new_lr < self.optimizer.lr
            self.optimizer.lr = new_lr
            return reduced
        return False


class EarlyStopping:
    """Stops after `patience` epochs without improvement; keeps the best state."""

    def __init__(self, store: ParamStore, patience: int = 15):
        self.store = store
        self.patience = patience
        self.best = np.inf
        self.stale = 0
        self.best_state: Optional[Dict[str, np.ndarray]] = None
        self.best_epoch = -1

    def step(self, val_loss: float, epoch: int) -> bool:
        """Returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.stale = 0
            self.best_state = self.store.state()
            self.best_epoch = epoch
            return False
        self.stale += 1
        return self.stale >= self.patience

    def restore_best(self) -> None:
        if self.best_state is not None:
            self.store.load_state(self.best_state)
