"""Log10-uniform prior boxes for the calibratable models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class PriorSpec:
    names: Tuple[str, ...]
    lo: Tuple[float, ...]  # log10 lower bounds
    hi: Tuple[float, ...]  # log10 upper bounds

    def __post_init__(self):
        if not (len(self.names) == len(self.lo) == len(self.hi)):
            raise ValueError("prior bounds and names must align")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("prior box must have positive widths")

    @property
    def n_dim(self) -> int:
        return len(self.names)

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo, dtype=np.float64)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi, dtype=np.float64)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Draws in log10 space, shape (n, d)."""
        return rng.uniform(self.lo_array, self.hi_array, size=(n, self.n_dim))

    def midpoint(self) -> np.ndarray:
        return (self.lo_array + self.hi_array) / 2.0

    def contains(self, theta_log10: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(theta_log10)
        return np.all((t >= self.lo_array) & (t <= self.hi_array), axis=1)

    def std(self) -> np.ndarray:
        """Per-dimension standard deviation of the uniform box."""
        return (self.hi_array - self.lo_array) / np.sqrt(12.0)


ZI_PRIOR = PriorSpec(
    names=("alpha", "mu", "delta", "lam"),
    lo=(2.0, 1.0, -4.0, -2.0),
    hi=(3.0, 2.0, -2.0, 0.0),
)

CHIARELLA_PRIOR = PriorSpec(
    names=("sigma_n", "beta", "gamma_m", "kappa", "beta_hf", "gamma_hf"),
    lo=(-2.0, -1.0, -1.0, -1.0, 4.0, -2.0),
    hi=(0.0, 1.0, 1.0, 0.0, 6.0, 0.0),
)

PRIORS = {"zi": ZI_PRIOR, "chiarella": CHIARELLA_PRIOR}
