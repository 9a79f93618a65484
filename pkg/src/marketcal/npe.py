"""Neural posterior estimation: q(theta | embed(x)) trained on simulator pairs.

Parameters are handled in log10 space and affinely standardized to
[-1, 1] from the prior box before entering the flow; the Jacobian of
that map is constant, so posterior densities are exact in log10 space.
The embedding network and flow train jointly by maximum likelihood.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .flows import ConditionalFlow
from .nn.autodiff import Tensor
from .nn.layers import Mlp, ParamStore
from .nn.optim import Adam, EarlyStopping, ReduceOnPlateau
from .nn import serialize


class TrainingError(RuntimeError):
    def __init__(self, message: str, history: Optional[List[dict]] = None):
        super().__init__(message)
        self.history = history or []


class BoxStandardizer:
    """Affine map from a log10 prior box onto [-1, 1]^d."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("invalid prior box")
        self.scale = 2.0 / (self.hi - self.lo)
        # d std / d log10-theta, constant everywhere
        self.log_det = float(np.sum(np.log(self.scale)))

    @property
    def n_dim(self) -> int:
        return len(self.lo)

    def to_std(self, theta_log10: np.ndarray) -> np.ndarray:
        return (np.asarray(theta_log10, dtype=np.float64) - self.lo) * self.scale - 1.0

    def from_std(self, std: np.ndarray) -> np.ndarray:
        return (np.asarray(std, dtype=np.float64) + 1.0) / self.scale + self.lo


@dataclass(frozen=True)
class NpeConfig:
    flavor: str = "nsf"
    embed_hidden: Tuple[int, ...] = (64, 64, 64, 64)
    embed_dim: int = 256
    conditioner_hidden: Tuple[int, ...] = (128, 128)
    n_transforms: int = 3
    lr: float = 1e-3
    batch_size: int = 128
    dropout: float = 0.1
    max_epochs: int = 200
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    early_stop_patience: int = 15
    seed: int = 0


class NpeModel:
    def __init__(self, feature_dim: int, standardizer: BoxStandardizer,
                 config: NpeConfig):
        self.feature_dim = feature_dim
        self.standardizer = standardizer
        self.config = config
        self.store = ParamStore(np.random.default_rng(config.seed))
        self.embed = Mlp(self.store, "embed", feature_dim,
                         list(config.embed_hidden), config.embed_dim,
                         dropout=config.dropout)
        self.flow = ConditionalFlow(self.store, "flow", standardizer.n_dim,
                                    context_dim=config.embed_dim,
                                    flavor=config.flavor,
                                    n_transforms=config.n_transforms,
                                    hidden=config.conditioner_hidden)

    # -- likelihood -----------------------------------------------------
    def _neg_log_prob(self, x: np.ndarray, theta_std: np.ndarray,
                      rng: Optional[np.random.Generator],
                      training: bool) -> Tensor:
        ctx = self.embed(Tensor(x), rng=rng, training=training)
        lp = self.flow.log_prob(Tensor(theta_std), ctx)
        return -lp.mean()

    def log_prob_log10(self, theta_log10: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Posterior log-density in natural log10 parameter space."""
        theta_log10 = np.atleast_2d(theta_log10)
        x = np.atleast_2d(x)
        if x.shape[0] == 1 and theta_log10.shape[0] > 1:
            x = np.broadcast_to(x, (theta_log10.shape[0], x.shape[1]))
        ctx = self.embed(Tensor(x))
        std = self.standardizer.to_std(theta_log10)
        lp = self.flow.log_prob(Tensor(std), ctx)
        return lp.data + self.standardizer.log_det

    def sample_log10(self, x: np.ndarray, n: int,
                     rng: np.random.Generator) -> np.ndarray:
        ctx = self.embed(Tensor(np.atleast_2d(x))).data[0]
        std = self.flow.sample(n, rng, ctx)
        return self.standardizer.from_std(std)


@dataclass
class Posterior:
    """Amortized posterior for one observation, in log10 parameter space."""

    model: NpeModel
    observation: np.ndarray
    _context: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        obs = np.asarray(self.observation, dtype=np.float64).reshape(1, -1)
        if obs.shape[1] != self.model.feature_dim:
            raise ValueError(
                f"observation has {obs.shape[1]} features, model expects "
                f"{self.model.feature_dim}")
        self.observation = obs[0]
        self._context = self.model.embed(Tensor(obs)).data[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        std = self.model.flow.sample(n, rng, self._context)
        return self.model.standardizer.from_std(std)

    def log_prob(self, theta_log10: np.ndarray) -> np.ndarray:
        theta_log10 = np.atleast_2d(theta_log10)
        ctx = np.broadcast_to(self._context,
                              (theta_log10.shape[0], len(self._context)))
        std = self.model.standardizer.to_std(theta_log10)
        lp = self.model.flow.log_prob(Tensor(std), Tensor(ctx))
        return lp.data + self.model.standardizer.log_det


def posterior_for(model: NpeModel, observation: np.ndarray) -> Posterior:
    return Posterior(model, observation)


def train_npe(model: NpeModel, train_x: np.ndarray, train_theta_log10: np.ndarray,
              val_x: np.ndarray, val_theta_log10: np.ndarray,
              verbose: bool = False) -> List[dict]:
    """Joint maximum-likelihood training; returns the epoch history."""
    cfg = model.config
    rng = np.random.default_rng(cfg.seed + 1)
    tr_std = model.standardizer.to_std(train_theta_log10)
    va_std = model.standardizer.to_std(val_theta_log10)
    opt = Adam(model.store, lr=cfg.lr)
    plateau = ReduceOnPlateau(opt, cfg.plateau_factor, cfg.plateau_patience)
    stopper = EarlyStopping(model.store, cfg.early_stop_patience)
    n = len(train_x)
    history: List[dict] = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            model.store.zero_grad()
            loss = model._neg_log_prob(train_x[idx], tr_std[idx], rng, training=True)
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}", history)
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
        val_loss = float(model._neg_log_prob(val_x, va_std, None, training=False).data)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}", history)
        history.append({"epoch": epoch, "train_loss": total / n,
                        "val_loss": val_loss, "lr": opt.lr})
        if verbose:
            print(f"epoch {epoch:3d} train {total / n:.4f} val {val_loss:.4f} "
                  f"lr {opt.lr:.2e}")
        plateau.step(val_loss)
        if stopper.step(val_loss, epoch):
            break
    stopper.restore_best()
    return history


def rmse_eval(model: NpeModel, test_x: np.ndarray, test_theta_log10: np.ndarray,
              n_samples: int = 1000, seed: int = 0) -> Dict[str, float]:
    """Posterior-mean RMSE in log10 space, mean +/- sd across test points.

    A prior-midpoint predictor is evaluated alongside as the baseline.
    """
    rng = np.random.default_rng(seed)
    mid = (model.standardizer.lo + model.standardizer.hi) / 2.0
    rmses, base_rmses, post_means = [], [], []
    for x, theta in zip(test_x, test_theta_log10):
        samples = model.sample_log10(x, n_samples, rng)
        pm = samples.mean(axis=0)
        post_means.append(pm)
        rmses.append(float(np.sqrt(np.mean((pm - theta) ** 2))))
        base_rmses.append(float(np.sqrt(np.mean((mid - theta) ** 2))))
    rmses = np.array(rmses)
    base_rmses = np.array(base_rmses)
    return {
        "rmse_mean": float(rmses.mean()),
        "rmse_sd": float(rmses.std()),
        "baseline_rmse_mean": float(base_rmses.mean()),
        "baseline_rmse_sd": float(base_rmses.std()),
        "ratio": float(base_rmses.mean() / rmses.mean()),
        "posterior_means": np.array(post_means),
    }


def sbc_ranks(model: NpeModel,
              sample_prior: Callable[[np.random.Generator], np.ndarray],
              simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray],
              n_draws: int, L: int = 100, seed: int = 0) -> np.ndarray:
    """Simulation-based calibration ranks, one row per draw, one column per dim.

    For a calibrated posterior each rank is uniform on {0, ..., L}.
    """
    rng = np.random.default_rng(seed)
    d = model.standardizer.n_dim
    ranks = np.zeros((n_draws, d), dtype=np.int64)
    for i in range(n_draws):
        theta = sample_prior(rng)
        x = simulate(theta, rng)
        samples = model.sample_log10(x, L, rng)
        ranks[i] = (samples < theta[None, :]).sum(axis=0)
    return ranks


# -- model persistence ----------------------------------------------------

def save_model(path: str, model: NpeModel, header_extra: Optional[dict] = None) -> None:
    header = {
        "feature_dim": model.feature_dim,
        "prior_lo": model.standardizer.lo.tolist(),
        "prior_hi": model.standardizer.hi.tolist(),
        "config": {
            "flavor": model.config.flavor,
            "embed_hidden": list(model.config.embed_hidden),
            "embed_dim": model.config.embed_dim,
            "conditioner_hidden": list(model.config.conditioner_hidden),
            "n_transforms": model.config.n_transforms,
            "lr": model.config.lr,
            "batch_size": model.config.batch_size,
            "dropout": model.config.dropout,
            "max_epochs": model.config.max_epochs,
            "plateau_factor": model.config.plateau_factor,
            "plateau_patience": model.config.plateau_patience,
            "early_stop_patience": model.config.early_stop_patience,
            "seed": model.config.seed,
        },
    }
    if header_extra:
        header["extra"] = header_extra
    blob = serialize.dumps(model.store.state())
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(len(encoded).to_bytes(8, "little"))
        fh.write(encoded)
        fh.write(blob)


def load_model(path: str) -> Tuple[NpeModel, dict]:
    with open(path, "rb") as fh:
        hlen = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        blob = fh.read()
    cfg_d = dict(header["config"])
    cfg = NpeConfig(
        flavor=cfg_d["flavor"],
        embed_hidden=tuple(cfg_d["embed_hidden"]),
        embed_dim=cfg_d["embed_dim"],
        conditioner_hidden=tuple(cfg_d["conditioner_hidden"]),
        n_transforms=cfg_d["n_transforms"],
        lr=cfg_d["lr"],
        batch_size=cfg_d["batch_size"],
        dropout=cfg_d["dropout"],
        max_epochs=cfg_d["max_epochs"],
        plateau_factor=cfg_d["plateau_factor"],
        plateau_patience=cfg_d["plateau_patience"],
        early_stop_patience=cfg_d["early_stop_patience"],
        seed=cfg_d["seed"],
    )
    std = BoxStandardizer(np.array(header["prior_lo"]), np.array(header["prior_hi"]))
    model = NpeModel(header["feature_dim"], std, cfg)
    model.store.load_state(serialize.loads(blob))
    return model, header
