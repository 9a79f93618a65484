"""Simulation dataset construction and persistence.

A `CalibrationDataset` holds (theta, x) pairs with an 8:1:1
train/validation/test split, the train-only normalization statistics,
and a sha256 content hash over the canonical array bytes so identical
configurations are verifiably identical on disk. Writes are atomic
(temp file + rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import features
from .chiarella import ChiarellaConfig, SimulationDivergedError, ThetaChiarella, run_chiarella
from .features import FeatureStats, SummarySeries
from .priors import PRIORS, PriorSpec
from .records import SimRecord
from .zi import ThetaZI, ZIConfig, run_zi


class DatasetError(RuntimeError):
    pass


def simulate_record(model_kind: str, theta_log10: np.ndarray, T: int,
                    seed: int) -> SimRecord:
    """Run one simulation of length T seconds for log10 parameters."""
    if model_kind == "zi":
        theta = ThetaZI.from_log10(theta_log10)
        return run_zi(theta, ZIConfig(n_steps=T, seed=seed))
    if model_kind == "chiarella":
        theta = ThetaChiarella.from_log10(theta_log10)
        return run_chiarella(theta, ChiarellaConfig(n_steps=T, seed=seed))
    raise ValueError(f"unknown model kind {model_kind!r}")


def extract_features(record: SimRecord, feature_kind: str, T: int) -> SummarySeries:
    """Snapshot-only feature extraction (identical for simulated and CSV data).

    The intra-step quote stream is deliberately ignored so that a record
    exported to CSV and re-ingested produces bit-identical features.
    """
    snap = SimRecord(
        timestep=record.timestep, best_bid=record.best_bid,
        best_bid_vol=record.best_bid_vol, best_ask=record.best_ask,
        best_ask_vol=record.best_ask_vol, mid=record.mid,
        last_trade=record.last_trade, traded_volume=record.traded_volume,
    )
    if feature_kind == "touch":
        return features.extract_touch(snap, T)
    if feature_kind == "vwap":
        return features.extract_vwap(snap, T)
    raise ValueError(f"unknown feature kind {feature_kind!r}")


@dataclass
class CalibrationDataset:
    model_kind: str
    feature_kind: str
    T: int
    seed: int
    theta_log10: np.ndarray       # (N, d)
    x_raw: np.ndarray             # (N, C*T), pre-normalization
    splits: Dict[str, np.ndarray]  # name -> index array
    stats: FeatureStats
    prior: PriorSpec
    n_redrawn: int = 0

    @property
    def n(self) -> int:
        return len(self.theta_log10)

    def x_normalized(self) -> np.ndarray:
        return features.normalize_matrix(self.x_raw, self.feature_kind,
                                         self.T, self.stats)

    def split_arrays(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        idx = self.splits[name]
        return self.x_normalized()[idx], self.theta_log10[idx]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.model_kind.encode())
        h.update(self.feature_kind.encode())
        h.update(np.int64([self.T, self.seed]).tobytes())
        h.update(np.ascontiguousarray(self.theta_log10, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.x_raw, dtype="<f8").tobytes())
        for name in sorted(self.splits):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.splits[name], dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.stats.mean, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.stats.std, dtype="<f8").tobytes())
        return h.hexdigest()


def make_splits(n: int, seed: int) -> Dict[str, np.ndarray]:
    """Deterministic 8:1:1 split."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = (n * 8) // 10
    n_val = n // 10
    return {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train:n_train + n_val]),
        "test": np.sort(order[n_train + n_val:]),
    }


def build_dataset(model_kind: str, feature_kind: str, budget: int, T: int,
                  seed: int, max_redraw_frac: float = 0.05,
                  progress: bool = False) -> CalibrationDataset:
    prior = PRIORS[model_kind]
    rng = np.random.default_rng(seed)
    thetas = []
    xs = []
    n_redrawn = 0
    max_redraws = int(np.ceil(budget * max_redraw_frac))
    i = 0
    while len(xs) < budget:
        theta = prior.sample(rng, 1)[0]
        sim_seed = int(rng.integers(0, 2**63 - 1))
        try:
            record = simulate_record(model_kind, theta, T, sim_seed)
        except SimulationDivergedError:
            n_redrawn += 1
            if n_redrawn > max_redraws:
                raise DatasetError(
                    f"more than {max_redraw_frac:.0%} of simulations diverged "
                    f"({n_redrawn} redraws for budget {budget}); "
                    f"the parameter box looks unstable")
            continue
        thetas.append(theta)
        xs.append(extract_features(record, feature_kind, T).values)
        i += 1
        if progress and i % 200 == 0:
            print(f"  simulated {i}/{budget}")
    theta_log10 = np.array(thetas)
    x_raw = np.array(xs)
    splits = make_splits(budget, seed)
    stats = features.fit_stats_matrix(x_raw[splits["train"]], feature_kind, T)
    return CalibrationDataset(
        model_kind=model_kind, feature_kind=feature_kind, T=T, seed=seed,
        theta_log10=theta_log10, x_raw=x_raw, splits=splits, stats=stats,
        prior=prior, n_redrawn=n_redrawn)


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(path: str, ds: CalibrationDataset) -> str:
    """Persists to an .npz; returns the content hash."""
    meta = {
        "model_kind": ds.model_kind,
        "feature_kind": ds.feature_kind,
        "T": ds.T,
        "seed": ds.seed,
        "n_redrawn": ds.n_redrawn,
        "stats": ds.stats.to_dict(),
        "prior_names": list(ds.prior.names),
        "prior_lo": list(ds.prior.lo),
        "prior_hi": list(ds.prior.hi),
        "content_hash": ds.content_hash(),
    }
    import io
    buf = io.BytesIO()
    np.savez(buf,
             theta_log10=ds.theta_log10,
             x_raw=ds.x_raw,
             split_train=ds.splits["train"],
             split_val=ds.splits["val"],
             split_test=ds.splits["test"],
             meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))
    atomic_write_bytes(path, buf.getvalue())
    return meta["content_hash"]


def load_dataset(path: str) -> CalibrationDataset:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        prior = PriorSpec(names=tuple(meta["prior_names"]),
                          lo=tuple(meta["prior_lo"]), hi=tuple(meta["prior_hi"]))
        ds = CalibrationDataset(
            model_kind=meta["model_kind"], feature_kind=meta["feature_kind"],
            T=meta["T"], seed=meta["seed"],
            theta_log10=z["theta_log10"], x_raw=z["x_raw"],
            splits={"train": z["split_train"], "val": z["split_val"],
                    "test": z["split_test"]},
            stats=FeatureStats.from_dict(meta["stats"]),
            prior=prior, n_redrawn=meta["n_redrawn"])
    if ds.content_hash() != meta["content_hash"]:
        raise DatasetError(f"content hash mismatch loading {path!r}")
    return ds
