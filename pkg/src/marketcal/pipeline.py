"""End-to-end calibration runs, historical ingestion and reports.

Every operation is a pure function of (config, seed); reports are
serialized with sorted keys and full float repr so identical runs are
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from . import facts, features
from .dataset import (CalibrationDataset, atomic_write_bytes, build_dataset,
                      extract_features, simulate_record)
from .features import FeatureStats
from .npe import (BoxStandardizer, NpeConfig, NpeModel, posterior_for,
                  rmse_eval, sbc_ranks, train_npe)
from .priors import PRIORS
from .records import IngestionError, SimRecord, read_csv


@dataclass(frozen=True)
class RunConfig:
    model_kind: str = "zi"
    feature_kind: str = "vwap"
    flavor: str = "nsf"
    budget: int = 2000
    T: int = 600
    seed: int = 0
    n_rmse_points: int = 100
    n_sbc_draws: int = 50
    npe_seed_offset: int = 1


def ingest_historical(path: str, feature_kind: str, T: int,
                      stats: FeatureStats) -> np.ndarray:
    """Extract and normalize features from a snapshot CSV.

    Shares the exact code path used for simulated records, so a
    simulator-exported CSV reproduces the simulator's own vector.
    """
    record = read_csv(path)
    series = extract_features(record, feature_kind, T)
    return features.normalize(series, stats)


def train_model_on(ds: CalibrationDataset, flavor: str, seed: int,
                   npe_config: Optional[NpeConfig] = None,
                   verbose: bool = False):
    cfg = npe_config or NpeConfig(flavor=flavor, seed=seed)
    std = BoxStandardizer(ds.prior.lo_array, ds.prior.hi_array)
    model = NpeModel(ds.x_raw.shape[1], std, cfg)
    train_x, train_t = ds.split_arrays("train")
    val_x, val_t = ds.split_arrays("val")
    history = train_npe(model, train_x, train_t, val_x, val_t, verbose=verbose)
    return model, history


def _facts_dict(record: SimRecord) -> Dict[str, float]:
    try:
        return {k: float(v) for k, v in facts.report(record).to_dict().items()}
    except facts.InputError as exc:
        return {"error": str(exc)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def report_bytes(report: dict) -> bytes:
    return json.dumps(_jsonable(report), sort_keys=True, indent=1).encode()


def end_to_end_recovery(config: RunConfig, verbose: bool = False,
                        npe_config: Optional[NpeConfig] = None) -> dict:
    """Draw a ground truth, train on an independent dataset, report recovery."""
    prior = PRIORS[config.model_kind]
    master = np.random.default_rng(config.seed)
    theta_star = prior.sample(master, 1)[0]
    obs_seed = int(master.integers(0, 2**63 - 1))
    record_star = simulate_record(config.model_kind, theta_star, config.T, obs_seed)

    ds = build_dataset(config.model_kind, config.feature_kind, config.budget,
                       config.T, seed=config.seed + 1, progress=verbose)
    model, history = train_model_on(ds, config.flavor,
                                    seed=config.seed + config.npe_seed_offset,
                                    npe_config=npe_config, verbose=verbose)

    x_star = features.normalize(
        extract_features(record_star, config.feature_kind, config.T), ds.stats)
    post = posterior_for(model, x_star)
    samples = post.sample(1000, np.random.default_rng(config.seed + 2))
    post_mean = samples.mean(axis=0)
    post_sd = samples.std(axis=0)

    test_x, test_t = ds.split_arrays("test")
    k = min(config.n_rmse_points, len(test_x))
    rmse = rmse_eval(model, test_x[:k], test_t[:k], seed=config.seed + 3)
    rmse.pop("posterior_means")

    def sample_prior(rng):
        return prior.sample(rng, 1)[0]

    def simulate_features(theta, rng):
        rec = simulate_record(config.model_kind, theta, config.T,
                              int(rng.integers(0, 2**63 - 1)))
        return features.normalize(
            extract_features(rec, config.feature_kind, config.T), ds.stats)

    ranks = sbc_ranks(model, sample_prior, simulate_features,
                      config.n_sbc_draws, L=100, seed=config.seed + 4)

    # stylised facts: simulation at the posterior mean vs. at theta*
    rec_hat = simulate_record(config.model_kind, post_mean, config.T, obs_seed + 1)
    report = {
        "config": asdict(config),
        "theta_star_log10": theta_star,
        "posterior_mean_log10": post_mean,
        "posterior_sd_log10": post_sd,
        "prior_sd_log10": prior.std(),
        "parameter_names": list(prior.names),
        "rmse": rmse,
        "sbc": {
            "n_draws": config.n_sbc_draws,
            "L": 100,
            "rank_mean": ranks.mean(axis=0),
            "rank_sd": ranks.std(axis=0),
            "ranks": ranks,
        },
        "dataset": {
            "content_hash": ds.content_hash(),
            "n_redrawn": ds.n_redrawn,
            "budget": config.budget,
        },
        "training": {
            "epochs": len(history),
            "best_val_loss": min(h["val_loss"] for h in history),
            "final_lr": history[-1]["lr"],
        },
        "facts_at_theta_star": _facts_dict(record_star),
        "facts_at_posterior_mean": _facts_dict(rec_hat),
    }
    return report


def write_report(path: str, report: dict) -> None:
    atomic_write_bytes(path, report_bytes(report))
