"""Command-line interface.

Verbs: simulate, features, facts, build-dataset, train, infer, evaluate,
sbc, recover. Exit codes: 0 ok, 1 usage error, 2 data error, 3
numeric/training error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import List, Optional

import numpy as np

from . import features as feats
from . import facts as facts_mod
from .chiarella import SimulationDivergedError
from .dataset import (DatasetError, build_dataset, extract_features,
                      load_dataset, save_dataset, simulate_record)
from .features import FeatureStats
from .npe import (NpeConfig, TrainingError, load_model, posterior_for,
                  rmse_eval, sbc_ranks, save_model)
from .pipeline import (RunConfig, end_to_end_recovery, ingest_historical,
                       report_bytes, train_model_on, write_report)
from .priors import PRIORS
from .records import IngestionError, read_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    p = _Parser(prog="marketcal",
                description="LOB market simulation and neural posterior calibration")
    p.add_argument("--config", help="JSON config file; flags override its entries")
    sub = p.add_subparsers(dest="verb", required=True)

    sim = sub.add_parser("simulate", help="run one simulation, export snapshot CSV")
    sim.add_argument("--model", choices=("zi", "chiarella"), required=True)
    sim.add_argument("--theta-log10", required=True,
                     help="comma-separated log10 parameters")
    sim.add_argument("--steps", type=int, default=600)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)

    fe = sub.add_parser("features", help="extract a feature vector from a record CSV")
    fe.add_argument("--kind", choices=("touch", "vwap"), required=True)
    fe.add_argument("--in", dest="infile", required=True)
    fe.add_argument("--length", type=int, default=600, help="samples T")
    fe.add_argument("--out", required=True)

    fa = sub.add_parser("facts", help="stylised-fact report for a record CSV")
    fa.add_argument("--in", dest="infile", required=True)
    fa.add_argument("--out", required=True)
    fa.add_argument("--curves-out", help="optional CSV of ACF and impact curves")

    bd = sub.add_parser("build-dataset", help="simulate a calibration dataset")
    bd.add_argument("--model", choices=("zi", "chiarella"), required=True)
    bd.add_argument("--features", choices=("touch", "vwap"), required=True)
    bd.add_argument("--budget", type=int, default=2000)
    bd.add_argument("--length", type=int, default=600)
    bd.add_argument("--seed", type=int, default=0)
    bd.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train an NPE model on a dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--flavor", choices=("maf", "nsf"), default="nsf")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config", default=argparse.SUPPRESS,
                    help="JSON file with training hyperparameter overrides")
    tr.add_argument("--verbose", action="store_true")

    inf = sub.add_parser("infer", help="sample the posterior for an observation")
    inf.add_argument("--model", required=True)
    inf.add_argument("--obs", required=True, help="snapshot CSV record")
    inf.add_argument("--samples", type=int, default=1000)
    inf.add_argument("--seed", type=int, default=0)
    inf.add_argument("--out", required=True)

    ev = sub.add_parser("evaluate", help="posterior-mean RMSE on the test split")
    ev.add_argument("--model", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--points", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out")

    sb = sub.add_parser("sbc", help="simulation-based calibration ranks")
    sb.add_argument("--model", required=True)
    sb.add_argument("--dataset", required=True, help="dataset (defines prior/config)")
    sb.add_argument("--draws", type=int, default=50)
    sb.add_argument("--seed", type=int, default=0)
    sb.add_argument("--out", required=True)

    rec = sub.add_parser("recover", help="end-to-end synthetic recovery run")
    rec.add_argument("--model", choices=("zi", "chiarella"), default="zi")
    rec.add_argument("--features", choices=("touch", "vwap"), default="vwap")
    rec.add_argument("--flavor", choices=("maf", "nsf"), default="nsf")
    rec.add_argument("--budget", type=int, default=2000)
    rec.add_argument("--length", type=int, default=600)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--out", required=True)
    rec.add_argument("--config", default=argparse.SUPPRESS,
                    help="JSON file with training/run hyperparameter overrides")
    rec.add_argument("--verbose", action="store_true")
    return p


def _config_defaults(argv: List[str]) -> dict:
    """Read --config JSON; its entries become defaults that flags override."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return {}
    with open(path) as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise IngestionError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in overrides.items()}


def _npe_config_overrides(args) -> Optional[NpeConfig]:
    """NpeConfig built from config-file keys that name its fields."""
    if not getattr(args, "config", None):
        return None
    overrides = _config_defaults(["--config", args.config])
    fields = NpeConfig.__dataclass_fields__
    picked = {}
    for key, value in overrides.items():
        if key in fields and key not in ("flavor", "seed"):
            picked[key] = tuple(value) if isinstance(value, list) else value
    if not picked:
        return None
    return NpeConfig(flavor=args.flavor, seed=getattr(args, "seed", 0), **picked)


def _write_row_csv(path: str, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow([repr(float(v)) for v in values])


def _cmd_simulate(args) -> int:
    theta = np.array([float(t) for t in args.theta_log10.split(",")])
    record = simulate_record(args.model, theta, args.steps, args.seed)
    record.to_csv(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_features(args) -> int:
    record = read_csv(args.infile)
    series = extract_features(record, args.kind, args.length)
    _write_row_csv(args.out, series.values)
    print(f"wrote {args.out} ({len(series.values)} values)")
    return EXIT_OK


def _cmd_facts(args) -> int:
    record = read_csv(args.infile)
    rep = facts_mod.report(record)
    with open(args.out, "w") as fh:
        json.dump(rep.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    if args.curves_out:
        with open(args.curves_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "acf_returns", "acf_abs_returns"])
            for lag in range(len(rep.acf_returns)):
                w.writerow([lag, repr(float(rep.acf_returns[lag])),
                            repr(float(rep.acf_abs_returns[lag]))])
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_build_dataset(args) -> int:
    ds = build_dataset(args.model, args.features, args.budget, args.length,
                       args.seed, progress=True)
    digest = save_dataset(args.out, ds)
    print(f"wrote {args.out} (hash {digest[:16]}, {ds.n_redrawn} redraws)")
    return EXIT_OK


def _cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    model, history = train_model_on(ds, args.flavor, args.seed,
                                    npe_config=_npe_config_overrides(args),
                                    verbose=args.verbose)
    save_model(args.out, model, header_extra={
        "feature_kind": ds.feature_kind,
        "T": ds.T,
        "stats": ds.stats.to_dict(),
        "dataset_hash": ds.content_hash(),
        "parameter_names": list(ds.prior.names),
    })
    best = min(h["val_loss"] for h in history)
    print(f"wrote {args.out} ({len(history)} epochs, best val loss {best:.4f})")
    return EXIT_OK


def _cmd_infer(args) -> int:
    model, header = load_model(args.model)
    extra = header.get("extra", {})
    stats = FeatureStats.from_dict(extra["stats"])
    x = ingest_historical(args.obs, extra["feature_kind"], extra["T"], stats)
    post = posterior_for(model, x)
    samples = post.sample(args.samples, np.random.default_rng(args.seed))
    names = extra.get("parameter_names")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names or [f"log10_theta_{i}" for i in range(samples.shape[1])])
        for row in samples:
            w.writerow([repr(float(v)) for v in row])
    print(f"wrote {args.out} ({args.samples} samples)")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    model, _ = load_model(args.model)
    ds = load_dataset(args.dataset)
    test_x, test_t = ds.split_arrays("test")
    k = min(args.points, len(test_x))
    res = rmse_eval(model, test_x[:k], test_t[:k], seed=args.seed)
    res.pop("posterior_means")
    payload = report_bytes(res)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    sys.stdout.write(payload.decode())
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_sbc(args) -> int:
    model, _ = load_model(args.model)
    ds = load_dataset(args.dataset)
    prior = ds.prior
    from . import features as f

    def sample_prior(rng):
        return prior.sample(rng, 1)[0]

    def simulate_features(theta, rng):
        rec = simulate_record(ds.model_kind, theta, ds.T,
                              int(rng.integers(0, 2**63 - 1)))
        return f.normalize(extract_features(rec, ds.feature_kind, ds.T), ds.stats)

    ranks = sbc_ranks(model, sample_prior, simulate_features, args.draws,
                      L=100, seed=args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(prior.names))
        for row in ranks:
            w.writerow(list(map(int, row)))
    print(f"wrote {args.out} ({args.draws} draws)")
    return EXIT_OK


def _cmd_recover(args) -> int:
    run_kw = {}
    if getattr(args, "config", None):
        overrides = _config_defaults(["--config", args.config])
        run_kw = {k: v for k, v in overrides.items()
                  if k in ("n_rmse_points", "n_sbc_draws", "npe_seed_offset")}
    config = RunConfig(model_kind=args.model, feature_kind=args.features,
                       flavor=args.flavor, budget=args.budget, T=args.length,
                       seed=args.seed, **run_kw)
    report = end_to_end_recovery(config, verbose=args.verbose,
                                 npe_config=_npe_config_overrides(args))
    write_report(args.out, report)
    print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "features": _cmd_features,
    "facts": _cmd_facts,
    "build-dataset": _cmd_build_dataset,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "evaluate": _cmd_evaluate,
    "sbc": _cmd_sbc,
    "recover": _cmd_recover,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        if argv is None:
            argv = sys.argv[1:]
        defaults = _config_defaults(list(argv))
        if defaults:
            for sub_action in parser._subparsers._group_actions:
                for sub in sub_action.choices.values():
                    sub.set_defaults(**{k: v for k, v in defaults.items()
                                        if any(a.dest == k for a in sub._actions)})
        args = parser.parse_args(argv)
        return _COMMANDS[args.verb](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (IngestionError, DatasetError, FileNotFoundError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, SimulationDivergedError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
