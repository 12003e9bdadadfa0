"""Command-line entry point: ``dtmp {synth,train,eval,profiles}``.

Training configuration is a JSON file::

    {
      "model": {"hidden": 32, "n_modules": 6, "dilations": [1, 2, 4, 1, 2, 4], ...},
      "learning_rate": 0.003, "batch_size": 64, "max_epochs": 100,
      "patience": 15, "clip_norm": 5.0,
      "ratios": [0.6, 0.2, 0.2]
    }

Every omitted field takes its default; ``model.n_nodes`` is read from the
dataset metadata. The fully resolved configuration is written to the run
manifest before training starts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    SyntheticSpec,
    load_dataset,
    normalize,
    read_metadata,
    split_and_window,
    synth_generate,
    write_dataset,
    write_ground_truth,
)
from .network import VARIANTS, ModelConfig
from .training import (
    TrainConfig,
    TrainingAborted,
    evaluate,
    evaluate_ha,
    export_profiles,
    train,
    write_history,
    write_metrics,
)

DATA_FILE = "data.csv"
META_FILE = "meta.json"
TRUTH_FILE = "ground_truth.csv"
DEFAULT_RATIOS = (0.6, 0.2, 0.2)

log = logging.getLogger("dtmp")


class CLIError(Exception):
    pass


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fresh_dir(path: Path, overwrite: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not overwrite:
        raise CLIError(f"{path} is not empty; pick a fresh directory or pass --overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_windows(data_dir: Path, input_len: int, horizon: int, ratios):
    series = load_dataset(data_dir / DATA_FILE, data_dir / META_FILE)
    return series, split_and_window(series, input_len, horizon, ratios)


def resolve_config(raw: dict, n_nodes: int, seed: Optional[int], variant: Optional[str]):
    """Fill defaults and the dataset's node count; returns (TrainConfig, ratios)."""
    raw = dict(raw)
    ratios = tuple(raw.pop("ratios", DEFAULT_RATIOS))
    model = dict(raw.pop("model", {}))
    model.setdefault("n_nodes", n_nodes)
    if model["n_nodes"] != n_nodes:
        raise CLIError(f"config n_nodes={model['n_nodes']} but the dataset has {n_nodes} nodes")
    if variant is not None:
        model["variant"] = variant
    unknown = set(raw) - set(TrainConfig.__dataclass_fields__) - {"model"}
    unknown |= set(model) - set(ModelConfig.__dataclass_fields__)
    if unknown:
        raise CLIError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = TrainConfig(model=ModelConfig(**model), **raw)
    except (TypeError, ValueError) as exc:
        raise CLIError(str(exc)) from None
    return cfg, ratios


# -- commands ------------------------------------------------------------------------
def cmd_synth(args) -> int:
    spec = SyntheticSpec()
    if args.spec:
        with open(args.spec) as fh:
            try:
                spec = SyntheticSpec.from_dict(json.load(fh))
            except (TypeError, ValueError) as exc:
                raise CLIError(f"invalid synthetic spec: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series, edges = synth_generate(spec, seed=args.seed)
    write_dataset(series, out / DATA_FILE, out / META_FILE)
    write_ground_truth(edges, out / TRUTH_FILE)
    print(f"wrote {series.n_steps} steps x {series.n_nodes} nodes to {out}")
    return 0


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    meta = read_metadata(data_dir / META_FILE)
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    cfg, ratios = resolve_config(raw, int(meta["num_nodes"]), args.seed, args.variant)
    out = _fresh_dir(Path(args.out), args.overwrite)
    manifest = {
        "tool": "dtmp",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "ratios": list(ratios),
        "inputs": {name: _digest(data_dir / name) for name in (DATA_FILE, META_FILE)},
        "data_dir": str(data_dir),
        "layout": {
            "checkpoint": "checkpoint/",
            "history": "history.csv",
            "metrics": ["metrics_validation.json", "metrics_test.json"],
        },
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    _, windows = _load_windows(data_dir, cfg.model.input_len, cfg.model.horizon, ratios)
    dataset = normalize(windows)
    result = train(cfg, dataset, log_every=1 if args.verbose else 0)
    result.checkpoint.extra["ratios"] = list(ratios)
    save_checkpoint(result.checkpoint, out / "checkpoint")
    write_history(result.history, out / "history.csv")
    for split in ("validation", "test"):
        report = evaluate(result.checkpoint, dataset, split)
        write_metrics(report, out / f"metrics_{split}.json", out / f"metrics_{split}.csv")
        print(f"{split}: {report.summary()}")
    print(f"best epoch {result.best_epoch} of {len(result.history)}; run written to {out}")
    return 0


def cmd_eval(args) -> int:
    data_dir = Path(args.data)
    ckpt: Optional[Checkpoint] = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if ckpt is None and args.baseline is None:
        raise CLIError("eval needs --checkpoint unless --baseline is given")
    if ckpt is not None:
        input_len, horizon = ckpt.config.input_len, ckpt.config.horizon
        ratios = tuple(ckpt.extra.get("ratios", DEFAULT_RATIOS))
    else:
        input_len, horizon, ratios = args.input_len, args.horizon, DEFAULT_RATIOS
    series, windows = _load_windows(data_dir, input_len, horizon, ratios)
    if ckpt is not None and series.n_nodes != ckpt.config.n_nodes:
        raise CLIError(f"checkpoint expects {ckpt.config.n_nodes} nodes, data has {series.n_nodes}")
    dataset = normalize(windows, ckpt.stats if ckpt is not None else None)
    if args.baseline == "ha":
        report = evaluate_ha(dataset, args.split)
        tag = f"ha_{args.split}"
    else:
        report = evaluate(ckpt, dataset, args.split)
        tag = args.split
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(report, out / f"metrics_{tag}.json", out / f"metrics_{tag}.csv")
    print(report.summary())
    return 0


def cmd_profiles(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    try:
        export = export_profiles(ckpt, args.node, args.top_k, out_dir=args.out)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    print(f"node {args.node}: {len(export.graphs)} graphs written to {args.out}")
    for rank, r in enumerate(export.relations, 1):
        print(f"  {rank}. node {r.node}  module {r.module}  shift {r.shift}  weight {r.weight:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtmp", description="Alignment-aware spatio-temporal graph forecasting")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None if sp.prog.endswith("train") else 0)
        sp.add_argument("--out", required=out_required)

    s = sub.add_parser("synth", help="generate a synthetic dataset with planted lags")
    s.add_argument("--spec", help="JSON synthetic spec (defaults: 12 nodes, 2 sources, lags 1/2/4)")
    common(s)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model on a data directory")
    t.add_argument("--config", help="JSON training config")
    t.add_argument("--data", required=True)
    t.add_argument("--variant", choices=VARIANTS, default=None)
    t.add_argument("--overwrite", action="store_true")
    t.add_argument("--verbose", action="store_true")
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or the HA baseline")
    e.add_argument("--checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "validation", "test"), default="test")
    e.add_argument("--baseline", choices=("ha",), default=None)
    e.add_argument("--input-len", type=int, default=12)
    e.add_argument("--horizon", type=int, default=12)
    common(e)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("profiles", help="export learned node profiles and graphs")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--node", type=int, required=True)
    r.add_argument("--top-k", type=int, default=2)
    common(r)
    r.set_defaults(func=cmd_profiles)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (CLIError, TrainingAborted, FileNotFoundError, ValueError) as exc:
        print(f"dtmp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
