"""Training loop, metrics, the historical-average baseline, ablations and profile export."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import tensor as tn
from .checkpoint import Checkpoint
from .data import WindowedDataset, denormalize
from .network import DTMP, VARIANTS, ModelConfig, mae_loss, module_graphs
from .optim import AdamState, adam_step, clip_grad_norm

logger = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig
    learning_rate: float = 0.003
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 15
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        errors = []
        if self.learning_rate <= 0:
            errors.append("learning_rate must be > 0")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.max_epochs < 1:
            errors.append("max_epochs must be >= 1")
        if self.patience < 1:
            errors.append("patience must be >= 1")
        if errors:
            raise ValueError("invalid train config: " + "; ".join(errors))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = d.pop("model")
        model = model if isinstance(model, ModelConfig) else ModelConfig.from_dict(model)
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(model=model, **known)


# -- metrics ---------------------------------------------------------------------
@dataclass
class MetricsReport:
    mae: float
    rmse: float
    mape: Optional[float]  # percent; None when every target is masked
    horizon_mae: list[float]
    horizon_rmse: list[float]
    horizon_mape: list[Optional[float]]
    n_samples: int
    n_masked: int

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        mape = "undefined" if self.mape is None else f"{self.mape:.4f}%"
        return f"MAE {self.mae:.4f}  RMSE {self.rmse:.4f}  MAPE {mape}"


def _mape(err: np.ndarray, target: np.ndarray, eps: float) -> tuple[Optional[float], int]:
    keep = np.abs(target) > eps
    masked = int(keep.size - keep.sum())
    if not keep.any():
        return None, masked
    return float(np.mean(np.abs(err[keep]) / np.abs(target[keep])) * 100.0), masked


def _rmse(err: np.ndarray) -> float:
    # scale first so tiny errors do not underflow when squared
    scale = float(np.max(np.abs(err))) if err.size else 0.0
    if scale == 0.0 or not np.isfinite(scale):
        return float(np.sqrt(np.mean(err * err)))
    return scale * float(np.sqrt(np.mean(np.square(err / scale))))


def compute_metrics(pred, target, mask_epsilon: float = 1e-3) -> MetricsReport:
    """MAE, RMSE and MAPE (percent). Targets with ``|y| <= mask_epsilon`` are left out of MAPE only.

    Arrays shaped (samples, horizon, node, feature) also get per-horizon values.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    err = pred - target
    mape, masked = _mape(err, target, mask_epsilon)
    if pred.ndim == 4:
        slices = [(err[:, h], target[:, h]) for h in range(pred.shape[1])]
        n_samples = pred.shape[0]
    else:
        slices = [(err, target)]
        n_samples = pred.shape[0] if pred.ndim else 1
    return MetricsReport(
        mae=float(np.mean(np.abs(err))),
        rmse=_rmse(err),
        mape=mape,
        horizon_mae=[float(np.mean(np.abs(e))) for e, _ in slices],
        horizon_rmse=[_rmse(e) for e, _ in slices],
        horizon_mape=[_mape(e, t, mask_epsilon)[0] for e, t in slices],
        n_samples=int(n_samples),
        n_masked=masked,
    )


def write_metrics(report: MetricsReport, json_path, csv_path=None) -> None:
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["horizon", "mae", "rmse", "mape"])
            for h, (a, r, p) in enumerate(zip(report.horizon_mae, report.horizon_rmse, report.horizon_mape), 1):
                w.writerow([h, repr(a), repr(r), "" if p is None else repr(p)])


def ha_baseline(x_window: np.ndarray, horizon: int = 12) -> np.ndarray:
    """Predict every future step as the mean of the input window, per node and feature.

    Accepts (T, N, C) or batched (samples, T, N, C); the time axis is third from last.
    """
    x = np.asarray(x_window, dtype=np.float64)
    m = x.mean(axis=-3, keepdims=True)
    reps = [1] * x.ndim
    reps[-3] = horizon
    return np.tile(m, reps)


# -- training --------------------------------------------------------------------
@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mae: float
    val_rmse: float
    val_mape: Optional[float]
    wall_time: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochRecord]
    best_epoch: int

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.history]


def write_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_mae", "val_rmse", "val_mape", "wall_time"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_mae), repr(r.val_rmse),
                        "" if r.val_mape is None else repr(r.val_mape), f"{r.wall_time:.3f}"])


def _check_compatible(config: ModelConfig, dataset: WindowedDataset) -> None:
    x = dataset["train"].x
    if x.shape[1:] != (config.input_len, config.n_nodes, config.in_features):
        raise ValueError(
            f"dataset windows {x.shape[1:]} do not match the model "
            f"(input_len={config.input_len}, n_nodes={config.n_nodes}, in_features={config.in_features})"
        )
    if dataset["train"].y.shape[1] != config.horizon:
        raise ValueError(f"dataset horizon {dataset['train'].y.shape[1]} != model horizon {config.horizon}")


def _predict_denorm(model: DTMP, dataset: WindowedDataset, split: str) -> tuple[np.ndarray, np.ndarray]:
    s = dataset[split]
    if len(s) == 0:
        raise ValueError(f"the {split} split has no windows")
    pred = model.predict(s.x)
    target = s.y
    if dataset.normalized:
        pred = denormalize(pred, dataset.stats)
        target = denormalize(target, dataset.stats)
    return pred, target


def train(config: TrainConfig, dataset: WindowedDataset, log_every: int = 0) -> TrainResult:
    """Mini-batch Adam on the MAE loss with early stopping on validation MAE."""
    mc = config.model
    _check_compatible(mc, dataset)
    if len(dataset["validation"]) == 0:
        raise ValueError("training needs a non-empty validation split for model selection")
    model = DTMP(mc, seed=config.seed)
    shuffle_rng, dropout_rng = np.random.default_rng(config.seed).spawn(2)
    state = AdamState(learning_rate=config.learning_rate)
    xs, ys = dataset["train"].x, dataset["train"].y
    n = len(xs)
    best_mae, best_epoch, best_params = np.inf, 0, None
    history: list[EpochRecord] = []
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        losses = []
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            model.zero_grad()
            out = model.forward(xs[idx], training=True, rng=dropout_rng)
            loss = mae_loss(out.prediction, ys[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingAborted(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            tn.backward(loss)
            grads = {k: p.grad for k, p in model.params.items()}
            clip_grad_norm(grads, config.clip_norm)
            arrays = {k: p.data for k, p in model.params.items()}
            adam_step(arrays, grads, state)
            for k, p in model.params.items():
                p.data = arrays[k]
            losses.append(value)
        report = compute_metrics(*_predict_denorm(model, dataset, "validation"))
        rec = EpochRecord(epoch, float(np.mean(losses)), report.mae, report.rmse, report.mape,
                          time.perf_counter() - t0)
        history.append(rec)
        if log_every and epoch % log_every == 0:
            logger.info("epoch %d  train %.4f  val %s", epoch, rec.train_loss, report.summary())
        if report.mae < best_mae:
            best_mae, best_epoch, stale = report.mae, epoch, 0
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        else:
            stale += 1
            if stale >= config.patience:
                break
    ckpt = Checkpoint(mc, best_params, dataset.stats,
                      {"best_epoch": best_epoch, "best_val_mae": best_mae, "seed": config.seed})
    return TrainResult(ckpt, history, best_epoch)


def evaluate(
    checkpoint: Union[Checkpoint, DTMP], dataset: WindowedDataset, split: str = "test",
    mask_epsilon: float = 1e-3,
) -> MetricsReport:
    model = checkpoint.model() if isinstance(checkpoint, Checkpoint) else checkpoint
    _check_compatible(model.config, dataset)
    return compute_metrics(*_predict_denorm(model, dataset, split), mask_epsilon=mask_epsilon)


def evaluate_ha(dataset: WindowedDataset, split: str = "test", mask_epsilon: float = 1e-3) -> MetricsReport:
    s = dataset[split]
    if len(s) == 0:
        raise ValueError(f"the {split} split has no windows")
    pred = ha_baseline(s.x, s.y.shape[1])
    target = s.y
    if dataset.normalized:
        pred, target = denormalize(pred, dataset.stats), denormalize(target, dataset.stats)
    return compute_metrics(pred, target, mask_epsilon)


def run_ablation(variant: str, config: TrainConfig, dataset: WindowedDataset,
                 split: str = "test") -> tuple[MetricsReport, TrainResult]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    cfg = replace(config, model=replace(config.model, variant=variant))
    result = train(cfg, dataset)
    return evaluate(result.checkpoint, dataset, split), result


def ablation_table(reports: dict[str, MetricsReport]) -> str:
    lines = [f"{'variant':<14}{'MAE':>10}{'RMSE':>10}{'MAPE%':>10}"]
    for name, r in reports.items():
        mape = "-" if r.mape is None else f"{r.mape:.2f}"
        lines.append(f"{name:<14}{r.mae:>10.4f}{r.rmse:>10.4f}{mape:>10}")
    return "\n".join(lines)


# -- profiles --------------------------------------------------------------------
@dataclass
class Relation:
    module: int
    shift: int
    node: int
    weight: float


@dataclass
class ProfileExport:
    node: int
    embeddings: list[tuple[np.ndarray, np.ndarray]]  # pair entering each module
    graphs: list[tuple[int, int, np.ndarray]]  # (module, shift, adjacency)
    relations: list[Relation]  # strongest incoming relations of ``node`` over all graphs
    per_graph: list[list[Relation]] = field(default_factory=list)

    def top_incoming(self, shift: int, include_self: bool = False) -> int:
        """Strongest incoming neighbour of ``node`` averaged over every graph at ``shift``."""
        rows = [adj[self.node] for _, d, adj in self.graphs if d == shift]
        if not rows:
            raise ValueError(f"no exported graph has shift {shift}")
        row = np.mean(rows, axis=0)
        if not include_self:
            row = row.copy()
            row[self.node] = -np.inf
        return int(np.argmax(row))


def export_profiles(
    checkpoint: Checkpoint, node_id: int, top_k: int = 2, out_dir=None, include_self: bool = False
) -> ProfileExport:
    """Rebuild every shifted adjacency from stored embeddings and rank ``node_id``'s incoming weights."""
    cfg = checkpoint.config
    if not 0 <= node_id < cfg.n_nodes:
        raise ValueError(f"node {node_id} outside 0..{cfg.n_nodes - 1}")
    model = checkpoint.model()
    embeddings, graphs, per_graph, everything = [], [], [], []
    for l, (pair, bank) in enumerate(module_graphs(model.params, cfg)):
        embeddings.append((pair.e1.data.copy(), pair.e2.data.copy()))
        for g in bank:
            adj = g.matrix.data.copy()
            graphs.append((l, g.shift, adj))
            row = adj[node_id]
            cand = [j for j in np.argsort(-row, kind="stable") if include_self or j != node_id]
            per_graph.append([Relation(l, g.shift, int(j), float(row[j])) for j in cand[:top_k]])
            everything.extend(Relation(l, g.shift, int(j), float(row[j])) for j in cand)
    everything.sort(key=lambda r: (-r.weight, r.module, r.shift, r.node))
    export = ProfileExport(node_id, embeddings, graphs, everything[:top_k], per_graph)
    if out_dir is not None:
        write_profiles(export, out_dir)
    return export


def write_profiles(export: ProfileExport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for l, (e1, e2) in enumerate(export.embeddings):
        p = out / f"embeddings_module{l}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            e = e1.shape[1]
            w.writerow(["node"] + [f"e1_{i}" for i in range(e)] + [f"e2_{i}" for i in range(e)])
            for n in range(e1.shape[0]):
                w.writerow([n] + [repr(float(v)) for v in e1[n]] + [repr(float(v)) for v in e2[n]])
        written.append(p)
    for l, d, adj in export.graphs:
        p = out / f"adjacency_module{l}_shift{d}.csv"
        np.savetxt(p, adj, delimiter=",", fmt="%.17g")
        written.append(p)
    p = out / f"relations_node{export.node}.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scope", "rank", "module", "shift", "node", "weight"])
        for rank, r in enumerate(export.relations, 1):
            w.writerow(["overall", rank, r.module, r.shift, r.node, repr(r.weight)])
        for rels in export.per_graph:
            for rank, r in enumerate(rels, 1):
                w.writerow(["graph", rank, r.module, r.shift, r.node, repr(r.weight)])
    written.append(p)
    return written
