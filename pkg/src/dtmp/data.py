"""Traffic series I/O, chronological windowing, z-scoring and a lagged synthetic generator."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SPLITS = ("train", "validation", "test")


@dataclass
class TrafficSeries:
    values: np.ndarray  # (time, node, feature)
    steps_per_day: int = 288
    name: str = "series"
    period: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 2:
            self.values = self.values[:, :, None]
        if self.values.ndim != 3:
            raise ValueError(f"series values must be (time, node, feature), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series contains non-finite values")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]


# -- wide-table files ----------------------------------------------------------
def _interpolate_column(col: np.ndarray, name: str) -> np.ndarray:
    bad = np.isnan(col)
    if not bad.any():
        return col
    good = np.flatnonzero(~bad)
    if good.size == 0:
        raise ValueError(f"column {name!r} has no numeric values to interpolate from")
    col = col.copy()
    col[bad] = np.interp(np.flatnonzero(bad), good, col[good])
    return col


def _parse_cell(cell: str, lineno: int, col: int) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na", "null"):
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ValueError(f"line {lineno}, column {col}: non-numeric cell {cell!r}") from None


def read_metadata(meta_path) -> dict:
    with open(meta_path) as fh:
        meta = json.load(fh)
    missing = [k for k in ("num_nodes", "num_steps", "steps_per_day") if k not in meta]
    if missing:
        raise ValueError(f"{meta_path}: metadata lacks {', '.join(missing)}")
    return meta


def load_dataset(data_path, meta_path) -> TrafficSeries:
    """Read a wide CSV (header of node ids, one row per step) and its JSON metadata.

    Empty or ``nan`` cells are filled by per-node linear interpolation.
    """
    meta = read_metadata(meta_path)
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{data_path}:{lineno}: ragged row with {len(row)} cells, header has {len(header)}")
            rows.append([_parse_cell(c, lineno, i) for i, c in enumerate(row)])
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    for j in range(values.shape[1]):
        values[:, j] = _interpolate_column(values[:, j], header[j])
    if values.shape[1] != int(meta["num_nodes"]):
        raise ValueError(f"table has {values.shape[1]} nodes, metadata declares {meta['num_nodes']}")
    if values.shape[0] != int(meta["num_steps"]):
        raise ValueError(f"table has {values.shape[0]} steps, metadata declares {meta['num_steps']}")
    return TrafficSeries(
        values[:, :, None],
        steps_per_day=int(meta["steps_per_day"]),
        name=str(meta.get("name", Path(data_path).stem)),
        period=str(meta.get("period", "")),
    )


def write_dataset(series: TrafficSeries, data_path, meta_path) -> None:
    """Inverse of :func:`load_dataset` for single-feature series (values written with ``repr``)."""
    if series.n_features != 1:
        raise ValueError("the wide-table format holds exactly one feature")
    with open(data_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"node_{i}" for i in range(series.n_nodes)])
        for row in series.values[:, :, 0]:
            w.writerow([repr(float(v)) for v in row])
    meta = {
        "name": series.name,
        "num_nodes": series.n_nodes,
        "num_steps": series.n_steps,
        "steps_per_day": series.steps_per_day,
        "period": series.period,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2)


# -- windowing -----------------------------------------------------------------
@dataclass
class SplitWindows:
    x: np.ndarray  # (samples, T, N, C)
    y: np.ndarray  # (samples, T', N, C)
    start: np.ndarray  # absolute index of each window's first step

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class NormStats:
    mean: np.ndarray  # (C,)
    std: np.ndarray  # (C,)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass
class WindowedDataset:
    splits: dict[str, SplitWindows]
    segments: dict[str, np.ndarray]  # raw per-split series
    bounds: dict[str, tuple[int, int]]  # [start, stop) in the original series
    input_len: int
    horizon: int
    stats: Optional[NormStats] = None
    normalized: bool = False

    def __getitem__(self, split: str) -> SplitWindows:
        return self.splits[split]

    @property
    def n_nodes(self) -> int:
        return self.splits["train"].x.shape[2]

    @property
    def n_features(self) -> int:
        return self.splits["train"].x.shape[3]


def sliding_windows(values: np.ndarray, input_len: int, horizon: int, offset: int = 0) -> SplitWindows:
    n = values.shape[0] - input_len - horizon + 1
    if n < 1:
        raise ValueError(
            f"segment of {values.shape[0]} steps is shorter than a window of {input_len + horizon}"
        )
    idx = np.arange(n)[:, None]
    x = values[idx + np.arange(input_len)]
    y = values[idx + input_len + np.arange(horizon)]
    return SplitWindows(x, y, offset + np.arange(n))


def split_and_window(
    series: TrafficSeries,
    input_len: int = 12,
    horizon: int = 12,
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
) -> WindowedDataset:
    """Cut the series chronologically by ``ratios``, then window each part at stride 1.

    A training segment shorter than one window is an error. A validation or
    test segment that short yields an empty split and a warning, so short
    series can still be windowed for training alone.
    """
    if input_len < 1 or horizon < 1:
        raise ValueError(f"input_len and horizon must be >= 1, got {input_len}, {horizon}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    total = series.n_steps
    n_train = int(round(total * ratios[0]))
    n_val = int(round(total * ratios[1]))
    cuts = [0, n_train, n_train + n_val, total]
    splits, segments, bounds = {}, {}, {}
    for name, lo, hi in zip(SPLITS, cuts[:-1], cuts[1:]):
        seg = series.values[lo:hi]
        try:
            splits[name] = sliding_windows(seg, input_len, horizon, offset=lo)
        except ValueError as exc:
            if name == "train":
                raise ValueError(f"{name} split: {exc}") from None
            warnings.warn(f"{name} split: {exc}; the split is empty", RuntimeWarning, stacklevel=2)
            shape = (0,) + series.values.shape[1:]
            splits[name] = SplitWindows(
                np.empty((0, input_len) + shape[1:]), np.empty((0, horizon) + shape[1:]), np.empty(0, dtype=int)
            )
        segments[name] = seg
        bounds[name] = (lo, hi)
    return WindowedDataset(splits, segments, bounds, input_len, horizon)


def fit_stats(train_values: np.ndarray) -> NormStats:
    flat = train_values.reshape(-1, train_values.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    const = std <= 1e-12
    if const.any():
        warnings.warn(
            f"feature channel(s) {np.flatnonzero(const).tolist()} are constant; left unscaled",
            RuntimeWarning,
            stacklevel=2,
        )
        mean = np.where(const, 0.0, mean)
        std = np.where(const, 1.0, std)
    return NormStats(mean, std)


def normalize(dataset: WindowedDataset, stats: Optional[NormStats] = None) -> WindowedDataset:
    """Z-score every split with statistics of the raw training segment."""
    if dataset.normalized:
        return dataset
    stats = stats if stats is not None else fit_stats(dataset.segments["train"])
    f = lambda a: (a - stats.mean) / stats.std  # noqa: E731
    splits = {
        k: SplitWindows(f(s.x), f(s.y), s.start) for k, s in dataset.splits.items()
    }
    segments = {k: f(v) for k, v in dataset.segments.items()}
    return WindowedDataset(splits, segments, dataset.bounds, dataset.input_len, dataset.horizon, stats, True)


def denormalize(values, stats: NormStats) -> np.ndarray:
    return np.asarray(values) * stats.std + stats.mean


# -- synthetic data ------------------------------------------------------------
@dataclass
class PlantedEdge:
    src: int
    dst: int
    lag: int
    weight: float


@dataclass
class SyntheticSpec:
    """Sources emit a daily sinusoid plus a smooth AR(1) excursion; every other
    node copies its parents with a delay. ``noise`` is observation noise in
    units of ``amplitude``."""

    n_nodes: int = 12
    n_steps: int = 3000
    n_sources: int = 2
    edges: list[PlantedEdge] = field(default_factory=list)
    noise: float = 0.1
    period: int = 48
    amplitude: float = 1.0
    level: float = 3.0
    variability: float = 0.5
    ar_coef: float = 0.9

    def __post_init__(self):
        self.edges = [e if isinstance(e, PlantedEdge) else PlantedEdge(**e) for e in self.edges]
        if not self.edges:
            self.edges = default_edges(self.n_nodes, self.n_sources)
        self.validate()

    def validate(self) -> None:
        if self.n_nodes < 2 or self.n_steps < 2:
            raise ValueError("need at least 2 nodes and 2 steps")
        if not 1 <= self.n_sources <= self.n_nodes:
            raise ValueError(f"n_sources must lie in 1..{self.n_nodes}")
        if self.noise < 0 or self.period < 1:
            raise ValueError("noise must be >= 0 and period >= 1")
        for e in self.edges:
            if not (0 <= e.src < self.n_nodes and 0 <= e.dst < self.n_nodes) or e.src == e.dst:
                raise ValueError(f"edge {e} has invalid endpoints")
            if e.lag < 1:
                raise ValueError(f"edge {e}: lags must be >= 1")
            if e.lag >= self.n_steps:
                raise ValueError(f"edge {e}: lag is not shorter than the series")
            if not 0.0 < e.weight <= 1.0:
                raise ValueError(f"edge {e}: weight must lie in (0, 1]")
        _topological_order(self.n_nodes, self.edges)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def default_edges(n_nodes: int, n_sources: int, lags: Sequence[int] = (1, 2, 4)) -> list[PlantedEdge]:
    """Every non-source node mixes all sources, each arriving with its own delay.

    Destination ``k`` hears source ``s`` after ``lags[(k + 2 s) % len(lags)]``
    steps with weight ``1 / n_sources``. With two sources and three lags the two
    delays always differ, so no single time offset lines up both parents.
    """
    edges = []
    for k, dst in enumerate(range(n_sources, n_nodes)):
        for s in range(n_sources):
            lag = int(lags[(k + 2 * s) % len(lags)])
            edges.append(PlantedEdge(s, dst, lag, 1.0 / n_sources))
    return edges


def _topological_order(n: int, edges: Sequence[PlantedEdge]) -> list[int]:
    parents = {i: [e.src for e in edges if e.dst == i] for i in range(n)}
    order, done = [], set()
    while len(order) < n:
        ready = [i for i in range(n) if i not in done and all(p in done for p in parents[i])]
        if not ready:
            raise ValueError("planted edges contain a cycle")
        for i in ready:
            order.append(i)
            done.add(i)
    return order


def synth_generate(spec: SyntheticSpec, seed: int = 0) -> tuple[TrafficSeries, list[PlantedEdge]]:
    rng = np.random.default_rng(seed)
    n, T = spec.n_nodes, spec.n_steps
    burn = sum(e.lag for e in spec.edges) + 1
    L = T + burn
    t = np.arange(L) - burn
    sig = np.zeros((L, n))
    has_parent = {e.dst for e in spec.edges}
    for i in _topological_order(n, spec.edges):
        if i in has_parent:
            for e in spec.edges:
                if e.dst == i:
                    sig[e.lag:, i] += e.weight * sig[:-e.lag, e.src]
            continue
        phase = rng.uniform(0, 2 * np.pi)
        ar = np.zeros(L)
        innov = rng.normal(0.0, math.sqrt(1 - spec.ar_coef ** 2), L)
        for k in range(1, L):
            ar[k] = spec.ar_coef * ar[k - 1] + innov[k]
        sig[:, i] = spec.amplitude * (np.sin(2 * np.pi * t / spec.period + phase) + spec.variability * ar)
    values = spec.level + sig[burn:]
    if spec.noise > 0:
        values = values + rng.normal(0.0, spec.noise * spec.amplitude, values.shape)
    series = TrafficSeries(values[:, :, None], steps_per_day=spec.period, name="synthetic",
                           period=f"{T} steps")
    return series, list(spec.edges)


def write_ground_truth(edges: Sequence[PlantedEdge], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "lag", "weight"])
        for e in edges:
            w.writerow([e.src, e.dst, e.lag, repr(float(e.weight))])


def read_ground_truth(path) -> list[PlantedEdge]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [PlantedEdge(int(r["src"]), int(r["dst"]), int(r["lag"]), float(r["weight"])) for r in rows]
