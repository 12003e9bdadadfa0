"""Adaptive graph generation, embedding coupling and shift decomposition.

A DACN needs one normalised adjacency per shift ``0, k, 2k, ...``. Adjacencies
come from a pair of node-embedding tables (``softmax(relu(E1 @ E2.T))``); the
pair for each later shift is obtained by an affine coupling map of the pair
before it. For predefined graphs, a spatial matrix is split by an integer
alignment matrix into one sub-graph per lag.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, add, matmul, relu, row_softmax, transpose


@dataclass
class EmbeddingPair:
    e1: Tensor
    e2: Tensor

    def __post_init__(self):
        if self.e1.shape != self.e2.shape or self.e1.ndim != 2:
            raise ValueError(f"embedding tables disagree: {self.e1.shape} vs {self.e2.shape}")
        if self.e1.shape[1] < 1:
            raise ValueError("embedding dimension must be at least 1")

    @property
    def n_nodes(self) -> int:
        return self.e1.shape[0]

    @property
    def emb_dim(self) -> int:
        return self.e1.shape[1]


@dataclass
class CouplingParams:
    """Affine maps ``E @ w + b``, one per embedding table."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def identity(cls, emb_dim: int, requires_grad: bool = False) -> "CouplingParams":
        return cls(
            Tensor(np.eye(emb_dim), requires_grad=requires_grad),
            Tensor(np.zeros(emb_dim), requires_grad=requires_grad),
            Tensor(np.eye(emb_dim), requires_grad=requires_grad),
            Tensor(np.zeros(emb_dim), requires_grad=requires_grad),
        )


@dataclass
class ShiftedAdjacency:
    shift: int
    matrix: Tensor


@dataclass
class GraphBank:
    graphs: list[ShiftedAdjacency]
    final_pair: Optional[EmbeddingPair] = None

    def __post_init__(self):
        shifts = self.shifts
        if any(b <= a for a, b in zip(shifts, shifts[1:])):
            raise ValueError(f"bank shifts must be strictly increasing, got {shifts}")

    @property
    def shifts(self) -> list[int]:
        return [g.shift for g in self.graphs]

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)


@dataclass
class PredefinedGraphs:
    """Spatial weights plus integer lags; lags live only on spatial edges."""

    spatial: np.ndarray
    alignment: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.spatial = np.asarray(self.spatial, dtype=np.float64)
        n = self.spatial.shape[0]
        if self.spatial.shape != (n, n):
            raise ValueError(f"spatial matrix must be square, got {self.spatial.shape}")
        if self.alignment is None:
            self.alignment = np.zeros((n, n), dtype=np.int64)
        align = np.asarray(self.alignment)
        if align.shape != (n, n):
            raise ValueError(f"alignment matrix shape {align.shape} != spatial {self.spatial.shape}")
        if np.any(self.spatial < 0):
            raise ValueError("spatial matrix has negative weights")
        if np.any(align < 0) or np.any(align != np.round(align)):
            raise ValueError("alignment values must be non-negative integers")
        self.alignment = align.astype(np.int64)
        off_graph = np.argwhere((self.alignment > 0) & (self.spatial <= 0))
        if len(off_graph):
            i, j = off_graph[0]
            raise ValueError(f"alignment edge ({i}, {j}) has no spatial edge underneath")
        both = np.argwhere((self.alignment > 0) & (self.alignment.T > 0))
        if len(both):
            i, j = both[0]
            raise ValueError(
                f"alignment is not antisymmetric: entries ({i}, {j}) and ({j}, {i}) are both positive"
            )

    @property
    def n_nodes(self) -> int:
        return self.spatial.shape[0]


def init_embeddings(
    n_nodes: int,
    emb_dim: int,
    seed: Optional[int] = None,
    adjacency: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> EmbeddingPair:
    """Random uniform[-0.5, 0.5] tables, or a rank-``emb_dim`` SVD factorisation of ``adjacency``."""
    if n_nodes < 2:
        raise ValueError(f"need at least 2 nodes, got {n_nodes}")
    if emb_dim < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {emb_dim}")
    if adjacency is not None:
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.shape != (n_nodes, n_nodes):
            raise ValueError(f"adjacency shape {adjacency.shape} != ({n_nodes}, {n_nodes})")
        if emb_dim > n_nodes:
            raise ValueError(f"rank {emb_dim} exceeds the {n_nodes}-node adjacency")
        u, s, vh = np.linalg.svd(adjacency)
        root = np.sqrt(s[:emb_dim])
        return EmbeddingPair(
            Tensor(u[:, :emb_dim] * root, requires_grad=True),
            Tensor(vh[:emb_dim].T * root, requires_grad=True),
        )
    rng = rng if rng is not None else np.random.default_rng(seed)
    return EmbeddingPair(
        Tensor(rng.uniform(-0.5, 0.5, (n_nodes, emb_dim)), requires_grad=True),
        Tensor(rng.uniform(-0.5, 0.5, (n_nodes, emb_dim)), requires_grad=True),
    )


def generate_graph(pair: EmbeddingPair) -> Tensor:
    """Right-stochastic adjacency ``softmax_rows(relu(E1 @ E2.T))``."""
    return row_softmax(relu(matmul(pair.e1, transpose(pair.e2))))


def couple(pair: EmbeddingPair, params: CouplingParams) -> EmbeddingPair:
    e = pair.emb_dim
    for w, b in ((params.w1, params.b1), (params.w2, params.b2)):
        if w.shape != (e, e) or b.shape != (e,):
            raise ValueError(
                f"coupling map has W {w.shape}, b {b.shape}; embeddings need ({e}, {e}) and ({e},)"
            )
    return EmbeddingPair(
        add(matmul(pair.e1, params.w1), params.b1),
        add(matmul(pair.e2, params.w2), params.b2),
    )


def bank_shifts(kernel: int, dilation: int) -> list[int]:
    if kernel < 1 or dilation < 1:
        raise ValueError(f"kernel and dilation must be >= 1, got {kernel}, {dilation}")
    return [i * dilation for i in range(kernel)]


def build_bank(
    pair: EmbeddingPair,
    couplings: Optional[Sequence[CouplingParams]],
    kernel: int,
    dilation: int,
) -> GraphBank:
    """Adjacencies at shifts ``0, k, ..., (K-1)k``; ``couplings=None`` reuses ``pair`` throughout."""
    shifts = bank_shifts(kernel, dilation)
    if couplings is not None and len(couplings) != kernel - 1:
        raise ValueError(f"expected {kernel - 1} coupling maps for kernel {kernel}, got {len(couplings)}")
    graphs = [ShiftedAdjacency(0, generate_graph(pair))]
    current = pair
    for i, d in enumerate(shifts[1:]):
        if couplings is not None:
            current = couple(current, couplings[i])
            graphs.append(ShiftedAdjacency(d, generate_graph(current)))
        else:
            graphs.append(ShiftedAdjacency(d, graphs[0].matrix))
    return GraphBank(graphs, final_pair=current)


def default_n_shifts(kernel: int, dilations: Sequence[int]) -> int:
    return (kernel - 1) * max(dilations) + 1


def row_normalize(a: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; all-zero rows stay zero."""
    a = np.asarray(a, dtype=np.float64)
    s = a.sum(axis=1, keepdims=True)
    return np.divide(a, s, out=np.zeros_like(a), where=s > 0)


def decompose_spatial(graphs: PredefinedGraphs, n_shifts: int) -> list[ShiftedAdjacency]:
    """Split the spatial matrix into one sub-graph per alignment value (unnormalised)."""
    top = int(graphs.alignment.max(initial=0))
    if top >= n_shifts:
        raise ValueError(f"alignment value {top} is out of range for {n_shifts} shifts")
    return [
        ShiftedAdjacency(d, Tensor(np.where(graphs.alignment == d, graphs.spatial, 0.0)))
        for d in range(n_shifts)
    ]


# -- edge-list files ---------------------------------------------------------
def _read_edges(path: Path) -> list[list[str]]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                int(row[0])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise
            rows.append([c.strip() for c in row])
    return rows


def load_predefined_graphs(
    spatial_path, n_nodes: int, alignment_path=None
) -> PredefinedGraphs:
    """Read ``src,dst,weight`` and ``src,dst,lag`` edge lists into validated matrices."""
    spatial = np.zeros((n_nodes, n_nodes))
    for src, dst, w in _read_edges(Path(spatial_path)):
        i, j = int(src), int(dst)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ValueError(f"edge ({i}, {j}) outside 0..{n_nodes - 1}")
        spatial[i, j] = float(w)
    alignment = np.zeros((n_nodes, n_nodes), dtype=np.int64)
    if alignment_path is not None:
        for src, dst, lag in _read_edges(Path(alignment_path)):
            i, j = int(src), int(dst)
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise ValueError(f"edge ({i}, {j}) outside 0..{n_nodes - 1}")
            alignment[i, j] = int(lag)
    return PredefinedGraphs(spatial, alignment)


def write_edge_list(path, matrix: np.ndarray, value_name: str = "weight") -> None:
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src_id", "dst_id", value_name])
        for i, j in zip(*np.nonzero(matrix)):
            v = matrix[i, j]
            w.writerow([int(i), int(j), int(v) if value_name == "lag" else repr(float(v))])
