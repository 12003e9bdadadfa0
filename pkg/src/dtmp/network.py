"""The spatio-temporal forecasting network.

Data flow for an input ``x`` of shape (batch, T, N, C)::

    h = x @ W_in + b_in                               # lift C -> F
    for each module l (dilation k_l):
        bank  = graphs at shifts 0, k_l, ..., (K-1) k_l  from the module's embeddings
        temp  = DACN(h, bank) + GatedTCN(h, k_l)
        h     = h + temp @ W_res + b_res
        S     = S + temp[:, -1] @ W_skip + b_skip
        pair  = couple(pair)                          # embeddings for module l+1
    y = relu(relu(S) @ W_1 + b_1) @ W_2 + b_2          # -> (batch, T', N, C)

Only the final time position of the skip sum feeds the output head, so skip
contributions are evaluated at that position alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as tn
from .graphs import (
    CouplingParams,
    EmbeddingPair,
    GraphBank,
    ShiftedAdjacency,
    build_bank,
    couple,
    generate_graph,
    init_embeddings,
)
from .tensor import Tensor

VARIANTS = ("full", "no_coupling", "no_alignment", "no_gated_tcn")


@dataclass
class ModelConfig:
    n_nodes: int
    in_features: int = 1
    hidden: int = 32
    skip: int = 64
    head_hidden: int = 128
    n_modules: int = 6
    dilations: list[int] = field(default_factory=lambda: [1, 2, 4, 1, 2, 4])
    kernel: int = 2
    tcn_kernel: int = 2
    emb_dim: int = 10
    dropout: float = 0.3
    input_len: int = 12
    horizon: int = 12
    out_features: int = 1
    variant: str = "full"

    def __post_init__(self):
        self.dilations = [int(d) for d in self.dilations]
        self.validate()

    def validate(self) -> None:
        errors = []
        if self.n_nodes < 2:
            errors.append("n_nodes must be >= 2")
        for name in ("in_features", "hidden", "skip", "head_hidden", "n_modules", "kernel",
                     "tcn_kernel", "emb_dim", "input_len", "horizon", "out_features"):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1")
        if len(self.dilations) != self.n_modules:
            errors.append(f"dilations has {len(self.dilations)} entries for {self.n_modules} modules")
        if any(d < 1 for d in self.dilations):
            errors.append("dilations must be >= 1")
        if self.dilations and self.input_len < (self.kernel - 1) * max(self.dilations) + 1:
            errors.append(
                f"input_len {self.input_len} is shorter than the largest shift "
                f"{(self.kernel - 1) * max(self.dilations)} + 1"
            )
        if self.dilations and (self.tcn_kernel - 1) * max(self.dilations) >= self.input_len:
            errors.append("tcn_kernel * dilation exceeds the padded input length")
        if not 0.0 <= self.dropout < 1.0:
            errors.append("dropout must lie in [0, 1)")
        if self.variant not in VARIANTS:
            errors.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if errors:
            raise ValueError("invalid model config: " + "; ".join(errors))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class STModuleParams:
    """Views onto one module's entries of the flat parameter dict."""

    agcn: list[tuple[Tensor, Tensor]]
    fuse: Optional[tuple[Tensor, Tensor]]
    inner_couplings: Optional[list[CouplingParams]]
    theta1: Optional[Tensor]
    theta2: Optional[Tensor]
    b1: Optional[Tensor]
    b2: Optional[Tensor]
    residual: tuple[Tensor, Tensor]
    skip: tuple[Tensor, Tensor]
    next_coupling: Optional[CouplingParams]


@dataclass
class NetworkOutput:
    prediction: Tensor
    skip: Tensor
    hidden: list[Tensor]


# -- building blocks ---------------------------------------------------------
def agcn_preactivation(h: Tensor, adj: ShiftedAdjacency, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``A_d @ shift(h, d) @ W (+ b)`` over the node axis of a (B, T, N, F) tensor."""
    if adj.matrix.shape[0] != h.shape[2]:
        raise tn.ShapeError(
            f"adjacency has {adj.matrix.shape[0]} nodes but the signal has {h.shape[2]}"
        )
    z = tn.matmul(tn.node_mix(adj.matrix, tn.temporal_shift(h, adj.shift)), W)
    return z if b is None else tn.add(z, b)


def agcn_forward(h: Tensor, adj: ShiftedAdjacency, W: Tensor, b: Tensor) -> Tensor:
    """Alignment graph convolution with node-indexed bias ``b`` (N, F_out) and ReLU."""
    return tn.relu(agcn_preactivation(h, adj, W, b))


def agcn_reference(
    h: np.ndarray,
    spatial: np.ndarray,
    alignment: np.ndarray,
    W: np.ndarray,
    b: np.ndarray,
    activate: bool = True,
) -> np.ndarray:
    """Per-node-pair alignment convolution written as explicit loops.

    Every neighbour ``j`` of node ``i`` is shifted by its own lag
    ``alignment[i, j]`` before being weighted by ``spatial[i, j]``. Slow by
    design; used to certify the decomposed form.
    """
    h = np.asarray(h, dtype=np.float64)
    B, T, N, F = h.shape
    agg = np.zeros((B, T, N, F))
    for i in range(N):
        for j in range(N):
            a = spatial[i, j]
            if a == 0.0:
                continue
            lag = int(alignment[i, j])
            for t in range(lag, T):
                agg[:, t, i, :] += a * h[:, t - lag, j, :]
    out = agg @ W + b
    return np.maximum(out, 0.0) if activate else out


def dacn_forward(
    h: Tensor,
    bank: GraphBank,
    agcn_params: Sequence[tuple[Tensor, Tensor]],
    fuse: Optional[tuple[Tensor, Tensor]],
    dropout: float,
    training: bool,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Chain AGCNs by ascending shift, concatenate their outputs, project to width F.

    With ``fuse=None`` the bank must hold one graph and its AGCN output is used as is.
    """
    if len(agcn_params) != len(bank):
        raise ValueError(f"{len(agcn_params)} AGCN weight sets for a bank of {len(bank)} graphs")
    outs = []
    x = h
    for adj, (W, b) in zip(bank, agcn_params):
        x = agcn_forward(x, adj, W, b)
        outs.append(x)
    if fuse is None:
        if len(outs) != 1:
            raise ValueError("a fusion projection is required for more than one AGCN")
        y = outs[0]
    else:
        cat = tn.concat(outs, axis=-1) if len(outs) > 1 else outs[0]
        y = tn.add(tn.matmul(cat, fuse[0]), fuse[1])
    return tn.dropout(y, dropout, training, rng)


def causal_conv(h: Tensor, theta: Tensor, b: Tensor, dilation: int) -> Tensor:
    """Dilated causal convolution along time; ``theta`` is (taps, F_in, F_out), last tap = current step."""
    k, f_in, f_out = theta.shape
    taps = [tn.temporal_shift(h, (k - 1 - i) * dilation) for i in range(k)]
    x = tn.concat(taps, axis=-1) if k > 1 else taps[0]
    return tn.add(tn.matmul(x, tn.reshape(theta, (k * f_in, f_out))), b)


def gated_tcn_forward(
    h: Tensor, theta1: Tensor, theta2: Tensor, b1: Tensor, b2: Tensor, dilation: int
) -> Tensor:
    """``tanh(conv1(h)) * sigmoid(conv2(h))`` with causal zero padding, so time length is kept."""
    k = theta1.shape[0]
    if (k - 1) * dilation >= h.shape[1]:
        raise ValueError(
            f"temporal kernel {k} at dilation {dilation} spans beyond {h.shape[1]} time steps"
        )
    if theta1.shape != theta2.shape:
        raise tn.ShapeError(f"filter/gate kernels differ: {theta1.shape} vs {theta2.shape}")
    f_out = theta1.shape[2]
    # filter and gate share one GEMM
    theta = tn.concat([theta1, theta2], axis=-1)
    z = causal_conv(h, theta, tn.concat([b1, b2], axis=-1), dilation)
    return tn.mul(tn.tanh(z[..., :f_out]), tn.sigmoid(z[..., f_out:]))


def st_module_forward(
    h: Tensor,
    mp: STModuleParams,
    pair: EmbeddingPair,
    config: ModelConfig,
    dilation: int,
    training: bool,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, Tensor, EmbeddingPair, GraphBank]:
    """One module: returns (h_next, skip contribution at the last step, next pair, graph bank)."""
    if config.variant == "no_alignment":
        bank = GraphBank([ShiftedAdjacency(0, generate_graph(pair))], final_pair=pair)
    else:
        bank = build_bank(pair, mp.inner_couplings, config.kernel, dilation)
    temp = dacn_forward(h, bank, mp.agcn, mp.fuse, config.dropout, training, rng)
    if mp.theta1 is not None:
        temp = tn.add(temp, gated_tcn_forward(h, mp.theta1, mp.theta2, mp.b1, mp.b2, dilation))
    h_next = tn.add(h, tn.add(tn.matmul(temp, mp.residual[0]), mp.residual[1]))
    skip = tn.add(tn.matmul(temp[:, -1], mp.skip[0]), mp.skip[1])
    if mp.next_coupling is not None:
        pair_next = couple(bank.final_pair, mp.next_coupling)
    else:
        pair_next = bank.final_pair if config.variant != "no_coupling" else pair
    return h_next, skip, pair_next, bank


# -- parameters --------------------------------------------------------------
def _glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape if shape is not None else (fan_in, fan_out))


def init_params(
    config: ModelConfig, seed: int = 0, adjacency: Optional[np.ndarray] = None
) -> dict[str, Tensor]:
    """Fresh parameters keyed by dotted names; layout depends on ``config.variant``."""
    rng = np.random.default_rng(seed)
    F, S, e, N, K = config.hidden, config.skip, config.emb_dim, config.n_nodes, config.kernel
    arrays: dict[str, np.ndarray] = {}

    def coupling(prefix):
        # identity plus a small perturbation so successive graphs can separate
        for t in ("1", "2"):
            arrays[f"{prefix}.w{t}"] = np.eye(e) + rng.normal(0.0, 0.1 / np.sqrt(e), (e, e))
            arrays[f"{prefix}.b{t}"] = np.zeros(e)

    arrays["input.w"] = _glorot(rng, config.in_features, F)
    arrays["input.b"] = np.zeros(F)
    pair = init_embeddings(N, e, adjacency=adjacency, rng=rng)
    arrays["emb.e1"], arrays["emb.e2"] = pair.e1.data, pair.e2.data

    n_agcn = 1 if config.variant == "no_alignment" else K
    for l in range(config.n_modules):
        p = f"mod{l}"
        for i in range(n_agcn):
            arrays[f"{p}.agcn{i}.w"] = _glorot(rng, F, F)
            arrays[f"{p}.agcn{i}.b"] = np.zeros((N, F))
        if config.variant != "no_alignment":
            arrays[f"{p}.fuse.w"] = _glorot(rng, n_agcn * F, F)
            arrays[f"{p}.fuse.b"] = np.zeros(F)
            if config.variant != "no_coupling":
                for i in range(1, K):
                    coupling(f"{p}.couple{i}")
        if config.variant != "no_gated_tcn":
            k = config.tcn_kernel
            arrays[f"{p}.tcn.theta1"] = _glorot(rng, k * F, F, (k, F, F))
            arrays[f"{p}.tcn.theta2"] = _glorot(rng, k * F, F, (k, F, F))
            arrays[f"{p}.tcn.b1"] = np.zeros(F)
            arrays[f"{p}.tcn.b2"] = np.zeros(F)
        arrays[f"{p}.residual.w"] = _glorot(rng, F, F)
        arrays[f"{p}.residual.b"] = np.zeros(F)
        arrays[f"{p}.skip.w"] = _glorot(rng, F, S)
        arrays[f"{p}.skip.b"] = np.zeros(S)
        if config.variant != "no_coupling" and l < config.n_modules - 1:
            coupling(f"{p}.next")
    arrays["head.w1"] = _glorot(rng, S, config.head_hidden)
    arrays["head.b1"] = np.zeros(config.head_hidden)
    arrays["head.w2"] = _glorot(rng, config.head_hidden, config.horizon * config.out_features)
    arrays["head.b2"] = np.zeros(config.horizon * config.out_features)
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}


def _coupling_view(params, prefix) -> Optional[CouplingParams]:
    if f"{prefix}.w1" not in params:
        return None
    return CouplingParams(
        params[f"{prefix}.w1"], params[f"{prefix}.b1"], params[f"{prefix}.w2"], params[f"{prefix}.b2"]
    )


def module_params(params: dict[str, Tensor], config: ModelConfig, l: int) -> STModuleParams:
    p = f"mod{l}"
    n_agcn = 1 if config.variant == "no_alignment" else config.kernel
    inner = None
    if config.variant not in ("no_alignment", "no_coupling"):
        inner = [_coupling_view(params, f"{p}.couple{i}") for i in range(1, config.kernel)]
    has_tcn = f"{p}.tcn.theta1" in params
    return STModuleParams(
        agcn=[(params[f"{p}.agcn{i}.w"], params[f"{p}.agcn{i}.b"]) for i in range(n_agcn)],
        fuse=(params[f"{p}.fuse.w"], params[f"{p}.fuse.b"]) if f"{p}.fuse.w" in params else None,
        inner_couplings=inner,
        theta1=params[f"{p}.tcn.theta1"] if has_tcn else None,
        theta2=params[f"{p}.tcn.theta2"] if has_tcn else None,
        b1=params[f"{p}.tcn.b1"] if has_tcn else None,
        b2=params[f"{p}.tcn.b2"] if has_tcn else None,
        residual=(params[f"{p}.residual.w"], params[f"{p}.residual.b"]),
        skip=(params[f"{p}.skip.w"], params[f"{p}.skip.b"]),
        next_coupling=_coupling_view(params, f"{p}.next"),
    )


def count_parameters(params: dict[str, Tensor]) -> int:
    return int(sum(t.size for t in params.values()))


# -- full network ------------------------------------------------------------
def network_forward(
    x: Tensor,
    params: dict[str, Tensor],
    config: ModelConfig,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    keep_banks: bool = False,
) -> NetworkOutput:
    x = tn.as_tensor(x)
    expected = (config.input_len, config.n_nodes, config.in_features)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise tn.ShapeError(f"input shape {x.shape} does not match (batch, {', '.join(map(str, expected))})")
    B = x.shape[0]
    h = tn.add(tn.matmul(x, params["input.w"]), params["input.b"])
    pair = EmbeddingPair(params["emb.e1"], params["emb.e2"])
    skip = None
    hidden = []
    for l, d in enumerate(config.dilations):
        mp = module_params(params, config, l)
        h, contrib, pair, _ = st_module_forward(h, mp, pair, config, d, training, rng)
        skip = contrib if skip is None else tn.add(skip, contrib)
        hidden.append(h)
    z = tn.relu(skip)
    z = tn.relu(tn.add(tn.matmul(z, params["head.w1"]), params["head.b1"]))
    z = tn.add(tn.matmul(z, params["head.w2"]), params["head.b2"])  # (B, N, T'*C)
    z = tn.reshape(z, (B, config.n_nodes, config.horizon, config.out_features))
    pred = tn.transpose(z, (0, 2, 1, 3))
    return NetworkOutput(pred, skip, hidden)


def module_graphs(params: dict[str, Tensor], config: ModelConfig) -> list[tuple[EmbeddingPair, GraphBank]]:
    """Recompute, per module, the embedding pair it receives and its graph bank."""
    out = []
    with tn.no_grad():
        pair = EmbeddingPair(params["emb.e1"], params["emb.e2"])
        for l, d in enumerate(config.dilations):
            mp = module_params(params, config, l)
            if config.variant == "no_alignment":
                bank = GraphBank([ShiftedAdjacency(0, generate_graph(pair))], final_pair=pair)
            else:
                bank = build_bank(pair, mp.inner_couplings, config.kernel, d)
            out.append((pair, bank))
            if mp.next_coupling is not None:
                pair = couple(bank.final_pair, mp.next_coupling)
            elif config.variant != "no_coupling":
                pair = bank.final_pair
    return out


def graph_banks(params: dict[str, Tensor], config: ModelConfig) -> list[GraphBank]:
    return [bank for _, bank in module_graphs(params, config)]


def mae_loss(pred: Tensor, target) -> Tensor:
    target = tn.as_tensor(target)
    if pred.shape != target.shape:
        raise tn.ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    return tn.mean(tn.tabs(tn.sub(pred, target)))


class DTMP:
    """Parameter container plus forward pass for one configuration."""

    def __init__(self, config: ModelConfig, seed: int = 0, params: Optional[dict[str, Tensor]] = None,
                 adjacency: Optional[np.ndarray] = None):
        self.config = config
        self.params = params if params is not None else init_params(config, seed, adjacency)

    def forward(self, x, training: bool = False, rng: Optional[np.random.Generator] = None) -> NetworkOutput:
        return network_forward(tn.as_tensor(x), self.params, self.config, training, rng)

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        outs = []
        with tn.no_grad():
            for i in range(0, len(x), batch_size):
                outs.append(self.forward(x[i:i + batch_size]).prediction.data)
        return np.concatenate(outs, axis=0)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def n_parameters(self) -> int:
        return count_parameters(self.params)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def banks(self) -> list[GraphBank]:
        return graph_banks(self.params, self.config)
