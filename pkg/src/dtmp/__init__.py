"""Spatio-temporal forecasting with alignment-aware graph convolution over learned, shift-indexed graphs."""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    SyntheticSpec,
    TrafficSeries,
    WindowedDataset,
    denormalize,
    load_dataset,
    normalize,
    split_and_window,
    synth_generate,
)
from .graphs import EmbeddingPair, GraphBank, PredefinedGraphs, build_bank, decompose_spatial, generate_graph
from .network import DTMP, ModelConfig, mae_loss, network_forward
from .tensor import Tensor, backward, no_grad
from .training import (
    MetricsReport,
    TrainConfig,
    compute_metrics,
    evaluate,
    export_profiles,
    ha_baseline,
    run_ablation,
    train,
)
