"""
Reading learned relations back out of a checkpoint
==================================================

Every graph the network used can be rebuilt from the stored embeddings and
coupling maps alone. Here a model is trained on noise-free data where node 3
copies node 0 one step late, and the shift-1 graph is inspected.
"""

import tempfile
from pathlib import Path

import numpy as np

from dtmp.checkpoint import load_checkpoint, save_checkpoint
from dtmp.data import PlantedEdge, SyntheticSpec, normalize, split_and_window, synth_generate
from dtmp.network import ModelConfig
from dtmp.training import TrainConfig, export_profiles, train

np.set_printoptions(precision=3, suppress=True)

spec = SyntheticSpec(n_nodes=6, n_sources=3, noise=0.0,
                     edges=[PlantedEdge(0, 3, 1, 1.0), PlantedEdge(1, 4, 2, 1.0), PlantedEdge(2, 5, 4, 1.0)])
series, _ = synth_generate(spec, seed=0)
data = normalize(split_and_window(series, 12, 12))
cfg = ModelConfig(n_nodes=6, hidden=16, skip=32, head_hidden=64, n_modules=3, dilations=[1, 2, 4])
result = train(TrainConfig(cfg, max_epochs=10), data)

with tempfile.TemporaryDirectory() as tmp:
    save_checkpoint(result.checkpoint, Path(tmp) / "ck")
    ckpt = load_checkpoint(Path(tmp) / "ck")
    profile = export_profiles(ckpt, node_id=3, top_k=2, out_dir=Path(tmp) / "profiles")
    print("files:", sorted(p.name for p in (Path(tmp) / "profiles").iterdir())[:4], "...")

for module, shift, adj in profile.graphs:
    print(f"module {module} shift {shift}: incoming weights of node 3 = {adj[3]}")
print("strongest other node in the shift-1 graph:", profile.top_incoming(1))
for r in profile.relations:
    print(f"  node {r.node} via module {r.module}, shift {r.shift}: {r.weight:.3f}")
