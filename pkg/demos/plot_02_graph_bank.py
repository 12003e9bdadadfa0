"""
From node embeddings to a bank of shifted graphs
================================================

Two embedding tables define a right-stochastic adjacency
``softmax(relu(E1 E2^T))``. A learned affine coupling carries the
embeddings from one graph to the next, so a module with kernel K and
dilation k gets K related graphs at shifts 0, k, ..., (K-1)k.
"""

import numpy as np

from dtmp.graphs import (
    CouplingParams,
    PredefinedGraphs,
    build_bank,
    decompose_spatial,
    generate_graph,
    init_embeddings,
)
from dtmp.tensor import Tensor

np.set_printoptions(precision=3, suppress=True)

pair = init_embeddings(n_nodes=5, emb_dim=4, seed=1)
A = generate_graph(pair).data
print("adaptive graph, rows sum to", A.sum(axis=1))

# a slightly perturbed coupling yields a nearby but distinct second graph
rng = np.random.default_rng(2)
coupling = CouplingParams(
    Tensor(np.eye(4) + rng.normal(0, 0.3, (4, 4))), Tensor(np.zeros(4)),
    Tensor(np.eye(4) + rng.normal(0, 0.3, (4, 4))), Tensor(np.zeros(4)),
)
bank = build_bank(pair, [coupling], kernel=2, dilation=4)
for g in bank:
    print(f"shift {g.shift}: row 0 = {g.matrix.data[0]}")

# with a predefined graph, each edge goes to the sub-graph of its lag
spatial = np.array([[0, .5, .2], [.3, 0, 0], [.4, .1, 0]])
lags = np.array([[0, 1, 2], [0, 0, 0], [0, 0, 0]])
for sub in decompose_spatial(PredefinedGraphs(spatial, lags), n_shifts=3):
    print(f"edges with lag {sub.shift}:\n{sub.matrix.data}")
