"""
Reverse-mode gradients on numpy arrays
======================================

Every ``Tensor`` remembers its parents and a closure that maps the output
gradient to gradients for those parents. ``backward`` orders the recorded
graph topologically and runs the closures in reverse.
"""

import numpy as np

from dtmp import tensor as tn
from dtmp.gradcheck import check_gradients
from dtmp.tensor import Tensor, backward

# a tiny gated unit: tanh(x W1) * sigmoid(x W2), summed
rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(5, 3)))
W1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
W2 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)


def loss():
    return tn.mul(tn.tanh(x @ W1), tn.sigmoid(x @ W2)).sum()


backward(loss())
print("dL/dW1 row 0:", np.round(W1.grad[0], 4))

# compare every entry with central finite differences
W1.zero_grad()
W2.zero_grad()
errs = check_gradients(loss, {"W1": W1, "W2": W2})
for name, err in errs.items():
    print(f"relative error {name}: {err:.2e}")

# the temporal shift used by alignment convolution: position t receives t - d
signal = Tensor(np.arange(1.0, 7.0))
print("shift by 2:", tn.temporal_shift(signal, 2, axis=0).data)
