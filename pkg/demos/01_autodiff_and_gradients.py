"""Tour of the tensor core: building graphs, backprop, and checking every
gradient against central finite differences.

Run:  python3 demos/01_autodiff_and_gradients.py
"""

import numpy as np

from discvc import autodiff as ad
from discvc.rng import make_rng

rng = np.random.default_rng(0)

# --- a tiny expression graph ---------------------------------------------------
# y = sum(relu(W @ x + b) * v): one dense layer and a weighted readout.
W = ad.parameter(rng.standard_normal((4, 3)) * 0.5, dtype=np.float64)
b = ad.parameter(np.zeros((4, 1)), dtype=np.float64)
x = ad.constant(rng.standard_normal((3, 5)), dtype=np.float64)
v = ad.constant(rng.uniform(0.5, 1.5, (4, 5)), dtype=np.float64)

loss = (ad.relu(ad.matmul(W, x) + b) * v).sum()
loss.backward()
print(f"loss = {loss.item():.6f}")
print(f"dL/dW[0] = {np.round(W.grad[0], 4)}")

# --- finite-difference verification ---------------------------------------------
# Perturb every entry of W by +-h and compare the slope with the backprop result.
h = 1e-3
fd = np.zeros_like(W.data)
for i in range(W.data.shape[0]):
    for j in range(W.data.shape[1]):
        orig = W.data[i, j]
        W.data[i, j] = orig + h
        up = (ad.relu(ad.matmul(W, x) + b) * v).sum().item()
        W.data[i, j] = orig - h
        down = (ad.relu(ad.matmul(W, x) + b) * v).sum().item()
        W.data[i, j] = orig
        fd[i, j] = (up - down) / (2 * h)
rel = np.abs(W.grad - fd) / np.maximum(np.abs(fd), 1e-9)
print(f"max relative error vs finite differences: {rel.max():.2e}")

# --- the building blocks the networks use ---------------------------------------
# Weight-normalized conv -> layer norm -> relu, exactly as the model stacks them.
C_in, C_out, K, T = 3, 6, 5, 20
v_w = ad.parameter(rng.standard_normal((C_out, C_in, K)) * 0.05)
g_w = ad.parameter(np.sqrt((v_w.data**2).sum(axis=(1, 2))))
signal = ad.constant(rng.standard_normal((C_in, T)))

norm = ad.sqrt(ad.tsum(v_w * v_w, axis=(1, 2), keepdims=True) + 1e-12)
w = v_w * ad.reshape(g_w, (C_out, 1, 1)) / norm
y = ad.conv1d(signal, w, stride=1, pad=K // 2)
y = ad.layer_norm(y, ad.parameter(np.ones(C_out)), ad.parameter(np.zeros(C_out)))
y = ad.relu(y)
print(f"conv block: {signal.shape} -> {y.shape} (time length preserved)")

# --- Gumbel-Softmax sampling ---------------------------------------------------
# Soft one-hot columns; lower temperature concentrates the mass.
logits = ad.constant(rng.standard_normal((8, 4)))
for tau in (2.0, 0.5, 0.1):
    sample = ad.gumbel_softmax(logits, tau=tau, rng=make_rng(1), axis=-2)
    print(f"tau={tau:>4}: column sums {np.round(sample.data.sum(axis=0), 6)}, "
          f"max prob {sample.data.max():.3f}")
