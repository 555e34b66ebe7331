"""A tour of the tensor autodiff engine underneath everything else.

Builds a few small expressions, checks a gradient against finite
differences by hand, then fits a two-layer regression with nothing but
the engine's ops and plain gradient descent.
"""

import numpy as np

import fairint.autodiff as ad
from fairint.autodiff import Tensor, backward

# -- gradients of a small expression -------------------------------------------

x = Tensor(np.array([[0.5, -1.0], [2.0, 0.25]]), grad_tracked=True)
w = Tensor(np.array([[1.5], [-0.5]]), grad_tracked=True)

loss = ad.mean_all(ad.relu(x @ w) * ad.relu(x @ w))
backward(loss)

print("loss                ", loss.item())
print("dloss/dw (backward) ", w.grad.reshape(-1))

h = 1e-6
fd = np.zeros(2)
for i in range(2):
    for sign in (+1, -1):
        w_shift = w.values.copy()
        w_shift[i, 0] += sign * h
        shifted = ad.mean_all(ad.relu(x @ Tensor(w_shift)) * ad.relu(x @ Tensor(w_shift)))
        fd[i] += sign * shifted.item() / (2 * h)
print("dloss/dw (numeric)  ", fd)

# -- a tiny network trained by hand ---------------------------------------------

rng = np.random.default_rng(0)
inputs = rng.uniform(-2, 2, (64, 1))
targets = np.sin(inputs) + 0.05 * rng.standard_normal((64, 1))

w1 = Tensor(rng.standard_normal((1, 16)) * 0.5, grad_tracked=True)
b1 = Tensor(np.zeros(16), grad_tracked=True)
w2 = Tensor(rng.standard_normal((16, 1)) * 0.5, grad_tracked=True)
b2 = Tensor(np.zeros(1), grad_tracked=True)
params = [w1, b1, w2, b2]

print("\nfitting y = sin(x) with gradient descent on mean squared error")
for step in range(301):
    hidden = ad.relu(Tensor(inputs) @ w1 + b1)
    out = hidden @ w2 + b2
    err = out - Tensor(targets)
    mse = ad.mean_all(err * err)
    for p in params:
        p.grad = None
    backward(mse)
    for p in params:
        p.values = p.values - 0.05 * p.grad
    if step % 100 == 0:
        print(f"  step {step:3d}  mse {mse.item():.4f}")
