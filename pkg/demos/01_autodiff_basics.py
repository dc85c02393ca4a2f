"""
Reverse-mode differentiation on a tape
======================================

Every operation on a taped tensor appends a node; ``backward`` walks the
nodes in reverse and accumulates gradients for the leaves.
"""

import numpy as np

from rnnforecast import autodiff as ad

# A leaf is a trainable value registered on a tape.
tape = ad.Tape()
w = tape.leaf(np.array([[3.0]]))

# loss = w^2, so d loss / dw = 2w = 6
loss = ad.mul(w, w)
grads = ad.backward(loss)
print("d(w^2)/dw at w=3:", grads[w.id].item())

# Matrix expressions work the same way.  Here loss = mean((W x - y)^2).
rng = np.random.default_rng(0)
tape = ad.Tape()
W = tape.leaf(rng.normal(size=(2, 3)))
x = ad.Tensor(rng.normal(size=(3, 1)))
y = np.array([[1.0], [-1.0]])
loss = ad.mse(ad.matmul(W, x), y)
print("analytic dL/dW:\n", ad.backward(loss)[W.id])

# Finite differences confirm the analytic gradient.  ``grad_check`` takes a
# function of named tensors and perturbs every entry in turn.
def loss_fn(P):
    return ad.mse(ad.tanh(ad.matmul(P["W"], x)), y)

result = ad.grad_check(loss_fn, {"W": rng.normal(size=(2, 3))}, epsilon=1e-5)
print(f"max relative error {result.worst:.2e} -> passed: {result.passed}")
