"""
Attention encoder
=================

The attention forecaster projects each day to ``d_model`` features, adds
sinusoidal position vectors and runs one multi-head encoder block.  The
prediction is read from the last position.
"""

import numpy as np

from rnnforecast import zoo

spec = zoo.spec_for("Attention", hidden=16, heads=4, window=8)
model = zoo.build(spec)
params = zoo.AttentionParams.from_model(model)
print(f"d_model={params.d_model}, heads={params.heads}, d_k={params.d_k}, parameters={model.n_params}")

# Position vectors: sin on even columns, cos on odd ones.
pe = zoo.positional_encoding(8, 16)
print("first two position vectors:\n", pe[:2].round(3))

window = np.linspace(0.2, 0.8, 8) + 0.05 * np.sin(np.arange(8))
H, weights = zoo.encoder_block(params, window.reshape(1, 8, 1))
print("head 0 attention weights (rows sum to 1):\n", weights[0][0].round(3))
print("row sums:", weights[0][0].sum(axis=1))

# Without position vectors the block cannot tell positions apart:
# permuting the days permutes the outputs in the same way.
perm = np.array([7, 6, 5, 4, 3, 2, 1, 0])
a, _ = zoo.encoder_block(params, window.reshape(1, 8, 1), use_pe=False)
b, _ = zoo.encoder_block(params, window[perm].reshape(1, 8, 1), use_pe=False)
print("equivariance error without positions:", np.abs(b.data - a.data[:, perm]).max())

print("next-step prediction (scaled):", zoo.attention_encode(params, window))
