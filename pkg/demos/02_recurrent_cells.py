"""
LSTM and GRU steps
==================

One step of each cell, with the column-batched layout used throughout:
states are ``[hidden x batch]`` and inputs ``[features x batch]``.
"""

import numpy as np

from rnnforecast.autodiff import Tensor
from rnnforecast.cells import (InitSpec, LstmState, cell_params, gru_step, init_arrays, init_params,
                               lstm_step)

hidden, n_in, batch = 4, 1, 3
rng = np.random.default_rng(1)

lstm = init_params(InitSpec(seed=0), "LSTM", hidden, n_in)
gru = init_params(InitSpec(seed=0), "GRU", hidden, n_in)
print("LSTM forget-gate weights:", lstm.W_f.shape, " GRU candidate weights:", gru.W_h.shape)

x = Tensor(rng.uniform(0, 1, (n_in, batch)))
state = LstmState(Tensor(np.zeros((hidden, batch))), Tensor(np.zeros((hidden, batch))))
state = lstm_step(lstm, state, x)
print("LSTM h after one step:\n", state.h.data.round(4))

h = gru_step(gru, Tensor(np.zeros((hidden, batch))), x)
print("GRU h after one step:\n", h.data.round(4))

# Saturating the forget gate open and the input gate shut preserves the
# cell state exactly: the LSTM's long-term memory path.
a = init_arrays(InitSpec(seed=2), "LSTM", hidden, n_in)
a["b_f"][:], a["b_i"][:] = 40.0, -40.0
a["W_f"][:], a["W_i"][:] = 0.0, 0.0
held = cell_params("LSTM", {k: Tensor(v) for k, v in a.items()})
c0 = rng.normal(size=(hidden, 1))
s = lstm_step(held, LstmState(Tensor(np.zeros((hidden, 1))), Tensor(c0)), Tensor([[5.0]]))
print("cell state preserved:", np.max(np.abs(s.c.data - c0)))
