"""LSTM and GRU single-step cells.

Each gate uses one weight matrix acting on the stacked vector ``[h_prev; x]``
(shape ``hidden + input`` rows), so ``W`` is ``hidden x (hidden + input)`` and
every bias is ``hidden x 1``.  Columns index independent samples: a state of
shape ``hidden x B`` steps ``B`` sequences at once.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .autodiff import (ShapeError, Tensor, bias_add, concat_rows, matmul, mul,
                       one_minus, sigmoid, tanh)


@dataclass
class LstmParams:
    W_f: Tensor
    W_i: Tensor
    W_C: Tensor
    W_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_C: Tensor
    b_o: Tensor

    @property
    def hidden(self) -> int:
        return self.W_f.rows

    @property
    def input_size(self) -> int:
        return self.W_f.cols - self.W_f.rows


@dataclass
class GruParams:
    W_z: Tensor
    W_r: Tensor
    W_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @property
    def hidden(self) -> int:
        return self.W_z.rows

    @property
    def input_size(self) -> int:
        return self.W_z.cols - self.W_z.rows


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


@dataclass(frozen=True)
class InitSpec:
    scheme: str = "uniform_fan_in"
    seed: int = 0


LSTM_WEIGHTS = ("W_f", "W_i", "W_C", "W_o")
LSTM_BIASES = ("b_f", "b_i", "b_C", "b_o")
GRU_WEIGHTS = ("W_z", "W_r", "W_h")
GRU_BIASES = ("b_z", "b_r", "b_h")


def _check_step(hidden: int, n_in: int, h: Tensor, x: Tensor):
    if h.rows != hidden:
        raise ShapeError(f"state has {h.rows} rows, cell hidden size is {hidden}")
    if x.rows != n_in:
        raise ShapeError(f"input has {x.rows} rows, cell expects {n_in}")
    if x.cols != h.cols:
        raise ShapeError(f"input batch {x.cols} != state batch {h.cols}")


def _gate(W: Tensor, z: Tensor, b: Tensor) -> Tensor:
    return bias_add(matmul(W, z), b)


def lstm_step(params: LstmParams, state: LstmState, x: Tensor) -> LstmState:
    _check_step(params.hidden, params.input_size, state.h, x)
    if state.c.shape != state.h.shape:
        raise ShapeError(f"cell state {state.c.shape} != hidden state {state.h.shape}")
    hx = concat_rows(state.h, x)
    f = sigmoid(_gate(params.W_f, hx, params.b_f))
    i = sigmoid(_gate(params.W_i, hx, params.b_i))
    c_tilde = tanh(_gate(params.W_C, hx, params.b_C))
    c = mul(f, state.c) + mul(i, c_tilde)
    o = sigmoid(_gate(params.W_o, hx, params.b_o))
    h = mul(o, tanh(c))
    return LstmState(h, c)


def gru_step(params: GruParams, h_prev: Tensor, x: Tensor) -> Tensor:
    """One GRU step; the update gate weights the *previous* state:
    ``h = z * h_prev + (1 - z) * h_tilde``."""
    _check_step(params.hidden, params.input_size, h_prev, x)
    hx = concat_rows(h_prev, x)
    z = sigmoid(_gate(params.W_z, hx, params.b_z))
    r = sigmoid(_gate(params.W_r, hx, params.b_r))
    h_tilde = tanh(_gate(params.W_h, concat_rows(mul(r, h_prev), x), params.b_h))
    return mul(z, h_prev) + mul(one_minus(z), h_tilde)


def zero_state(hidden: int, batch: int = 1) -> Tensor:
    return Tensor(np.zeros((hidden, batch)))


def uniform_fan_in(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    k = 1.0 / np.sqrt(cols)
    return rng.uniform(-k, k, size=(rows, cols))


def init_arrays(spec: InitSpec, family: str, hidden: int, input_size: int) -> dict[str, np.ndarray]:
    """Named parameter arrays for one cell; weights first, in gate order."""
    family = family.upper()
    if family == "LSTM":
        wnames, bnames = LSTM_WEIGHTS, LSTM_BIASES
    elif family == "GRU":
        wnames, bnames = GRU_WEIGHTS, GRU_BIASES
    else:
        raise ValueError(f"unknown cell family {family!r}")
    if hidden < 1 or input_size < 1:
        raise ShapeError("hidden and input sizes must be positive")
    rng = np.random.default_rng(spec.seed)
    fan_in = hidden + input_size
    out = {}
    for name in wnames:
        if spec.scheme == "uniform_fan_in":
            out[name] = uniform_fan_in(rng, hidden, fan_in)
        elif spec.scheme == "zeros":
            out[name] = np.zeros((hidden, fan_in))
        else:
            raise ValueError(f"unknown init scheme {spec.scheme!r}")
    for name in bnames:
        out[name] = np.zeros((hidden, 1))
    return out


def init_params(spec: InitSpec, family: str, hidden: int, input_size: int) -> LstmParams | GruParams:
    arrays = init_arrays(spec, family, hidden, input_size)
    return cell_params(family, {k: Tensor(v) for k, v in arrays.items()})


def cell_params(family: str, tensors: dict) -> LstmParams | GruParams:
    """Build a params record from a mapping that holds (at least) its fields."""
    cls = LstmParams if family.upper() == "LSTM" else GruParams
    return cls(**{f.name: tensors[f.name] for f in fields(cls)})
