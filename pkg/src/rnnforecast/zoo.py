"""The eleven benchmarked forecasters behind one interface.

A :class:`ForecastModel` is a :class:`ModelSpec` plus a flat dict of named
float64 arrays.  Forward passes take a batch of windows shaped
``[batch, window, features]`` and return predictions as a ``[steps x batch]``
tensor (``steps`` is 1 for next-step models, the decoder length for
Seq2Seq).  Passing tape leaves instead of constants makes the same code
differentiable.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cells import (InitSpec, LstmParams, LstmState, cell_params,
                    gru_step, init_arrays, lstm_step, uniform_fan_in)


class ConfigError(ValueError):
    pass


FAMILIES = ("LSTM", "GRU", "Attention")
VARIANTS = ("Plain", "TwoPath", "Seq2Seq", "Bidirectional", "BidirectionalSeq2Seq", "NotApplicable")
FEATURE_SETS = {"close": ("close",), "ohlcv": ("open", "high", "low", "close", "volume")}

_SUFFIX = {
    "Plain": "",
    "TwoPath": "-2Path",
    "Seq2Seq": "-Seq2Seq",
    "Bidirectional": "-Bidirectional",
    "BidirectionalSeq2Seq": "-Bidirectional-Seq2Seq",
}

# canonical report order
MODEL_NAMES = (
    "LSTM", "LSTM-2Path", "LSTM-Seq2Seq", "LSTM-Bidirectional", "LSTM-Bidirectional-Seq2Seq",
    "GRU", "GRU-2Path", "GRU-Seq2Seq", "GRU-Bidirectional", "GRU-Bidirectional-Seq2Seq",
    "Attention",
)


@dataclass(frozen=True)
class ModelSpec:
    family: str = "LSTM"
    variant: str = "Plain"
    hidden: int = 128
    layers: int = 1
    window: int = 30
    horizon: int = 30
    heads: int = 4
    features: str = "close"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if (self.family == "Attention") != (self.variant == "NotApplicable"):
            raise ConfigError("variant NotApplicable goes with family Attention and only with it")
        for name in ("hidden", "window", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.layers != 1:
            raise ConfigError("only single-layer models are supported")
        if self.features not in FEATURE_SETS:
            raise ConfigError(f"unknown feature set {self.features!r}")
        if self.family == "Attention":
            if self.heads < 1 or self.hidden % self.heads:
                raise ConfigError(f"heads={self.heads} does not divide d_model={self.hidden}")
            if self.hidden % 2:
                raise ConfigError("d_model must be even for sinusoidal positional encodings")

    @property
    def name(self) -> str:
        if self.family == "Attention":
            return "Attention"
        return self.family + _SUFFIX[self.variant]

    @property
    def input_size(self) -> int:
        return len(FEATURE_SETS[self.features])

    @property
    def close_index(self) -> int:
        return FEATURE_SETS[self.features].index("close")

    @property
    def is_seq2seq(self) -> bool:
        return self.variant in ("Seq2Seq", "BidirectionalSeq2Seq")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def spec_for(name: str, **overrides) -> ModelSpec:
    """ModelSpec for a report name such as ``"GRU-Bidirectional-Seq2Seq"``."""
    if name == "Attention":
        return ModelSpec(family="Attention", variant="NotApplicable", **overrides)
    family, _, rest = name.partition("-")
    suffix = "-" + rest if rest else ""
    for variant, sfx in _SUFFIX.items():
        if sfx == suffix and family in ("LSTM", "GRU"):
            return ModelSpec(family=family, variant=variant, **overrides)
    raise ConfigError(f"unknown model name {name!r}")


@dataclass
class ForecastModel:
    spec: ModelSpec
    params: dict[str, np.ndarray]

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def constants(self) -> dict[str, Tensor]:
        return {k: Tensor(v) for k, v in self.params.items()}

    def predict(self, window) -> float:
        return forward(self, window)


# ------------------------------------------------------------------- build

def _component_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _cell_block(prefix: str, spec: ModelSpec, index: int, input_size: int) -> dict:
    arrays = init_arrays(InitSpec(seed=_component_seed(spec.seed, index)),
                         spec.family, spec.hidden, input_size)
    return {prefix + k: v for k, v in arrays.items()}


def _affine_block(prefix: str, seed: int, out_dim: int, in_dim: int, *, row_major=False) -> dict:
    rng = np.random.default_rng(seed)
    if row_major:
        # y = x @ W + b with W [in x out]
        w = uniform_fan_in(rng, out_dim, in_dim).T.copy()
        return {prefix + "W": w, prefix + "b": np.zeros((1, out_dim))}
    return {prefix + "W": uniform_fan_in(rng, out_dim, in_dim), prefix + "b": np.zeros((out_dim, 1))}


def build(spec: ModelSpec) -> ForecastModel:
    h, n_in = spec.hidden, spec.input_size
    p: dict[str, np.ndarray] = {}
    seed = lambda i: _component_seed(spec.seed, i)  # noqa: E731
    if spec.family == "Attention":
        d = h
        p.update(_affine_block("in.", seed(0), d, n_in, row_major=True))
        for i, nm in enumerate("qkvo"):
            blk = _affine_block("", seed(1 + i), d, d, row_major=True)
            p[f"attn.W_{nm}"] = blk["W"]
            # a key bias only shifts each score row by a constant, which softmax cancels
            if nm != "k":
                p[f"attn.b_{nm}"] = blk["b"]
        p["ln1.g"], p["ln1.b"] = np.ones((1, d)), np.zeros((1, d))
        p.update(_affine_block("ffn1.", seed(5), 2 * d, d, row_major=True))
        p.update(_affine_block("ffn2.", seed(6), d, 2 * d, row_major=True))
        p["ln2.g"], p["ln2.b"] = np.ones((1, d)), np.zeros((1, d))
        p.update(_affine_block("head.", seed(7), 1, d, row_major=True))
        return ForecastModel(spec, p)

    v = spec.variant
    if v == "Plain":
        p.update(_cell_block("cell.", spec, 0, n_in))
        head_in = h
    elif v == "TwoPath":
        p.update(_cell_block("path1.", spec, 0, n_in))
        p.update(_cell_block("path2.", spec, 1, n_in))
        head_in = 2 * h
    elif v == "Bidirectional":
        p.update(_cell_block("fwd.", spec, 0, n_in))
        p.update(_cell_block("bwd.", spec, 1, n_in))
        head_in = 2 * h
    elif v == "Seq2Seq":
        p.update(_cell_block("enc.", spec, 0, n_in))
        p.update(_cell_block("dec.", spec, 2, 1))
        head_in = h
    else:  # BidirectionalSeq2Seq
        p.update(_cell_block("fwd.", spec, 0, n_in))
        p.update(_cell_block("bwd.", spec, 1, n_in))
        p.update(_affine_block("proj_h.", seed(3), h, 2 * h))
        if spec.family == "LSTM":
            p.update(_affine_block("proj_c.", seed(4), h, 2 * h))
        p.update(_cell_block("dec.", spec, 2, 1))
        head_in = h
    p.update(_affine_block("head.", seed(7), 1, head_in))
    return ForecastModel(spec, p)


def count_params(spec: ModelSpec) -> int:
    """Parameter count from shapes alone (no arrays are allocated)."""
    h, n = spec.hidden, spec.input_size
    if spec.family == "Attention":
        d = h
        return (n * d + d) + (4 * d * d + 3 * d) + 2 * d + (d * 2 * d + 2 * d) + (2 * d * d + d) + 2 * d + (d + 1)
    gates = 4 if spec.family == "LSTM" else 3
    cell = lambda n_in: gates * (h * (h + n_in) + h)  # noqa: E731
    v = spec.variant
    if v == "Plain":
        return cell(n) + h + 1
    if v in ("TwoPath", "Bidirectional"):
        return 2 * cell(n) + 2 * h + 1
    if v == "Seq2Seq":
        return cell(n) + cell(1) + h + 1
    projections = 2 if spec.family == "LSTM" else 1
    return 2 * cell(n) + projections * (2 * h * h + h) + cell(1) + h + 1


# ----------------------------------------------------------------- helpers

def _cell(spec: ModelSpec, P: Mapping[str, Tensor], prefix: str):
    n = len(prefix)
    return cell_params(spec.family, {k[n:]: t for k, t in P.items() if k.startswith(prefix)})


def _step(cell, state, x: Tensor):
    if isinstance(cell, LstmParams):
        return lstm_step(cell, state, x)
    return gru_step(cell, state, x)


def _zero_state(cell, batch: int):
    z = np.zeros((cell.hidden, batch))
    if isinstance(cell, LstmParams):
        return LstmState(Tensor(z), Tensor(z.copy()))
    return Tensor(z)


def _hidden(state) -> Tensor:
    return state.h if isinstance(state, LstmState) else state


def _inputs(X: np.ndarray) -> list[Tensor]:
    # [B, W, F] -> W column-batched tensors of shape [F x B]
    return [Tensor(X[:, t, :].T) for t in range(X.shape[1])]


def unroll(cell, xs: list[Tensor], reverse: bool = False):
    """Run ``cell`` over ``xs`` from a zero state; returns the final state."""
    state = _zero_state(cell, xs[0].cols)
    for x in (reversed(xs) if reverse else xs):
        state = _step(cell, state, x)
    return state


def _head(P, h: Tensor) -> Tensor:
    return ad.bias_add(ad.matmul(P["head.W"], h), P["head.b"])


def as_batch(window, spec: ModelSpec) -> np.ndarray:
    """Coerce one window ([W] or [W x F]) or a batch ([B, W, F]) to [B, W, F]."""
    X = np.asarray(window.data if isinstance(window, Tensor) else window, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1, 1)
    elif X.ndim == 2:
        if spec.input_size == 1 and X.shape[1] != 1 and X.shape[0] == 1:
            X = X.reshape(1, -1, 1)
        else:
            X = X.reshape(1, *X.shape)
    if X.shape[1] != spec.window:
        raise ad.ShapeError(f"window length {X.shape[1]} != model window {spec.window}")
    if X.shape[2] != spec.input_size:
        raise ad.ShapeError(f"window has {X.shape[2]} features, model expects {spec.input_size}")
    return X


# ---------------------------------------------------------- forward passes

def _encode_plain(spec, P, X):
    return _hidden(unroll(_cell(spec, P, "cell."), _inputs(X)))


def _encode_2path(spec, P, X):
    xs = _inputs(X)
    h1 = _hidden(unroll(_cell(spec, P, "path1."), xs))
    h2 = _hidden(unroll(_cell(spec, P, "path2."), xs))
    return ad.concat_rows(h1, h2)


def bidirectional_states(spec: ModelSpec, P, X: np.ndarray):
    """Final (forward, backward) states of a bidirectional encoder."""
    xs = _inputs(X)
    fwd = unroll(_cell(spec, P, "fwd."), xs)
    bwd = unroll(_cell(spec, P, "bwd."), xs, reverse=True)
    return fwd, bwd


def _decode(spec, P, state, last: Tensor, steps: int, teacher: np.ndarray | None) -> Tensor:
    dec = _cell(spec, P, "dec.")
    inp = last
    outs = []
    for k in range(steps):
        state = _step(dec, state, inp)
        y = _head(P, _hidden(state))
        outs.append(y)
        inp = Tensor(teacher[:, k].reshape(1, -1)) if teacher is not None else y
    return ad.concat_many(outs, axis=-2)


def _check_teacher(teacher, batch: int, steps: int):
    if teacher is None:
        return None
    t = np.asarray(teacher, dtype=np.float64).reshape(batch, -1)
    if t.shape[1] != steps:
        raise ad.ContractError(f"teacher has {t.shape[1]} steps, decoder horizon is {steps}")
    return t


def run(model: ForecastModel, P: Mapping[str, Tensor], X: np.ndarray,
        steps: int | None = None, teacher=None) -> Tensor:
    """Batched forward pass.  Returns ``[steps x B]`` predictions.

    Non-Seq2Seq models always return one step.  Seq2Seq models decode
    ``steps`` (default ``spec.horizon``) values, teacher-forced when
    ``teacher`` ([B x steps]) is given.
    """
    spec = model.spec
    if spec.family == "Attention":
        return attention_forward(spec, P, X)
    v = spec.variant
    if v == "Plain":
        return _head(P, _encode_plain(spec, P, X))
    if v == "TwoPath":
        return _head(P, _encode_2path(spec, P, X))
    if v == "Bidirectional":
        fwd, bwd = bidirectional_states(spec, P, X)
        return _head(P, ad.concat_rows(_hidden(fwd), _hidden(bwd)))

    steps = spec.horizon if steps is None else steps
    teacher = _check_teacher(teacher, X.shape[0], steps)
    last = Tensor(X[:, -1, spec.close_index].reshape(1, -1))
    if v == "Seq2Seq":
        state = unroll(_cell(spec, P, "enc."), _inputs(X))
    else:
        fwd, bwd = bidirectional_states(spec, P, X)
        h = ad.tanh(ad.bias_add(ad.matmul(P["proj_h.W"], ad.concat_rows(_hidden(fwd), _hidden(bwd))),
                                P["proj_h.b"]))
        if spec.family == "LSTM":
            c = ad.bias_add(ad.matmul(P["proj_c.W"], ad.concat_rows(fwd.c, bwd.c)), P["proj_c.b"])
            state = LstmState(h, c)
        else:
            state = h
    return _decode(spec, P, state, last, steps, teacher)


def forward(model: ForecastModel, window) -> float:
    """Next-step scaled prediction for one window (first decoder step for Seq2Seq)."""
    X = as_batch(window, model.spec)
    return float(run(model, model.constants(), X, steps=1).data[0, 0])


def forward_plain(model: ForecastModel, window) -> float:
    _expect(model, ("Plain",))
    return forward(model, window)


def forward_2path(model: ForecastModel, window) -> float:
    _expect(model, ("TwoPath",))
    return forward(model, window)


def forward_bidirectional(model: ForecastModel, window) -> float:
    _expect(model, ("Bidirectional",))
    return forward(model, window)


def forward_seq2seq(model: ForecastModel, window, horizon: int | None = None, teacher=None) -> np.ndarray:
    _expect(model, ("Seq2Seq",))
    X = as_batch(window, model.spec)
    return run(model, model.constants(), X, steps=horizon, teacher=teacher).data[:, 0].copy()


def forward_bi_seq2seq(model: ForecastModel, window, horizon: int | None = None, teacher=None) -> np.ndarray:
    _expect(model, ("BidirectionalSeq2Seq",))
    X = as_batch(window, model.spec)
    return run(model, model.constants(), X, steps=horizon, teacher=teacher).data[:, 0].copy()


def _expect(model: ForecastModel, variants: tuple):
    if model.spec.variant not in variants:
        raise ConfigError(f"{model.spec.name} is not a {'/'.join(variants)} model")


# ---------------------------------------------------------------- attention

def positional_encoding(window: int, d_model: int) -> np.ndarray:
    if d_model % 2:
        raise ConfigError(f"d_model must be even, got {d_model}")
    pos = np.arange(window, dtype=np.float64)[:, None]
    rate = np.power(10000.0, np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    pe = np.empty((window, d_model))
    pe[:, 0::2] = np.sin(pos / rate)
    pe[:, 1::2] = np.cos(pos / rate)
    return pe


@dataclass
class AttentionParams:
    W_in: Tensor
    b_in: Tensor
    W_q: Tensor
    b_q: Tensor
    W_k: Tensor
    W_v: Tensor
    b_v: Tensor
    W_o: Tensor
    b_o: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    W_ff1: Tensor
    b_ff1: Tensor
    W_ff2: Tensor
    b_ff2: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    W_head: Tensor
    b_head: Tensor
    heads: int
    pe: np.ndarray

    @property
    def d_model(self) -> int:
        return self.W_q.rows

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @classmethod
    def from_model(cls, model: ForecastModel, P: Mapping[str, Tensor] | None = None) -> "AttentionParams":
        return _attention_params(model.spec, model.constants() if P is None else P)


def _attention_params(spec: ModelSpec, P) -> AttentionParams:
    return AttentionParams(
        P["in.W"], P["in.b"],
        P["attn.W_q"], P["attn.b_q"], P["attn.W_k"],
        P["attn.W_v"], P["attn.b_v"], P["attn.W_o"], P["attn.b_o"],
        P["ln1.g"], P["ln1.b"], P["ffn1.W"], P["ffn1.b"], P["ffn2.W"], P["ffn2.b"],
        P["ln2.g"], P["ln2.b"], P["head.W"], P["head.b"],
        heads=spec.heads, pe=positional_encoding(spec.window, spec.hidden),
    )


def _dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return ad.bias_add(ad.matmul(x, W), b)


def multi_head_attention(ap: AttentionParams, H: Tensor) -> tuple[Tensor, list[np.ndarray]]:
    """Self-attention over the position axis of ``H`` ([..., W, d]).

    Returns the output projection and each head's weight matrix.
    """
    Q, K, V = _dense(H, ap.W_q, ap.b_q), ad.matmul(H, ap.W_k), _dense(H, ap.W_v, ap.b_v)
    dk = ap.d_k
    outs, weights = [], []
    for i in range(ap.heads):
        lo, hi = i * dk, (i + 1) * dk
        q, k, v = ad.slice_cols(Q, lo, hi), ad.slice_cols(K, lo, hi), ad.slice_cols(V, lo, hi)
        scores = ad.scale_shift(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(dk))
        A = ad.softmax_rows(scores)
        weights.append(A.data)
        outs.append(ad.matmul(A, v))
    joined = outs[0] if len(outs) == 1 else ad.concat_many(outs, axis=-1)
    return _dense(joined, ap.W_o, ap.b_o), weights


def encoder_block(ap: AttentionParams, X: np.ndarray, use_pe: bool = True):
    """Input projection, positional encoding and one encoder block.

    ``X`` is ``[B, W, F]``.  Returns per-position outputs ``[B, W, d]`` and
    the attention weights of every head.
    """
    H0 = _dense(Tensor(X), ap.W_in, ap.b_in)
    if use_pe:
        H0 = ad.bias_add(H0, Tensor(ap.pe[: X.shape[1]]))
    attn, weights = multi_head_attention(ap, H0)
    H1 = ad.layer_norm(H0 + attn, ap.ln1_g, ap.ln1_b)
    ff = _dense(ad.relu(_dense(H1, ap.W_ff1, ap.b_ff1)), ap.W_ff2, ap.b_ff2)
    H2 = ad.layer_norm(H1 + ff, ap.ln2_g, ap.ln2_b)
    return H2, weights


def attention_forward(spec: ModelSpec, P, X: np.ndarray, use_pe: bool = True) -> Tensor:
    ap = _attention_params(spec, P)
    H2, _ = encoder_block(ap, X, use_pe)
    y = _dense(ad.take_row(H2, -1), ap.W_head, ap.b_head)  # [B x 1]
    return ad.transpose(y)


def attention_encode(params: AttentionParams, window, use_pe: bool = True) -> float:
    X = np.asarray(window, dtype=np.float64)
    X = X.reshape(1, X.shape[0], -1)
    if X.shape[1] > params.pe.shape[0]:
        raise ad.ShapeError(f"window length {X.shape[1]} exceeds model window {params.pe.shape[0]}")
    H2, _ = encoder_block(params, X, use_pe)
    y = _dense(ad.take_row(H2, -1), params.W_head, params.b_head)
    return float(y.data[0, 0])


# ------------------------------------------------------------- forecasting

def predict_recursive(model: ForecastModel, seed_window, horizon: int) -> np.ndarray:
    """``horizon`` scaled close forecasts starting after ``seed_window``.

    Seq2Seq models decode once; other models slide the window, appending
    each prediction.  With OHLCV inputs the appended row repeats the last
    row's non-close features.
    """
    spec = model.spec
    if horizon == 0:
        return np.zeros(0)
    X = as_batch(seed_window, spec).copy()
    P = model.constants()
    if spec.is_seq2seq:
        return run(model, P, X, steps=horizon).data[:, 0].copy()
    out = np.empty(horizon)
    for k in range(horizon):
        y = float(run(model, P, X).data[0, 0])
        out[k] = y
        row = X[:, -1:, :].copy()
        row[0, 0, spec.close_index] = y
        X = np.concatenate([X[:, 1:, :], row], axis=1)
    return out


def batch_loss(model: ForecastModel, P: Mapping[str, Tensor], X: np.ndarray, Y: np.ndarray) -> Tensor:
    """Mean squared error of a batch.  ``Y`` is ``[B x steps]``; Seq2Seq is
    teacher-forced over all steps, other models use the first column."""
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], -1)
    if model.spec.is_seq2seq:
        pred = run(model, P, X, steps=Y.shape[1], teacher=Y)
        return ad.mse(pred, Y.T)
    pred = run(model, P, X)
    return ad.mse(pred, Y[:, :1].T)
