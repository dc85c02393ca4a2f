"""Dense float64 tensors with a tape for reverse-mode differentiation.

A :class:`Tensor` either lives on a :class:`Tape` (it was created by
``Tape.leaf`` or computed from tensors that live on one) or is a free
constant.  Operations whose inputs are all constants skip recording, so the
same model code serves training (taped) and inference (untaped).

Tensors are 2-D (rows x cols).  Attention code additionally uses a leading
batch axis; every op below works on the trailing two axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    pass


class ContractError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class TapeNode:
    __slots__ = ("kind", "inputs", "ctx")

    def __init__(self, kind: str, inputs: tuple, ctx: tuple = ()):
        self.kind = kind
        self.inputs = inputs
        self.ctx = ctx

    def __repr__(self):
        return f"TapeNode({self.kind!r}, inputs={self.inputs})"


class Tape:
    """Append-only record of one forward pass.  Not thread safe."""

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> "Tensor":
        t = Tensor(value)
        t.tape = self
        t.id = len(self.nodes)
        self.nodes.append(TapeNode("leaf", (), (t.data.shape,)))
        return t

    def record(self, kind: str, inputs: tuple, ctx: tuple, value: np.ndarray) -> "Tensor":
        """Append a node.  Untaped operands get a fresh constant node on this
        tape each time; the operand itself is left untouched so it can be
        reused on other tapes."""
        ids = []
        for x in inputs:
            if x.tape is None:
                ids.append(len(self.nodes))
                self.nodes.append(TapeNode("const", ()))
            else:
                ids.append(x.id)
        t = Tensor.__new__(Tensor)
        t.data = value
        t.tape = self
        t.id = len(self.nodes)
        self.nodes.append(TapeNode(kind, tuple(ids), ctx))
        return t


class Tensor:
    __slots__ = ("data", "tape", "id")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        self.data = arr
        self.tape: Tape | None = None
        self.id: int | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[-2]

    @property
    def cols(self) -> int:
        return self.data.shape[-1]

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        where = "const" if self.tape is None else f"node {self.id}"
        return f"Tensor({self.data.tolist()}, {where})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError("operands belong to different tapes")
            tape = t.tape
    return tape


def _emit(kind: str, inputs: tuple, ctx: tuple, value: np.ndarray) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        t = Tensor.__new__(Tensor)
        t.data = value
        t.tape = None
        t.id = None
        return t
    return tape.record(kind, inputs, ctx, value)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------- primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _emit("matmul", (a, b), (a.data, b.data), np.matmul(a.data, b.data))


def _matmul_back(g, node):
    a, b = node.ctx
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    gb = np.matmul(np.swapaxes(a, -1, -2), g)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def _same_shape(name: str, a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{name}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", (a, b), (), a.data + b.data)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", (a, b), (), a.data - b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _emit("mul", (a, b), (a.data, b.data), a.data * b.data)


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


def bias_add(a: Tensor, b: Tensor) -> Tensor:
    """``a + b`` with ``b`` broadcast along axes where it has extent 1."""
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"bias_add: {b.shape} does not broadcast to {a.shape}") from None
    if out.shape != a.data.shape:
        raise ShapeError(f"bias_add: {b.shape} does not broadcast to {a.shape}")
    return _emit("bias_add", (a, b), (b.data.shape,), out)


def bias_mul(a: Tensor, b: Tensor) -> Tensor:
    """``a * b`` with ``b`` broadcast like :func:`bias_add`."""
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"bias_mul: {b.shape} does not broadcast to {a.shape}") from None
    if out.shape != a.data.shape:
        raise ShapeError(f"bias_mul: {b.shape} does not broadcast to {a.shape}")
    return _emit("bias_mul", (a, b), (a.data, b.data), out)


def scale_shift(a: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """``scale * a + shift`` for python scalars."""
    return _emit("scale_shift", (a,), (scale,), scale * a.data + shift)


def one_minus(a: Tensor) -> Tensor:
    return _emit("scale_shift", (a,), (-1.0,), 1.0 - a.data)


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    return _emit("sigmoid", (a,), (y,), y)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit("tanh", (a,), (y,), y)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit("relu", (a,), (mask,), np.where(mask, a.data, 0.0))


def activation(kind: str, a: Tensor) -> Tensor:
    try:
        fn = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}[kind]
    except KeyError:
        raise ContractError(f"unknown activation {kind!r}") from None
    return fn(a)


def softmax_rows(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _emit("softmax", (a,), (y,), y)


def _concat(a: Tensor, b: Tensor, axis: int, name: str) -> Tensor:
    sa, sb = list(a.data.shape), list(b.data.shape)
    if len(sa) != len(sb):
        raise ShapeError(f"{name}: rank mismatch {a.shape} vs {b.shape}")
    ax = axis % len(sa)
    sa[ax] = sb[ax] = 0
    if sa != sb:
        raise ShapeError(f"{name}: cannot join {a.shape} and {b.shape}")
    out = np.concatenate([a.data, b.data], axis=axis)
    return _emit("concat", (a, b), (axis, a.data.shape[axis]), out)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    return _concat(a, b, -1, "concat_cols")


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    return _concat(a, b, -2, "concat_rows")


def concat_many(tensors: list, axis: int = -1) -> Tensor:
    """Join any number of tensors along ``axis`` in one tape node."""
    if not tensors:
        raise ShapeError("concat_many: nothing to join")
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat_many: {exc}") from None
    cuts = np.cumsum([a.shape[axis] for a in arrays])[:-1]
    return _emit("concat_many", tuple(tensors), (axis, cuts), out)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    n = a.data.shape[-1]
    if not 0 <= start <= stop <= n:
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of range for {a.shape}")
    return _emit("slice_cols", (a,), (a.data.shape, start, stop), a.data[..., start:stop])


def transpose(a: Tensor) -> Tensor:
    return _emit("transpose", (a,), (), np.swapaxes(a.data, -1, -2))


def take_row(a: Tensor, index: int) -> Tensor:
    """Row ``index`` of each matrix; a batched [B, n, d] input gives [B, d]."""
    out = a.data[..., index, :]
    if out.ndim == 1:
        out = out.reshape(1, -1)
    return _emit("take_row", (a,), (a.data.shape, index), out)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gain`` and ``bias`` [1 x d]."""
    d = a.data.shape[-1]
    if gain.data.shape != (1, d) or bias.data.shape != (1, d):
        raise ShapeError(f"layer_norm: gain/bias must be (1, {d})")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    return _emit("layer_norm", (a, gain, bias), (xhat, inv, gain.data), out)


def sum_all(a: Tensor) -> Tensor:
    return _emit("sum_all", (a,), (a.data.shape,), np.array([[a.data.sum()]]))


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error against a constant target of the same shape."""
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if t.shape != pred.data.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {t.shape}")
    diff = pred.data - t
    return _emit("mse", (pred,), (diff,), np.array([[np.mean(diff * diff)]]))


# ----------------------------------------------------------- backward rules

def _layer_norm_back(g, node):
    xhat, inv, gain = node.ctx
    d = xhat.shape[-1]
    gx = g * gain
    ga = inv / d * (d * gx - gx.sum(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
    ggain = _unbroadcast(g * xhat, gain.shape)
    gbias = _unbroadcast(g, gain.shape)
    return ga, ggain, gbias


def _concat_back(g, node):
    axis, na = node.ctx
    ga, gb = np.split(g, [na], axis=axis)
    return ga, gb


def _slice_back(g, node):
    shape, start, stop = node.ctx
    out = np.zeros(shape)
    out[..., start:stop] = g
    return (out,)


def _take_row_back(g, node):
    shape, index = node.ctx
    out = np.zeros(shape)
    out[..., index, :] = g.reshape(out[..., index, :].shape)
    return (out,)


def _softmax_back(g, node):
    (y,) = node.ctx
    return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)


BACKWARD: dict[str, Callable] = {
    "matmul": _matmul_back,
    "add": lambda g, n: (g, g),
    "sub": lambda g, n: (g, -g),
    "mul": lambda g, n: (g * n.ctx[1], g * n.ctx[0]),
    "bias_add": lambda g, n: (g, _unbroadcast(g, n.ctx[0])),
    "bias_mul": lambda g, n: (g * n.ctx[1], _unbroadcast(g * n.ctx[0], n.ctx[1].shape)),
    "scale_shift": lambda g, n: (g * n.ctx[0],),
    "sigmoid": lambda g, n: (g * n.ctx[0] * (1.0 - n.ctx[0]),),
    "tanh": lambda g, n: (g * (1.0 - n.ctx[0] * n.ctx[0]),),
    "relu": lambda g, n: (np.where(n.ctx[0], g, 0.0),),
    "softmax": _softmax_back,
    "concat": _concat_back,
    "concat_many": lambda g, n: tuple(np.split(g, n.ctx[1], axis=n.ctx[0])),
    "slice_cols": _slice_back,
    "transpose": lambda g, n: (np.swapaxes(g, -1, -2),),
    "take_row": _take_row_back,
    "layer_norm": _layer_norm_back,
    "sum_all": lambda g, n: (np.full(n.ctx[0], g.item()),),
    "mse": lambda g, n: (g.item() * 2.0 / n.ctx[0].size * n.ctx[0],),
}


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a 1x1 ``loss`` for every leaf on its tape, keyed by node id.

    Leaves the loss does not depend on get zero gradients.
    """
    if loss.data.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    tape = loss.tape
    if tape is None:
        raise ContractError("loss is not on a tape")
    nodes = tape.nodes
    grads: list = [None] * len(nodes)
    grads[loss.id] = np.ones((1, 1))
    for i in range(loss.id, -1, -1):
        g = grads[i]
        if g is None:
            continue
        node = nodes[i]
        if not node.inputs:
            continue
        for j, gj in zip(node.inputs, BACKWARD[node.kind](g, node)):
            if grads[j] is None:
                grads[j] = gj
            else:
                grads[j] = grads[j] + gj
        grads[i] = None
    return {
        i: grads[i] if grads[i] is not None else np.zeros(node.ctx[0])
        for i, node in enumerate(nodes) if node.kind == "leaf"
    }


# -------------------------------------------------------- gradient checking

@dataclass
class GradCheckResult:
    max_rel_error: dict[str, float]
    epsilon: float
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.worst < self.tolerance

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def param_grads(loss_fn: Callable[[dict], Tensor],
                params: Mapping[str, np.ndarray]) -> tuple[float, dict[str, np.ndarray]]:
    """Run ``loss_fn`` on a fresh tape and return (loss, grads by parameter name)."""
    tape = Tape()
    leaves = {name: tape.leaf(value) for name, value in params.items()}
    loss = loss_fn(leaves)
    grads = backward(loss)
    return loss.item(), {name: grads[t.id] for name, t in leaves.items()}


def grad_check(loss_fn: Callable[[dict], Tensor], params: Mapping[str, np.ndarray],
               epsilon: float = 1e-5, tolerance: float = 1e-4) -> GradCheckResult:
    """Compare tape gradients with central differences, entry by entry.

    ``loss_fn`` maps a dict of parameter tensors to a 1x1 loss tensor and must
    be deterministic.  The relative error of one entry is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not epsilon > 0:
        raise ContractError("epsilon must be positive")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = param_grads(loss_fn, params)

    def value() -> float:
        v = loss_fn({k: Tensor(p) for k, p in params.items()}).item()
        if not np.isfinite(v):
            raise NumericError("loss evaluated to a non-finite value during grad check")
        return v

    errors = {}
    for name, p in params.items():
        flat = p.reshape(-1)
        worst = 0.0
        ga = analytic[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = value()
            flat[k] = orig - epsilon
            down = value()
            flat[k] = orig
            num = (up - down) / (2.0 * epsilon)
            a = ga[k]
            rel = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, rel)
        errors[name] = worst
    return GradCheckResult(errors, epsilon, tolerance)
