"""Seeded minibatch training and JSON checkpoints."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from .autodiff import Tape, backward
from .market import WindowSet
from .zoo import ForecastModel, ModelSpec, batch_loss, build

CHECKPOINT_VERSION = "1"


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"loss became {loss} at epoch {epoch}, step {step}")
        self.epoch, self.step, self.loss = epoch, step, loss


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class SpecMismatchError(CheckpointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 1
    seed: int = 0
    gradient_clip_norm: float = 5.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite and non-negative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not self.gradient_clip_norm > 0:
            raise ValueError("gradient_clip_norm must be positive (inf disables clipping)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class TrainRecord:
    epoch_losses: list[float]
    wall_time: float
    checksum: str
    steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def params_checksum(params: Mapping[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    return h.hexdigest()


# --------------------------------------------------------------- optimizers

class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict):
        for k, g in grads.items():
            params[k] = params[k] - self.lr * g


class Adam:
    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m = self.m[k] = self.b1 * m + (1.0 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


def clip_by_global_norm(grads: dict, cap: float) -> tuple[dict, float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``cap``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > cap:
        scale = cap / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


# ----------------------------------------------------------------- training

def loss_and_grads(model: ForecastModel, X: np.ndarray, Y: np.ndarray) -> tuple[float, dict]:
    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in model.params.items()}
    loss = batch_loss(model, leaves, X, Y)
    g = backward(loss)
    return loss.item(), {k: g[t.id] for k, t in leaves.items()}


def train(model: ForecastModel, pairs: WindowSet, config: TrainConfig = TrainConfig()) -> TrainRecord:
    """Minimize MSE over ``pairs`` in place.  Deterministic given the model
    seed, ``config.seed`` and the data."""
    if len(pairs) == 0:
        raise ValueError("no training pairs")
    if pairs.window != model.spec.window:
        raise ValueError(f"pairs use window {pairs.window}, model expects {model.spec.window}")
    if model.spec.is_seq2seq and pairs.targets.shape[1] < model.spec.horizon:
        raise ValueError(f"Seq2Seq model needs {model.spec.horizon}-step targets, "
                         f"pairs have {pairs.targets.shape[1]}")
    X_all, Y_all = pairs.inputs, pairs.targets
    if model.spec.is_seq2seq:
        Y_all = Y_all[:, : model.spec.horizon]
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config)
    n = len(pairs)
    losses = []
    steps = 0
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for step, start in enumerate(range(0, n, config.batch), start=1):
            idx = order[start:start + config.batch]
            loss, grads = loss_and_grads(model, X_all[idx], Y_all[idx])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, step, loss)
            grads, _ = clip_by_global_norm(grads, config.gradient_clip_norm)
            opt.step(model.params, grads)
            total += loss * len(idx)
            steps += 1
        losses.append(total / n)
    return TrainRecord(losses, time.perf_counter() - t0, params_checksum(model.params), steps)


def evaluate_mse(model: ForecastModel, pairs: WindowSet, chunk: int = 256) -> float:
    """Mean squared error over all pairs (teacher-forced for Seq2Seq)."""
    total = 0.0
    P = model.constants()
    Y_all = pairs.targets[:, : model.spec.horizon] if model.spec.is_seq2seq else pairs.targets[:, :1]
    for start in range(0, len(pairs), chunk):
        X = pairs.inputs[start:start + chunk]
        total += batch_loss(model, P, X, Y_all[start:start + chunk]).item() * X.shape[0]
    return total / len(pairs)


# -------------------------------------------------------------- checkpoints

def checkpoint_dict(model: ForecastModel) -> dict:
    return {
        "format": "rnnforecast-checkpoint",
        "format_version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "params": {
            name: {"shape": list(p.shape), "data": [float(x) for x in p.reshape(-1)]}
            for name, p in model.params.items()
        },
    }


def save_checkpoint(model: ForecastModel, path) -> None:
    text = json.dumps(checkpoint_dict(model), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path, expected: ModelSpec | None = None, family: str | None = None) -> ForecastModel:
    """Load a checkpoint; ``expected``/``family`` guard against loading the wrong model."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: not a valid checkpoint ({exc})") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptCheckpointError(f"{path}: missing format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {doc['format_version']!r}, expected {CHECKPOINT_VERSION!r}")
    try:
        spec = ModelSpec.from_dict(doc["spec"])
        raw = doc["params"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"{path}: bad spec or params ({exc})") from None
    if expected is not None and spec != expected:
        raise SpecMismatchError(f"{path}: holds {spec}, expected {expected}")
    if family is not None and spec.family != family:
        raise SpecMismatchError(f"{path}: holds a {spec.family} model, expected {family}")
    template = build(spec).params
    params = {}
    for name, ref in template.items():
        try:
            entry = raw[name]
            arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpointError(f"{path}: parameter {name!r} unreadable ({exc})") from None
        if arr.shape != ref.shape:
            raise CorruptCheckpointError(f"{path}: parameter {name!r} has shape {arr.shape}, "
                                         f"expected {ref.shape}")
        params[name] = arr
    if set(raw) != set(template):
        raise CorruptCheckpointError(f"{path}: unexpected parameters {sorted(set(raw) - set(template))}")
    return ForecastModel(spec, params)


__all__ = [
    "TrainConfig", "TrainRecord", "train", "evaluate_mse", "save_checkpoint", "load_checkpoint",
    "DivergenceError", "CheckpointError", "CheckpointVersionError", "CorruptCheckpointError",
    "SpecMismatchError", "Adam", "SGD", "clip_by_global_norm", "params_checksum",
]
