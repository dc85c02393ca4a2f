"""Finite-difference gradient checks for every architecture."""

from __future__ import annotations

import numpy as np

from .autodiff import GradCheckResult, grad_check
from .zoo import MODEL_NAMES, batch_loss, build, spec_for


def gradcheck_model(name: str, epsilon: float = 1e-5, tolerance: float = 1e-4, hidden: int = 4,
                    window: int = 3, horizon: int = 2, heads: int = 2, batch: int = 2,
                    seed: int = 7) -> GradCheckResult:
    spec = spec_for(name, hidden=hidden, window=window, horizon=horizon, heads=heads, seed=seed)
    model = build(spec)
    rng = np.random.default_rng(seed)
    # Init-scale weights with zero biases leave some early-step gradients near
    # 1e-9, below what central differences resolve; check at O(1) values.
    for k, p in model.params.items():
        lo, hi = (0.5, 1.5) if k.endswith(".g") else (-1.0, 1.0)
        model.params[k] = rng.uniform(lo, hi, p.shape)
    X = rng.uniform(0.0, 1.0, (batch, window, spec.input_size))
    Y = rng.uniform(0.0, 1.0, (batch, horizon))
    return grad_check(lambda P: batch_loss(model, P, X, Y), model.params, epsilon, tolerance)


def gradcheck_all(epsilon: float = 1e-5, tolerance: float = 1e-4, **kw) -> dict[str, GradCheckResult]:
    return {name: gradcheck_model(name, epsilon, tolerance, **kw) for name in MODEL_NAMES}
