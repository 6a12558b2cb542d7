"""Adam with bias correction and optional global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ParameterError


@dataclass(frozen=True)
class AdamState:
    """Step count and first/second moment estimates (``None`` before the first step)."""

    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def clip_by_global_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm <= max_norm or norm == 0.0:
        return grad
    return grad * (max_norm / norm)


def adam_update(theta: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                grad_clip: float | None = None) -> tuple[np.ndarray, AdamState]:
    """One Adam step on a flat parameter vector; returns new arrays, inputs untouched."""
    if not lr > 0:
        raise ParameterError("learning rate must be positive")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ParameterError("Adam betas must lie in [0, 1)")
    if grad.shape != theta.shape:
        raise ParameterError(f"gradient shape {grad.shape} does not match parameters {theta.shape}")
    if grad_clip is not None:
        grad = clip_by_global_norm(grad, grad_clip)
    t = state.step + 1
    m = (1.0 - beta1) * grad if state.m is None else beta1 * state.m + (1.0 - beta1) * grad
    v = (1.0 - beta2) * grad * grad if state.v is None else beta2 * state.v + (1.0 - beta2) * grad * grad
    step = (lr / (1.0 - beta1 ** t)) * m / (np.sqrt(v / (1.0 - beta2 ** t)) + eps)
    new = theta - step
    if not np.all(np.isfinite(new)):
        bad = int(np.flatnonzero(~np.isfinite(new))[0])
        raise NumericError(f"non-finite Adam update at flat parameter index {bad}")
    return new, AdamState(t, m, v)
