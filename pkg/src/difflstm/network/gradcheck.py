"""Finite-difference verification of the analytic BPTT gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Rng
from .model import ModelParams, forward, init_params, loss, loss_and_flat_grad

LAMBDAS = (0.0, 1.0, 0.3)


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst_trial: int
    trials: int


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """``|a - n| / max(|a|, |n|)`` elementwise, 0 where both vanish."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    den = np.maximum(np.abs(a), np.abs(n))
    out = np.zeros_like(den)
    nz = den > 0
    out[nz] = np.abs(a - n)[nz] / den[nz]
    return out


def numeric_gradient(p: ModelParams, X, Xd, Y, Yd, lam: float, eps: float = 1e-5) -> np.ndarray:
    """Central differences of the loss with respect to every entry of ``p.theta``."""
    theta = p.theta.copy()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + eps
        up = loss(forward(p.with_theta(theta.copy()), X, Xd)[0], Y, Yd, lam)
        theta[i] = old - eps
        down = loss(forward(p.with_theta(theta.copy()), X, Xd)[0], Y, Yd, lam)
        theta[i] = old
        grad[i] = (up - down) / (2.0 * eps)
    return grad


def random_problem(rng: Rng, hidden: int = 3, D: int = 4, H: int = 2, batch: int = 3):
    """Random parameters and one batch of windows and targets drawn from ``rng``."""
    p = init_params(rng, hidden, H, scale=0.8)

    def draw(*shape):
        return rng.uniform_array(int(np.prod(shape)), -0.5, 0.5).reshape(shape)

    return p, draw(batch, D), draw(batch, D - 1), draw(batch, H), draw(batch, H)


def check_gradients(seed: int = 0, trials: int = 50, hidden: int = 3, D: int = 4, H: int = 2,
                    eps: float = 1e-5) -> GradCheckResult:
    """Worst relative error over ``trials`` random problems; lambda cycles through 0, 1, 0.3."""
    rng = Rng(seed)
    worst, worst_trial = 0.0, 0
    for trial in range(trials):
        lam = LAMBDAS[trial % len(LAMBDAS)]
        p, X, Xd, Y, Yd = random_problem(rng, hidden, D, H)
        _, analytic = loss_and_flat_grad(p, X, Xd, Y, Yd, lam)
        numeric = numeric_gradient(p, X, Xd, Y, Yd, lam, eps)
        err = float(np.max(relative_error(analytic, numeric)))
        if err > worst:
            worst, worst_trial = err, trial
    return GradCheckResult(worst, worst_trial, trials)
