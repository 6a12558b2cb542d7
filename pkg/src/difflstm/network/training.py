"""Minibatch training and batch prediction for the Diff-LSTM."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericError, ParameterError, ShapeError, TrainingError
from ..numerics import Rng
from ..preprocess import WindowedDataset
from .model import PARAM_NAMES, ModelParams, forward, init_params, loss_and_flat_grad, named_views
from .optim import AdamState, adam_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    learning_rate: float = 0.005
    epochs: int = 300
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    grad_clip: float | None = None
    hidden: int = 10
    init_scale: float | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lambda must be non-negative")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ParameterError("Adam betas must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ParameterError("epochs >= 0, batch_size >= 1 and hidden >= 1 required")

    def to_dict(self) -> dict:
        return asdict(self)


def adam_step(params: ModelParams, grads, state: AdamState,
              cfg: TrainConfig) -> tuple[ModelParams, AdamState]:
    """Apply one Adam update. ``grads`` is a dict keyed like ``PARAM_NAMES`` or a flat vector."""
    if isinstance(grads, dict):
        flat = np.zeros_like(params.theta)
        views = named_views(flat, params.hidden, params.horizon, params.input_dim)
        for name in PARAM_NAMES:
            views[name][...] = grads[name]
        grads = flat
    theta, state = adam_update(params.theta, grads, state, cfg.learning_rate,
                               cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.grad_clip)
    return params.with_theta(theta), state


def train(ds: WindowedDataset, cfg: TrainConfig, params: ModelParams | None = None,
          ) -> tuple[ModelParams, list[float]]:
    """Fit a Diff-LSTM to ``ds`` with shuffled minibatch Adam.

    The run's :class:`Rng` is seeded from ``cfg.seed``; it draws the initial
    weights (unless ``params`` is given) and then one permutation per epoch.
    The history holds the size-weighted mean minibatch loss of each epoch.
    """
    n = len(ds)
    if n == 0:
        raise ParameterError("cannot train on an empty dataset")
    rng = Rng(cfg.seed)
    if params is None:
        params = init_params(rng, cfg.hidden, ds.spec.H, scale=cfg.init_scale)
    state = AdamState()
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            value, grads = loss_and_flat_grad(params, ds.X[idx], ds.Xd[idx], ds.Y[idx], ds.Yd[idx], cfg.lam)
            last = history[-1] if history else None
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss in epoch {epoch}", epoch, last)
            try:
                params, state = adam_step(params, grads, state, cfg)
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}", epoch, last) from exc
            total += value * idx.shape[0]
        history.append(total / n)
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            log.debug("epoch %d loss %.6g", epoch, history[-1])
    return params, history


def predict(p: ModelParams, ds: WindowedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Forecasts for every window: ``(Y_hat, Yd_hat)``, each of shape (len(ds), H)."""
    if ds.spec.H != p.horizon:
        raise ShapeError(f"model predicts {p.horizon} steps but dataset has H={ds.spec.H}")
    pred, _ = forward(p, ds.X, ds.Xd)
    return np.atleast_2d(pred.y), np.atleast_2d(pred.yd)
