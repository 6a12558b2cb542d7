"""Diff-LSTM parameters, forward pass, composite loss and exact BPTT.

One LSTM cell (scalar input per step) is unrolled over the value window and,
with the same weights, over the differential window. The two final hidden
states are concatenated and fed to two independent linear heads, one
predicting the next H values and one the next H differentials.

Gate pre-activations use the row-vector convention ``x @ U + h @ W + b``
with ``U`` of shape (input_dim, hidden) and ``W`` of shape (hidden, hidden).
Heads compute ``W @ features + b`` with ``W`` of shape (H, 2*hidden).

All parameters live in one flat vector laid out as::

    Wcat  (input_dim + hidden, 4*hidden)   rows [U; W], column blocks i, f, o, g
    b     (4*hidden,)
    Wy    (H, 2*hidden),  by  (H,)
    Wyd   (H, 2*hidden),  byd (H,)

and the named tensors (``U_i``, ``W_f``, ``by``, ...) are views into it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from functools import cached_property, lru_cache

import numpy as np

from ..errors import NumericError, ParameterError, ShapeError
from ..numerics import Rng, sigmoid, uniform_init

GATES = ("i", "f", "o", "g")
CELL_NAMES = tuple(f"U_{g}" for g in GATES) + tuple(f"W_{g}" for g in GATES) + tuple(f"b_{g}" for g in GATES)
HEAD_NAMES = ("Wy", "by", "Wyd", "byd")
PARAM_NAMES = CELL_NAMES + HEAD_NAMES


def param_shapes(hidden: int, horizon: int, input_dim: int = 1) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"U_{g}"] = (input_dim, hidden)
        shapes[f"W_{g}"] = (hidden, hidden)
        shapes[f"b_{g}"] = (hidden,)
    head_in = 2 * hidden
    shapes.update(Wy=(horizon, head_in), by=(horizon,), Wyd=(horizon, head_in), byd=(horizon,))
    return shapes


def count_parameters(hidden: int = 10, horizon: int = 10, input_dim: int = 1) -> dict[str, int]:
    """Parameter counts per layer: ``cell``, ``head_orig``, ``head_diff``, ``total``."""
    shapes = param_shapes(hidden, horizon, input_dim)
    size = {n: int(np.prod(s)) for n, s in shapes.items()}
    cell = sum(size[n] for n in CELL_NAMES)
    head_orig = size["Wy"] + size["by"]
    head_diff = size["Wyd"] + size["byd"]
    return {"cell": cell, "head_orig": head_orig, "head_diff": head_diff,
            "total": cell + head_orig + head_diff}


def _block_shapes(hidden: int, horizon: int, input_dim: int) -> dict[str, tuple[int, ...]]:
    return {"Wcat": (input_dim + hidden, 4 * hidden), "b": (4 * hidden,),
            "Wy": (horizon, 2 * hidden), "by": (horizon,),
            "Wyd": (horizon, 2 * hidden), "byd": (horizon,)}


@lru_cache(maxsize=None)
def _blocks(hidden: int, horizon: int, input_dim: int) -> tuple[tuple[str, int, int, tuple[int, ...]], ...]:
    """(name, offset, size, shape) of each contiguous block of the flat vector."""
    out, offset = [], 0
    for name, shape in _block_shapes(hidden, horizon, input_dim).items():
        out.append((name, offset, math.prod(shape), shape))
        offset += math.prod(shape)
    return tuple(out)


@lru_cache(maxsize=None)
def flat_size(hidden: int, horizon: int, input_dim: int = 1) -> int:
    return count_parameters(hidden, horizon, input_dim)["total"]


def named_views(flat: np.ndarray, hidden: int, horizon: int, input_dim: int = 1) -> dict[str, np.ndarray]:
    """Named tensors (and the packed ``Wcat``/``b`` blocks) as views of ``flat``."""
    blocks = {name: flat[o:o + n].reshape(shape) for name, o, n, shape in _blocks(hidden, horizon, input_dim)}
    Wcat, b = blocks["Wcat"], blocks["b"]
    views = {}
    for k, g in enumerate(GATES):
        cols = slice(k * hidden, (k + 1) * hidden)
        views[f"U_{g}"] = Wcat[:input_dim, cols]
        views[f"W_{g}"] = Wcat[input_dim:, cols]
        views[f"b_{g}"] = b[cols]
    for name in HEAD_NAMES:
        views[name] = blocks[name]
    views["Wcat"], views["b"] = Wcat, b
    return views


class ModelParams:
    """All trainable tensors of one Diff-LSTM.

    Index by name (``p["U_i"]``, ``p["Wyd"]``); see :data:`PARAM_NAMES`.
    ``U_*``/``W_*``/``b_*`` belong to the shared cell, ``Wy, by`` to the value
    head and ``Wyd, byd`` to the differential head. Instances are immutable.
    """

    def __init__(self, theta: np.ndarray, hidden: int, horizon: int, input_dim: int = 1):
        theta = np.array(theta, dtype=np.float64).ravel()
        if theta.shape[0] != flat_size(hidden, horizon, input_dim):
            raise ShapeError(f"flat parameter vector has {theta.shape[0]} entries, "
                             f"expected {flat_size(hidden, horizon, input_dim)}")
        theta.setflags(write=False)
        self.theta = theta
        self.hidden = hidden
        self.horizon = horizon
        self.input_dim = input_dim

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], hidden: int, horizon: int,
                     input_dim: int = 1) -> "ModelParams":
        missing = set(PARAM_NAMES) - set(tensors)
        if missing:
            raise ShapeError(f"missing parameter tensors: {sorted(missing)}")
        expected = param_shapes(hidden, horizon, input_dim)
        flat = np.zeros(flat_size(hidden, horizon, input_dim))
        views = named_views(flat, hidden, horizon, input_dim)
        for name in PARAM_NAMES:
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != expected[name]:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {expected[name]}")
            views[name][...] = arr
        return cls(flat, hidden, horizon, input_dim)

    @cached_property
    def _views(self) -> dict[str, np.ndarray]:
        return named_views(self.theta, self.hidden, self.horizon, self.input_dim)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    @property
    def tensors(self) -> dict[str, np.ndarray]:
        return {n: self._views[n] for n in PARAM_NAMES}

    @property
    def head_in(self) -> int:
        return 2 * self.hidden

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """``(Wcat, b)``: gate weights ``[U; W]`` and biases in i, f, o, g column blocks."""
        return self._views["Wcat"], self._views["b"]

    def replace(self, **tensors) -> "ModelParams":
        merged = self.tensors
        merged.update(tensors)
        return ModelParams.from_tensors(merged, self.hidden, self.horizon, self.input_dim)

    def with_theta(self, theta: np.ndarray) -> "ModelParams":
        return ModelParams(theta, self.hidden, self.horizon, self.input_dim)

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return ((self.hidden, self.horizon, self.input_dim) == (other.hidden, other.horizon, other.input_dim)
                and np.array_equal(self.theta, other.theta))

    def __repr__(self) -> str:
        return f"ModelParams(hidden={self.hidden}, horizon={self.horizon}, input_dim={self.input_dim})"


def init_params(rng: Rng, hidden: int = 10, horizon: int = 10, input_dim: int = 1,
                scale: float | None = None) -> ModelParams:
    """Draw every tensor i.i.d. from U[-scale, scale), default ``scale = 1/sqrt(hidden)``.

    Tensors are filled in :data:`PARAM_NAMES` order, each row-major.
    """
    if hidden < 1 or horizon < 1 or input_dim < 1:
        raise ParameterError("hidden, horizon and input_dim must be positive")
    scale = 1.0 / np.sqrt(hidden) if scale is None else scale
    shapes = param_shapes(hidden, horizon, input_dim)
    tensors = {}
    for name in PARAM_NAMES:
        shape = shapes[name]
        rows, cols = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
        tensors[name] = uniform_init(rng, rows, cols, -scale, scale).reshape(shape)
    return ModelParams.from_tensors(tensors, hidden, horizon, input_dim)


def zero_params(hidden: int = 10, horizon: int = 10, input_dim: int = 1) -> ModelParams:
    return ModelParams(np.zeros(flat_size(hidden, horizon, input_dim)), hidden, horizon, input_dim)


# -- single cell step --------------------------------------------------------

@dataclass(frozen=True)
class CellState:
    h: np.ndarray
    C: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "CellState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


def cell_step(p: ModelParams, x, state: CellState) -> CellState:
    """One LSTM update: gates from ``x @ U + h @ W + b``, then new ``C`` and ``h``.

    ``x`` has shape (input_dim,) or (batch, input_dim); the state matches.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.input_dim:
        raise ShapeError(f"cell input has width {x.shape[-1]}, cell expects {p.input_dim}")
    gate = {}
    for g in GATES:
        z = x @ p[f"U_{g}"] + state.h @ p[f"W_{g}"] + p[f"b_{g}"]
        gate[g] = np.tanh(z) if g == "g" else sigmoid(z)
        if not np.all(np.isfinite(gate[g])):
            raise NumericError(f"non-finite activation in gate {g!r}")
    C = gate["f"] * state.C + gate["i"] * gate["g"]
    h = gate["o"] * np.tanh(C)
    if not (np.all(np.isfinite(C)) and np.all(np.isfinite(h))):
        raise NumericError("non-finite cell state")
    return CellState(h, C)


# -- batched forward with tape ----------------------------------------------

@dataclass
class Tape:
    """Cache of a forward pass, enough to run :func:`backward`.

    Both streams start from zero state, so their first D-1 steps run stacked
    as one batch of 2B rows (value windows first); the value stream's last
    step runs alone on B rows. Per step the tape keeps ``[x, h_prev]``, the
    gate activations, the previous cell state and ``tanh`` of the new one.
    """

    params: ModelParams
    batch: int
    xh: list = field(default_factory=list)
    gates: list = field(default_factory=list)
    c_prev: list = field(default_factory=list)
    tanh_c: list = field(default_factory=list)
    features: np.ndarray | None = None


@dataclass(frozen=True)
class Prediction:
    """Value forecasts ``y`` and differential forecasts ``yd``, each (H,) or (batch, H)."""

    y: np.ndarray
    yd: np.ndarray


def _cell_forward(tape: Tape, Wcat, b, x_col, h, c, hidden):
    xh = np.concatenate([x_col, h], axis=1)
    act = xh @ Wcat + b
    act[:, :3 * hidden] = sigmoid(act[:, :3 * hidden])
    act[:, 3 * hidden:] = np.tanh(act[:, 3 * hidden:])
    c_new = act[:, hidden:2 * hidden] * c + act[:, :hidden] * act[:, 3 * hidden:]
    tc = np.tanh(c_new)
    tape.xh.append(xh)
    tape.gates.append(act)
    tape.c_prev.append(c)
    tape.tanh_c.append(tc)
    return act[:, 2 * hidden:3 * hidden] * tc, c_new


def _as_batch(arr, width: int, label: str) -> tuple[np.ndarray, bool]:
    a = np.asarray(arr, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != width:
        raise ShapeError(f"{label} must have {width} entries per window, got shape {np.shape(arr)}")
    return a, single


def forward(p: ModelParams, x_window, xd_window) -> tuple[Prediction, Tape]:
    """Run both streams through the shared cell and apply the two linear heads.

    Accepts one window (``x_window`` of length D, ``xd_window`` of length D-1)
    or a batch (``(B, D)`` and ``(B, D-1)``). State starts at zero for every
    window in both streams.
    """
    if p.input_dim != 1:
        raise ShapeError("forward() feeds one scalar per step; the cell must have input_dim=1")
    X = np.asarray(x_window, dtype=np.float64)
    D = X.shape[-1]
    if D < 2:
        raise ShapeError("value window needs at least 2 entries")
    X, single = _as_batch(X, D, "value window")
    Xd, _ = _as_batch(xd_window, D - 1, "differential window")
    B = X.shape[0]
    if Xd.shape[0] != B:
        raise ShapeError("value and differential batches differ in size")
    hid = p.hidden
    Wcat, b = p.packed()
    tape = Tape(p, B)
    seq = np.concatenate([X[:, :D - 1], Xd], axis=0)
    h = np.zeros((2 * B, hid))
    c = np.zeros((2 * B, hid))
    for s in range(D - 1):
        h, c = _cell_forward(tape, Wcat, b, seq[:, s:s + 1], h, c, hid)
    h_diff = h[B:]
    h_orig, _ = _cell_forward(tape, Wcat, b, X[:, D - 1:], h[:B], c[:B], hid)
    feats = np.concatenate([h_orig, h_diff], axis=1)
    tape.features = feats
    y = feats @ p["Wy"].T + p["by"]
    yd = feats @ p["Wyd"].T + p["byd"]
    if single:
        y, yd = y[0], yd[0]
    return Prediction(y, yd), tape


# -- loss --------------------------------------------------------------------

def loss(pred: Prediction, target_y, target_yd, lam: float) -> float:
    """``MSE(y) + lam * MSE(yd)``, each averaged over windows and horizon steps."""
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    y, yd = np.atleast_2d(pred.y), np.atleast_2d(pred.yd)
    ty, tyd = np.atleast_2d(target_y), np.atleast_2d(target_yd)
    if y.shape != ty.shape or yd.shape != tyd.shape:
        raise ShapeError("prediction and target shapes differ")
    return float(np.mean((y - ty) ** 2) + lam * np.mean((yd - tyd) ** 2))


def loss_gradients(pred: Prediction, target_y, target_yd, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of :func:`loss` with respect to ``pred.y`` and ``pred.yd``."""
    y, yd = np.atleast_2d(pred.y), np.atleast_2d(pred.yd)
    ty, tyd = np.atleast_2d(target_y), np.atleast_2d(target_yd)
    return 2.0 * (y - ty) / y.size, 2.0 * lam * (yd - tyd) / yd.size


# -- backward ----------------------------------------------------------------

def _cell_backward(tape: Tape, s: int, dh, dc, Wcat, hidden, dWcat, db):
    act = tape.gates[s]
    tc = tape.tanh_c[s]
    i, f, o, g = (act[:, k * hidden:(k + 1) * hidden] for k in range(4))
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.empty_like(act)
    dz[:, :hidden] = dc * g
    dz[:, hidden:2 * hidden] = dc * tape.c_prev[s]
    dz[:, 2 * hidden:3 * hidden] = dh * tc
    sg = act[:, :3 * hidden]
    dz[:, :3 * hidden] *= sg * (1.0 - sg)
    dz[:, 3 * hidden:] = dc * i * (1.0 - g * g)
    dWcat += tape.xh[s].T @ dz
    db += dz.sum(axis=0)
    return dz @ Wcat[-hidden:].T, dc * f


def backward_flat(tape: Tape, dy, dyd) -> np.ndarray:
    """Gradient as a flat vector in the same layout as ``ModelParams.theta``."""
    p = tape.params
    hid, B = p.hidden, tape.batch
    dy, dyd = np.atleast_2d(dy), np.atleast_2d(dyd)
    grad = np.zeros_like(p.theta, dtype=np.float64)
    gv = named_views(grad, hid, p.horizon, p.input_dim)
    feats = tape.features
    gv["Wy"][...] = dy.T @ feats
    gv["by"][...] = dy.sum(axis=0)
    gv["Wyd"][...] = dyd.T @ feats
    gv["byd"][...] = dyd.sum(axis=0)
    dfeat = dy @ p["Wy"] + dyd @ p["Wyd"]
    Wcat, _ = p.packed()
    dWcat, db = gv["Wcat"], gv["b"]
    last = len(tape.xh) - 1
    dh_o, dc_o = _cell_backward(tape, last, dfeat[:, :hid], np.zeros((B, hid)), Wcat, hid, dWcat, db)
    dh = np.concatenate([dh_o, dfeat[:, hid:]], axis=0)
    dc = np.concatenate([dc_o, np.zeros((B, hid))], axis=0)
    for s in reversed(range(last)):
        dh, dc = _cell_backward(tape, s, dh, dc, Wcat, hid, dWcat, db)
    return grad


def backward(tape: Tape, dy, dyd) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar objective given its derivatives w.r.t. the outputs.

    Contributions from the value and differential streams accumulate into the
    same shared cell gradients. Returns a dict keyed like :data:`PARAM_NAMES`.
    """
    p = tape.params
    views = named_views(backward_flat(tape, dy, dyd), p.hidden, p.horizon, p.input_dim)
    return {n: views[n] for n in PARAM_NAMES}


def loss_and_grads(p: ModelParams, X, Xd, Y, Yd, lam: float) -> tuple[float, dict[str, np.ndarray]]:
    pred, tape = forward(p, X, Xd)
    value = loss(pred, Y, Yd, lam)
    return value, backward(tape, *loss_gradients(pred, Y, Yd, lam))


def loss_and_flat_grad(p: ModelParams, X, Xd, Y, Yd, lam: float) -> tuple[float, np.ndarray]:
    pred, tape = forward(p, X, Xd)
    value = loss(pred, Y, Yd, lam)
    return value, backward_flat(tape, *loss_gradients(pred, Y, Yd, lam))
