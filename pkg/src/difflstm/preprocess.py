"""From raw (value, differential) series to scaled, windowed training data.

Also hosts the two estimators needed when no governing equation is known:
a Savitzky-Golay derivative filter and a false-nearest-neighbours search for
the embedding dimension.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.spatial import cKDTree

from .dynamics import Series
from .errors import ParameterError, ShapeError


# -- min-max scaling ---------------------------------------------------------

@dataclass(frozen=True)
class ScaleParams:
    data_min: float
    data_max: float
    target_lo: float = -0.5
    target_hi: float = 0.5

    def __post_init__(self):
        if not self.data_max > self.data_min:
            raise ParameterError(
                f"degenerate data range [{self.data_min}, {self.data_max}]; cannot min-max scale")
        if not self.target_hi > self.target_lo:
            raise ParameterError("target_hi must exceed target_lo")

    @property
    def factor(self) -> float:
        """Multiplier taking data units to target units."""
        return (self.target_hi - self.target_lo) / (self.data_max - self.data_min)

    def to_dict(self) -> dict:
        return {"data_min": self.data_min, "data_max": self.data_max,
                "target_lo": self.target_lo, "target_hi": self.target_hi}


def fit_scale(data, target_lo: float = -0.5, target_hi: float = 0.5) -> ScaleParams:
    """Fit a min-max map from the observed range of ``data`` onto [target_lo, target_hi]."""
    vals = np.asarray(data.values if isinstance(data, Series) else data, dtype=np.float64).ravel()
    if vals.size < 2 or np.min(vals) == np.max(vals):
        raise ParameterError("min-max scaling needs at least two distinct values")
    return ScaleParams(float(np.min(vals)), float(np.max(vals)), target_lo, target_hi)


def apply_scale(params: ScaleParams, data):
    """Affinely map ``data`` (a Series or array) into target units.

    Values outside the fitted range are extrapolated along the same line.
    """
    if isinstance(data, Series):
        return data.with_values(apply_scale(params, data.values))
    arr = np.asarray(data, dtype=np.float64)
    return params.target_lo + (arr - params.data_min) * params.factor


def unscale(params: ScaleParams, data):
    """Exact inverse of :func:`apply_scale`."""
    if isinstance(data, Series):
        return data.with_values(unscale(params, data.values))
    arr = np.asarray(data, dtype=np.float64)
    return params.data_min + (arr - params.target_lo) / params.factor


# -- Savitzky-Golay derivative ----------------------------------------------

@dataclass(frozen=True)
class SavGolSpec:
    """Filter settings. ``edge`` is ``"mirror"`` (point reflection) or ``"fit"``."""

    window: int = 5
    polyorder: int = 3
    dt: float = 1.0
    edge: str = "mirror"

    def __post_init__(self):
        if self.edge not in ("mirror", "fit"):
            raise ParameterError(f"edge must be 'mirror' or 'fit', got {self.edge!r}")
        if self.window % 2 != 1 or self.window < 3:
            raise ParameterError(f"window must be an odd count >= 3, got {self.window}")
        if not (1 <= self.polyorder < self.window):
            raise ParameterError(
                f"need window > polyorder >= 1, got window={self.window}, polyorder={self.polyorder}")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")


def savgol_derivative_coeffs(window: int, polyorder: int, dt: float = 1.0) -> np.ndarray:
    """Weights ``w`` with ``x'(centre) ~= sum_k w[k] * x[centre - m + k]``."""
    return signal.savgol_coeffs(window, polyorder, deriv=1, delta=dt, use="dot")


def savitzky_golay_derivative(series: Series, spec: SavGolSpec | None = None) -> Series:
    """First-derivative estimate at every sample, in value units per time unit.

    Interior points use the centred filter. With ``edge="mirror"`` the series
    is extended by ``window // 2`` samples at each end by point reflection
    through the end sample (``2*x[0] - x[k]``), which keeps the local slope.
    With ``edge="fit"`` the end samples take the derivative of the polynomial
    fitted to the end window instead, which is exact for polynomials of degree
    ``polyorder`` everywhere.
    """
    spec = spec or SavGolSpec(dt=series.dt)
    x = series.values
    if spec.window > x.shape[0]:
        raise ParameterError(f"window {spec.window} exceeds series length {x.shape[0]}")
    if spec.edge == "fit":
        out = signal.savgol_filter(x, spec.window, spec.polyorder, deriv=1, delta=spec.dt, mode="interp")
    else:
        padded = np.pad(x, spec.window // 2, mode="reflect", reflect_type="odd")
        out = np.correlate(padded, savgol_derivative_coeffs(spec.window, spec.polyorder, spec.dt), mode="valid")
    return Series(out, series.dt, f"{series.name}'", derivative_of=series.name)


# -- false nearest neighbours -----------------------------------------------

@dataclass(frozen=True)
class FNNResult:
    dimension: int
    fractions: tuple[float, ...]
    converged: bool


def _delay_vectors(x: np.ndarray, dim: int, lag: int, count: int) -> np.ndarray:
    return np.column_stack([x[j * lag: j * lag + count] for j in range(dim)])


def false_nearest_neighbors(series, lag: int = 1, d_max: int = 10, rtol: float = 10.0,
                            threshold: float = 0.01, atol: float | None = 2.0) -> FNNResult:
    """Smallest embedding dimension whose false-neighbour fraction is below ``threshold``.

    For each delay vector in dimension D its Euclidean nearest neighbour is
    found; the pair is false when adding coordinate D+1 stretches their
    separation by more than ``rtol`` times the D-dimensional distance. With
    ``atol`` set, a pair is also false when the (D+1)-distance exceeds ``atol``
    times the standard deviation of the series (Kennel's second test, which
    flags neighbours that are only close because the attractor is sparse).

    Returns ``d_max`` with ``converged=False`` and emits a ``RuntimeWarning``
    when no dimension qualifies.
    """
    x = np.asarray(series.values if isinstance(series, Series) else series, dtype=np.float64)
    if lag < 1 or d_max < 1:
        raise ParameterError("lag and d_max must be positive")
    if x.shape[0] < d_max * lag + 2:
        raise ParameterError(
            f"series of length {x.shape[0]} too short for d_max={d_max}, lag={lag}; "
            f"need at least {d_max * lag + 2}")
    spread = float(np.std(x))
    fractions = []
    for dim in range(1, d_max + 1):
        count = x.shape[0] - dim * lag
        emb = _delay_vectors(x, dim, lag, count)
        nxt = x[dim * lag: dim * lag + count]
        dist, idx = cKDTree(emb).query(emb, k=2)
        r_d, j = dist[:, 1], idx[:, 1]
        usable = r_d > 0
        if not np.any(usable):
            fractions.append(0.0)
            continue
        extra = np.abs(nxt - nxt[j])
        false = np.zeros_like(usable)
        false[usable] = extra[usable] / r_d[usable] > rtol
        if atol is not None and spread > 0:
            r_next = np.sqrt(r_d ** 2 + extra ** 2)
            false |= r_next / spread > atol
        fractions.append(float(np.mean(false[usable])))
    for dim, frac in enumerate(fractions, start=1):
        if frac < threshold:
            return FNNResult(dim, tuple(fractions), True)
    warnings.warn(f"false-neighbour fraction never fell below {threshold} up to d_max={d_max}",
                  RuntimeWarning, stacklevel=2)
    return FNNResult(d_max, tuple(fractions), False)


# -- windowing ---------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingSpec:
    D: int = 5
    T: int = 1
    H: int = 10

    def __post_init__(self):
        if self.D < 2 or self.T < 1 or self.H < 1:
            raise ParameterError(f"need D >= 2, T >= 1, H >= 1; got {self}")

    def min_length(self) -> int:
        return (self.D - 1) * self.T + self.H + 1

    def to_dict(self) -> dict:
        return {"D": self.D, "T": self.T, "H": self.H}


@dataclass(frozen=True)
class WindowedDataset:
    """Aligned windows for both streams.

    Row ``r`` corresponds to window start ``t = start + r``. With N+1 samples::

        X[t, j]    = x[t + j*T]             j = 0..D-1
        Xd[t, j]   = x'[t + j*T]            j = 0..D-2
        Y[t, k-1]  = x[t + (D-1)*T + k]     k = 1..H
        Yd[t, k-1] = x'[t + (D-2)*T + k]    k = 1..H
    """

    X: np.ndarray
    Xd: np.ndarray
    Y: np.ndarray
    Yd: np.ndarray
    spec: EmbeddingSpec
    start: int = 0

    def __post_init__(self):
        n = self.X.shape[0]
        D, H = self.spec.D, self.spec.H
        shapes = {"X": (n, D), "Xd": (n, D - 1), "Y": (n, H), "Yd": (n, H)}
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)

    @property
    def M(self) -> int:
        """Index of the last window."""
        return self.X.shape[0] - 1

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, lo: int, hi: int) -> "WindowedDataset":
        return WindowedDataset(self.X[lo:hi].copy(), self.Xd[lo:hi].copy(), self.Y[lo:hi].copy(),
                               self.Yd[lo:hi].copy(), self.spec, self.start + lo)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "start": self.start,
                "X": self.X.tolist(), "Xd": self.Xd.tolist(),
                "Y": self.Y.tolist(), "Yd": self.Yd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "WindowedDataset":
        spec = EmbeddingSpec(**d["spec"])
        D, H = spec.D, spec.H

        def arr(key, cols):
            return np.asarray(d[key], dtype=np.float64).reshape(-1, cols)

        return cls(arr("X", D), arr("Xd", D - 1), arr("Y", H), arr("Yd", H), spec, d.get("start", 0))


def build_windows(values, diffs, spec: EmbeddingSpec) -> WindowedDataset:
    """Slice the value and differential series into aligned input/target windows.

    Differential inputs stop at ``x'[t + (D-2)*T]`` and differential targets
    never read past ``x'[N - T]``.
    """
    x = np.asarray(values.values if isinstance(values, Series) else values, dtype=np.float64)
    xd = np.asarray(diffs.values if isinstance(diffs, Series) else diffs, dtype=np.float64)
    if x.shape != xd.shape:
        raise ShapeError(f"value and differential series differ in length: {x.shape[0]} vs {xd.shape[0]}")
    D, T, H = spec.D, spec.T, spec.H
    N = x.shape[0] - 1
    M = N - (D - 1) * T - H
    if M < 0:
        raise ParameterError(
            f"series of length {N + 1} too short for D={D}, T={T}, H={H}; need at least {spec.min_length()}")
    t = np.arange(M + 1)[:, None]
    X = x[t + T * np.arange(D)]
    Xd = xd[t + T * np.arange(D - 1)]
    k = np.arange(1, H + 1)
    Y = x[t + (D - 1) * T + k]
    Yd = xd[t + (D - 2) * T + k]
    return WindowedDataset(X, Xd, Y, Yd, spec)


def split_train_test(ds: WindowedDataset, train_frac: float = 0.6) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological split: the first ``floor(n * train_frac)`` windows train."""
    if not 0.0 < train_frac < 1.0:
        raise ParameterError(f"train_frac must lie in (0, 1), got {train_frac}")
    n = len(ds)
    n_train = int(math.floor(n * train_frac + 1e-9))
    if n_train == 0 or n_train == n:
        raise ParameterError(f"splitting {n} windows at {train_frac} leaves an empty partition")
    return ds.subset(0, n_train), ds.subset(n_train, n)


def scale_dataset(ds: WindowedDataset, value_scale: ScaleParams, diff_scale: ScaleParams) -> WindowedDataset:
    """Apply the value map to X, Y and the differential map to Xd, Yd."""
    return WindowedDataset(apply_scale(value_scale, ds.X), apply_scale(diff_scale, ds.Xd),
                           apply_scale(value_scale, ds.Y), apply_scale(diff_scale, ds.Yd),
                           ds.spec, ds.start)


# -- CSV input ---------------------------------------------------------------

def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_csv_columns(path, columns=(0,)) -> list[np.ndarray]:
    """Read numeric columns from a CSV, skipping a header row if one is present."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParameterError(f"{path}: no data rows")
    if not all(_is_number(rows[0][c]) for c in columns if c < len(rows[0])):
        rows = rows[1:]
    out = []
    for c in columns:
        try:
            out.append(np.array([float(r[c]) for r in rows], dtype=np.float64))
        except (IndexError, ValueError) as exc:
            raise ParameterError(f"{path}: column {c} is missing or not numeric ({exc})") from exc
    return out


def read_series_csv(path, column: int = 0, dt: float = 1.0, name: str | None = None) -> Series:
    """One value per row; optional header; ``column`` picks the field."""
    (vals,) = read_csv_columns(path, (column,))
    return Series(vals, dt, name or Path(path).stem)
