"""Benchmark chaotic generators: Mackey-Glass, Lorenz and Rossler.

Each generator integrates its system with classical fourth-order Runge-Kutta
and returns the sampled x-coordinate together with its analytic derivative,
evaluated from the governing equations at every retained sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GenerationError, IntegrationError, ParameterError

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class Series:
    """A univariate, uniformly sampled signal.

    ``dt`` is the spacing between consecutive samples in model time units.
    ``derivative_of`` names the series this one differentiates, if any.
    """

    values: np.ndarray
    dt: float
    name: str = ""
    derivative_of: str | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ParameterError("series values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(vals)):
            raise ParameterError(f"series {self.name!r} contains non-finite values")
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values, **changes) -> "Series":
        kw = {"dt": self.dt, "name": self.name, "derivative_of": self.derivative_of}
        kw.update(changes)
        return Series(values, **kw)


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], state, dt: float,
             t: float = 0.0, step: int = 0) -> np.ndarray:
    """Advance ``state`` by one classical RK4 step of size ``dt``.

    ``f(t, y)`` returns dy/dt. ``step`` only labels the error raised when a
    stage evaluation is not finite.
    """
    y = np.asarray(state, dtype=np.float64)
    k1 = np.asarray(f(t, y), dtype=np.float64)
    k2 = np.asarray(f(t + 0.5 * dt, y + 0.5 * dt * k1), dtype=np.float64)
    k3 = np.asarray(f(t + 0.5 * dt, y + 0.5 * dt * k2), dtype=np.float64)
    k4 = np.asarray(f(t + dt, y + dt * k3), dtype=np.float64)
    for stage, k in enumerate((k1, k2, k3, k4), start=1):
        if not np.all(np.isfinite(k)):
            raise IntegrationError(f"non-finite derivative at step {step}, RK4 stage {stage}", step)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_common(dt: float, n_samples: int, warmup: int, sample_every: int):
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if n_samples < 1:
        raise ParameterError("n_samples must be at least 1")
    if warmup < 0 or sample_every < 1:
        raise ParameterError("warmup must be >= 0 and sample_every >= 1")


@dataclass(frozen=True)
class MackeyGlassParams:
    """Mackey-Glass delay equation ``x' = beta*x + alpha*x(t-tau) / (1 + x(t-tau)**c)``.

    ``beta`` is signed and defaults to -0.1 (decay). ``warmup`` counts retained
    samples dropped from the front; ``sample_every`` keeps every k-th
    integration step, so the emitted spacing is ``dt * sample_every``.
    """

    alpha: float = 0.2
    beta: float = -0.1
    c: float = 10.0
    tau: float = 17.0
    x0: float = 1.2
    dt: float = 0.1
    n_samples: int = 1000
    warmup: int = 0
    sample_every: int = 1

    def __post_init__(self):
        _check_common(self.dt, self.n_samples, self.warmup, self.sample_every)
        if not self.tau > 0:
            raise ParameterError("tau must be positive")
        ratio = self.tau / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ParameterError(f"tau/dt must be an integer, got {ratio}")

    @property
    def delay_steps(self) -> int:
        return int(round(self.tau / self.dt))


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    initial: Sequence[float] = field(default=(1.0, 1.0, 1.0))
    dt: float = 0.01
    n_samples: int = 1000
    warmup: int = 0
    sample_every: int = 1

    def __post_init__(self):
        _check_common(self.dt, self.n_samples, self.warmup, self.sample_every)
        if len(self.initial) != 3:
            raise ParameterError("Lorenz initial state needs three coordinates")


@dataclass(frozen=True)
class RosslerParams:
    a: float = 0.15
    b: float = 0.20
    c: float = 10.0
    initial: Sequence[float] = field(default=(1.0, 1.0, 1.0))
    dt: float = 0.1
    n_samples: int = 1000
    warmup: int = 0
    sample_every: int = 1

    def __post_init__(self):
        _check_common(self.dt, self.n_samples, self.warmup, self.sample_every)
        if len(self.initial) != 3:
            raise ParameterError("Rossler initial state needs three coordinates")


def _mg_rhs(x: float, delayed: float, p: MackeyGlassParams) -> float:
    return p.beta * x + p.alpha * delayed / (1.0 + delayed ** p.c)


def generate_mackey_glass(p: MackeyGlassParams | None = None) -> tuple[Series, Series]:
    """Integrate Mackey-Glass and return ``(series, differential)``.

    History is zero for t < 0 with ``x(0) = x0``. The delay buffer holds one
    value per integration step; half-step RK4 stages read the delayed state by
    linear interpolation between the two neighbouring buffer entries.
    """
    p = p or MackeyGlassParams()
    lag = p.delay_steps
    total_steps = (p.warmup + p.n_samples - 1) * p.sample_every
    hist = np.zeros(total_steps + 1)
    hist[0] = p.x0

    def past(i: int) -> float:
        return hist[i] if i >= 0 else 0.0

    x = p.x0
    for n in range(total_steps):
        d0 = past(n - lag)
        d1 = past(n - lag + 1)
        dmid = 0.5 * (d0 + d1)
        k1 = _mg_rhs(x, d0, p)
        k2 = _mg_rhs(x + 0.5 * p.dt * k1, dmid, p)
        k3 = _mg_rhs(x + 0.5 * p.dt * k2, dmid, p)
        k4 = _mg_rhs(x + p.dt * k3, d1, p)
        if not all(math.isfinite(k) for k in (k1, k2, k3, k4)):
            raise IntegrationError(f"non-finite Mackey-Glass derivative at step {n}", n)
        x = x + (p.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(x) > DIVERGENCE_LIMIT:
            raise GenerationError(f"Mackey-Glass diverged at integration step {n + 1}", n + 1)
        hist[n + 1] = x

    idx = np.arange(p.warmup, p.warmup + p.n_samples) * p.sample_every
    values = hist[idx]
    delayed = np.array([past(i - lag) for i in idx])
    diffs = p.beta * values + p.alpha * delayed / (1.0 + delayed ** p.c)
    step = p.dt * p.sample_every
    return (Series(values, step, "mackey_glass"),
            Series(diffs, step, "mackey_glass'", derivative_of="mackey_glass"))


def _integrate_xyz(rhs, initial, dt: float, total_steps: int, label: str) -> np.ndarray:
    traj = np.empty((total_steps + 1, 3))
    traj[0] = initial
    y = np.asarray(initial, dtype=np.float64)
    for n in range(total_steps):
        y = rk4_step(rhs, y, dt, t=n * dt, step=n)
        if np.max(np.abs(y)) > DIVERGENCE_LIMIT:
            raise GenerationError(f"{label} diverged at integration step {n + 1}", n + 1)
        traj[n + 1] = y
    return traj


def _sample(traj: np.ndarray, p) -> np.ndarray:
    idx = np.arange(p.warmup, p.warmup + p.n_samples) * p.sample_every
    return traj[idx]


def generate_lorenz(p: LorenzParams | None = None) -> tuple[Series, Series]:
    """Lorenz x-coordinate and its derivative ``sigma * (g - x)``."""
    p = p or LorenzParams()

    def rhs(_t, s):
        x, g, z = s
        return np.array([p.sigma * (g - x), x * (p.rho - z) - g, x * g - p.beta * z])

    total = (p.warmup + p.n_samples - 1) * p.sample_every
    traj = _sample(_integrate_xyz(rhs, p.initial, p.dt, total, "Lorenz"), p)
    x, g = traj[:, 0], traj[:, 1]
    step = p.dt * p.sample_every
    return (Series(x, step, "lorenz"),
            Series(p.sigma * (g - x), step, "lorenz'", derivative_of="lorenz"))


def generate_rossler(p: RosslerParams | None = None) -> tuple[Series, Series]:
    """Rossler x-coordinate and its derivative ``-g - z``."""
    p = p or RosslerParams()

    def rhs(_t, s):
        x, g, z = s
        return np.array([-g - z, x + p.a * g, p.b + (x - p.c) * z])

    total = (p.warmup + p.n_samples - 1) * p.sample_every
    traj = _sample(_integrate_xyz(rhs, p.initial, p.dt, total, "Rossler"), p)
    x, g, z = traj[:, 0], traj[:, 1], traj[:, 2]
    step = p.dt * p.sample_every
    return (Series(x, step, "rossler"),
            Series(-g - z, step, "rossler'", derivative_of="rossler"))


SYSTEMS = {
    "mackey-glass": (MackeyGlassParams, generate_mackey_glass),
    "lorenz": (LorenzParams, generate_lorenz),
    "rossler": (RosslerParams, generate_rossler),
}


def generate(system: str, **params) -> tuple[Series, Series]:
    """Dispatch by system name (``mackey-glass``, ``lorenz``, ``rossler``)."""
    key = system.lower().replace("_", "-")
    if key not in SYSTEMS:
        raise ParameterError(f"unknown system {system!r}; choose from {sorted(SYSTEMS)}")
    cls, gen = SYSTEMS[key]
    if "initial" in params and params["initial"] is not None:
        params["initial"] = tuple(params["initial"])
    return gen(cls(**params))
