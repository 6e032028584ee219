"""Störmer and predictor-corrector time stepping, spectral radius and CFL probes.

An integrable problem provides

* ``accel(u, t, homogeneous=False)`` returning ``rho^{-1}(L u + data)``;
* ``source_tt(t, dt)`` returning the second time derivative of the data part
  (or ``None`` without data);
* ``enforce(u, ctx)`` fixing ghost values, injected rows or interface
  systems of a freshly computed level in place.

Fields are numpy arrays of any shape; entries that are not evolved (ghosts)
must have zero acceleration and are overwritten by the hook.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

__all__ = [
    "Integrable",
    "StageContext",
    "TwoLevelState",
    "FourierSymbol",
    "initialize",
    "stormer_step",
    "pc_step",
    "advance",
    "spectral_radius",
    "dense_spectral_radius",
    "cfl_threshold",
    "periodic_cfl_bound",
    "InstabilityDetected",
    "run_until",
]


class Integrable(Protocol):
    def accel(self, u: np.ndarray, t: float, homogeneous: bool = False) -> np.ndarray: ...

    def source_tt(self, t: float, dt: float) -> np.ndarray | None: ...

    def enforce(self, u: np.ndarray, ctx: "StageContext") -> None: ...


@dataclass(frozen=True)
class StageContext:
    """Information handed to enforcement hooks for the level at time ``t``."""

    stage: str  # "init", "stormer", "predictor" or "corrector"
    t: float
    dt: float
    curr: np.ndarray | None = None  # level at t - dt
    prev: np.ndarray | None = None  # level at t - 2 dt
    source_tt: np.ndarray | None = None


@dataclass
class TwoLevelState:
    prev: np.ndarray
    curr: np.ndarray
    t: float
    dt: float
    k: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        if self.prev.shape != self.curr.shape:
            raise ValueError("time levels must share one grid")

    @property
    def velocity(self) -> np.ndarray:
        return (self.curr - self.prev) / self.dt


def initialize(problem: Integrable, u_prev: np.ndarray, u_curr: np.ndarray, t0: float, dt: float) -> TwoLevelState:
    """Two-level start at ``t0 - dt`` and ``t0`` with hooks applied to both levels."""
    prev = np.array(u_prev, dtype=float)
    curr = np.array(u_curr, dtype=float)
    problem.enforce(prev, StageContext("init", t0 - dt, dt, None, None))
    problem.enforce(curr, StageContext("init", t0, dt, prev, None))
    return TwoLevelState(prev, curr, t0, dt, 0)


def stormer_step(problem: Integrable, state: TwoLevelState) -> TwoLevelState:
    dt, t = state.dt, state.t
    new = 2 * state.curr - state.prev + dt * dt * problem.accel(state.curr, t)
    problem.enforce(new, StageContext("stormer", t + dt, dt, state.curr, state.prev))
    return TwoLevelState(state.curr, new, t + dt, dt, state.k + 1)


def pc_step(problem: Integrable, state: TwoLevelState) -> TwoLevelState:
    """Fourth-order predictor-corrector step (modified equation in time)."""
    dt, t = state.dt, state.t
    u, um = state.curr, state.prev
    s_tt = problem.source_tt(t, dt)
    pred = 2 * u - um + dt * dt * problem.accel(u, t)
    problem.enforce(pred, StageContext("predictor", t + dt, dt, u, um, s_tt))
    v = (pred - 2 * u + um) / (dt * dt)
    corr = problem.accel(v, t, homogeneous=True)
    if s_tt is not None:
        corr = corr + s_tt
    new = pred + (dt**4 / 12.0) * corr
    problem.enforce(new, StageContext("corrector", t + dt, dt, u, um, s_tt))
    return TwoLevelState(u, new, t + dt, dt, state.k + 1)


def advance(problem: Integrable, state: TwoLevelState, nsteps: int, scheme: str = "pc") -> TwoLevelState:
    step = pc_step if scheme == "pc" else stormer_step
    for _ in range(nsteps):
        state = step(problem, state)
    return state


class InstabilityDetected(RuntimeError):
    def __init__(self, t: float, growth: float):
        super().__init__(f"solution grew by {growth:.3g} at t = {t:.4g}")
        self.t = t
        self.growth = growth


def run_until(
    problem: Integrable,
    state: TwoLevelState,
    T: float,
    growth_tol: float = 1e3,
    check_every: int = 50,
    scheme: str = "pc",
    monitor: Callable[[TwoLevelState], None] | None = None,
) -> TwoLevelState:
    """Step until ``t >= T``; raise :class:`InstabilityDetected` on blow-up."""
    step = pc_step if scheme == "pc" else stormer_step
    scale = max(np.abs(state.curr).max(), np.abs(state.prev).max(), 1e-300)
    nsteps = max(0, math.ceil((T - state.t) / state.dt - 1e-9))
    for i in range(1, nsteps + 1):
        state = step(problem, state)
        if monitor is not None:
            monitor(state)
        if i % check_every == 0 or i == nsteps:
            g = np.abs(state.curr).max() / scale
            if not np.isfinite(g) or g > growth_tol:
                raise InstabilityDetected(state.t, float(g))
    return state


# -- spectral radius ----------------------------------------------------------


@dataclass(frozen=True)
class FourierSymbol:
    """Symbol of the periodic fourth-order stencil for ``mu/rho`` constant."""

    h: float
    mu: float = 1.0
    rho: float = 1.0

    def __call__(self, omega) -> np.ndarray:
        s = np.sin(np.asarray(omega) * self.h / 2) ** 2
        return -(4.0 / self.h**2) * s * (1.0 + s / 3.0) * self.mu / self.rho

    @property
    def spectral_radius(self) -> float:
        return 16.0 * self.mu / (3.0 * self.h**2 * self.rho)

    @property
    def stormer_limit(self) -> float:
        """Largest stable ``dt``: ``2 / sqrt(kappa)``."""
        return 2.0 / math.sqrt(self.spectral_radius)

    @property
    def pc_limit(self) -> float:
        """Largest stable ``dt`` of the predictor-corrector scheme: ``2 sqrt(3) / sqrt(kappa)``."""
        return 2.0 * math.sqrt(3.0) / math.sqrt(self.spectral_radius)


def periodic_cfl_bound(dims: int = 1, mu: float = 1.0, rho: float = 1.0) -> float:
    """``dt / h`` limit of the predictor-corrector scheme on a periodic grid."""
    return 2.0 * math.sqrt(3.0) / math.sqrt(dims * 16.0 * mu / (3.0 * rho))


def spectral_radius(
    linear_rhs: Callable[[np.ndarray], np.ndarray],
    n: int,
    weights: np.ndarray | None = None,
    tol: float = 1e-12,
    maxiter: int = 500_000,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of ``u -> -linear_rhs(u)`` by shifted power iteration.

    ``weights`` defines the inner product in which the operator is self-adjoint
    (for example ``rho * h * w``); Rayleigh quotients then converge at twice
    the power-iteration rate.
    """
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= math.sqrt(x @ (w * x))

    def A(v):
        return -linear_rhs(v)

    # crude estimate for the shift: a short unshifted run
    lam = 0.0
    for _ in range(30):
        y = A(x)
        lam = x @ (w * y)
        x = y / math.sqrt(y @ (w * y))
    shift = 0.45 * lam
    prev = np.inf
    stall = 0
    for it in range(maxiter):
        y = A(x) - shift * x
        mu = x @ (w * y)
        nrm = math.sqrt(y @ (w * y))
        if nrm == 0:
            return float(shift)
        x = y / nrm
        est = mu + shift
        if abs(est - prev) <= tol * abs(est):
            stall += 1
            if stall >= 50:
                return float(est)
        else:
            stall = 0
        prev = est
    raise RuntimeError(f"power iteration did not converge in {maxiter} iterations")


def dense_spectral_radius(linear_rhs: Callable[[np.ndarray], np.ndarray], n: int) -> float:
    A = np.column_stack([linear_rhs(e) for e in np.eye(n)])
    return float(np.abs(np.linalg.eigvals(A)).max())


# -- CFL bisection ------------------------------------------------------------


def cfl_threshold(
    is_stable: Callable[[float], bool],
    lo: float,
    hi: float,
    resolution: float = 0.02,
) -> float:
    """Bisection for the stable/unstable boundary in ``dt / h``.

    ``is_stable(c)`` runs the probe protocol at ratio ``c``.  Returns the
    midpoint of the final bracket, whose width is at most ``resolution``.
    """
    if not is_stable(lo):
        raise ValueError(f"lower ratio {lo} is already unstable; widen the range")
    if is_stable(hi):
        raise ValueError(f"upper ratio {hi} is still stable; widen the range")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if is_stable(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
