"""Semi-discretizations of ``rho u_tt = (mu u_x)_x + F`` on a 1D grid.

States live in the extended layout: ``n + 2`` entries, index 0 and ``n + 1``
being ghost slots.  Slots not used by a boundary treatment stay zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .sbp_operators import (
    BorrowingConstants,
    GhostedField1D,
    Grid1D,
    SbpOperatorSet,
    Variant,
    apply_extended,
    apply_periodic,
    apply_rows,
    boundary_derivative_vectors,
    load_operator,
    sbp_bilinear_form,
)

__all__ = [
    "ConfigurationError",
    "BCKind",
    "PenaltyConfig",
    "BoundaryTreatment",
    "Material1D",
    "Wave1D",
    "tau_lower_bound",
    "enforce_neumann_ghost",
    "enforce_dirichlet_ghost",
    "rhs_gp",
    "rhs_sat_neumann",
    "rhs_sat_dirichlet",
    "rhs_injection_dirichlet",
]

ForcingFn = Callable[[np.ndarray, float], np.ndarray]


class ConfigurationError(ValueError):
    pass


class BCKind(str, enum.Enum):
    GP_NEUMANN = "gp-neumann"
    GHOST_ADDED_NEUMANN = "ghost-added-neumann"
    GP_DIRICHLET = "gp-dirichlet"
    SAT_NEUMANN = "sat-neumann"
    SAT_DIRICHLET = "sat-dirichlet"
    INJECTION_DIRICHLET = "injection-dirichlet"
    PERIODIC = "periodic"

    @property
    def uses_ghost(self) -> bool:
        return self in (BCKind.GP_NEUMANN, BCKind.GP_DIRICHLET, BCKind.GHOST_ADDED_NEUMANN)

    @property
    def variant(self) -> Variant:
        if self is BCKind.GHOST_ADDED_NEUMANN:
            return Variant.GHOST_ADDED
        return Variant.WITH_GHOST if self.uses_ghost else Variant.NO_GHOST


def tau_lower_bound(mu_boundary: float, mu_min: float, alpha: float | None = None) -> float:
    alpha = BorrowingConstants().alpha if alpha is None else alpha
    return mu_boundary / (alpha * mu_min)


@dataclass(frozen=True)
class PenaltyConfig:
    """Dirichlet SAT strength; ``tau=None`` means ``(1 + tau_margin)`` times the bound."""

    tau: float | None = None
    tau_margin: float = 0.2

    def resolve(self, mu_boundary: float, mu_min: float, alpha: float | None = None) -> float:
        bound = tau_lower_bound(mu_boundary, mu_min, alpha)
        tau = (1.0 + self.tau_margin) * bound if self.tau is None else float(self.tau)
        if tau < bound * (1.0 - 1e-12):
            raise ConfigurationError(f"tau = {tau:.6g} is below the stability bound {bound:.6g}")
        return tau


@dataclass(frozen=True)
class BoundaryTreatment:
    kind: BCKind
    data: Callable[[float], float] | None = None
    penalty: PenaltyConfig = PenaltyConfig()

    def value(self, t: float) -> float:
        return 0.0 if self.data is None else float(self.data(t))


@dataclass
class Material1D:
    rho: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        if self.rho.shape != self.mu.shape:
            raise ValueError("rho and mu must have the same length")
        if np.any(self.rho <= 0) or np.any(self.mu <= 0):
            raise ValueError("material parameters must be positive")

    @classmethod
    def constant(cls, n: int, rho: float = 1.0, mu: float = 1.0) -> "Material1D":
        return cls(np.full(n, rho), np.full(n, mu))


# -- ghost enforcement ------------------------------------------------------


def _ghost_value_for_derivative(op: SbpOperatorSet, u_side: np.ndarray, target: float, h: float) -> float:
    # u_side: extended values seen from the boundary (ghost first); solves c^T u_side = h * target
    c = op.boundary_derivative.as_float()
    if c[0] == 0:
        raise ConfigurationError("boundary derivative does not use the ghost point")
    return (h * target - c[1:] @ u_side[1:len(c)]) / c[0]


def enforce_neumann_ghost(u, f: float, h: float, op: SbpOperatorSet | None = None, side: str = "left"):
    """Set the ghost so that the fourth-order boundary derivative equals ``f``.

    ``u`` is a :class:`GhostedField1D` or an extended array (updated in place).
    On the right side the outward derivative convention ``b_n`` is used.
    """
    op = load_operator(Variant.WITH_GHOST) if op is None else op
    if isinstance(u, GhostedField1D):
        ext = u.extended()
        enforce_neumann_ghost(ext, f, h, op, side)
        if side == "left":
            u.left_ghost = float(ext[0])
        else:
            u.right_ghost = float(ext[-1])
        return u
    if side == "left":
        u[0] = _ghost_value_for_derivative(op, u, f, h)
    else:
        u[-1] = _ghost_value_for_derivative(op, u[::-1], -f, h)
    return u


def _first_row(op, mu, u, h, side):
    if side == "left":
        return float(apply_rows(op, mu, u, h, 0))
    return float(apply_rows(op, mu[::-1], u[::-1], h, 0))


def _ghost_coefficient(op, mu, h, side):
    m = mu if side == "left" else mu[::-1]
    return float(op.closure_f[0, 0, :] @ m[: op.closure_f.shape[2]]) / (h * h)


def enforce_dirichlet_ghost(u, target: float, mu, h: float, op: SbpOperatorSet | None = None, side: str = "left"):
    """Set the ghost so that the first closure row ``(G u)_1`` equals ``target``."""
    op = load_operator(Variant.WITH_GHOST) if op is None else op
    mu = np.asarray(mu, dtype=float)
    if isinstance(u, GhostedField1D):
        ext = u.extended()
        enforce_dirichlet_ghost(ext, target, mu, h, op, side)
        if side == "left":
            u.left_ghost = float(ext[0])
        else:
            u.right_ghost = float(ext[-1])
        return u
    gi = 0 if side == "left" else -1
    coef = _ghost_coefficient(op, mu, h, side)
    if coef == 0:
        raise ConfigurationError("ghost coefficient vanishes (mu_1 = 0?)")
    u[gi] = 0.0
    base = _first_row(op, mu, u, h, side)
    u[gi] = (target - base) / coef
    return u


# -- semi-discretization ----------------------------------------------------


@dataclass
class Wave1D:
    grid: Grid1D
    material: Material1D
    left: BoundaryTreatment
    right: BoundaryTreatment
    forcing: ForcingFn | None = None
    forcing_tt: ForcingFn | None = None
    alpha: float = BorrowingConstants().alpha
    left_op: SbpOperatorSet = field(init=False)
    right_op: SbpOperatorSet = field(init=False)

    def __post_init__(self):
        n = self.grid.n
        if self.material.rho.shape != (n,):
            raise ValueError("material length differs from the grid size")
        periodic = [self.left.kind is BCKind.PERIODIC, self.right.kind is BCKind.PERIODIC]
        if any(periodic) and not all(periodic):
            raise ConfigurationError("periodic treatment must be used on both sides")
        self.periodic = all(periodic)
        self.left_op = load_operator(self.left.kind.variant)
        self.right_op = load_operator(self.right.kind.variant)
        h = self.grid.h
        self.weights = self.left_op.norm.weights(n) if not self.periodic else np.ones(n)
        bl, br = boundary_derivative_vectors(self.left_op, self.right_op, n, h)
        self._bl, self._br = bl, br
        mu = self.material.mu
        r = BorrowingConstants().r
        self.tau = {}
        if self.left.kind is BCKind.SAT_DIRICHLET:
            self.tau["left"] = self.left.penalty.resolve(mu[0], mu[:r].min(), self.alpha)
        if self.right.kind is BCKind.SAT_DIRICHLET:
            self.tau["right"] = self.right.penalty.resolve(mu[-1], mu[-r:].min(), self.alpha)
        self._has_data = (
            self.forcing is not None
            or any(t.data is not None for t in (self.left, self.right))
        )

    # layout helpers
    @property
    def n(self) -> int:
        return self.grid.n

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n + 2)

    def extend(self, core) -> np.ndarray:
        u = self.zeros()
        u[1:-1] = core
        return u

    def _sides(self):
        return (("left", self.left, 1), ("right", self.right, self.n))

    # right-hand side
    def operator(self, u: np.ndarray) -> np.ndarray:
        """``G(mu) u`` at the core points (no data, no penalties)."""
        if self.periodic:
            return apply_periodic(self.material.mu, u[1:-1], self.grid.h)
        return apply_extended(self.left_op, self.right_op, self.material.mu, u, self.grid.h)

    def penalty(self, u: np.ndarray, t: float, homogeneous: bool = False) -> np.ndarray:
        n, h = self.n, self.grid.h
        mu, w = self.material.mu, self.weights
        p = np.zeros(n)
        for side, bc, _ in self._sides():
            data = 0.0 if homogeneous else bc.value(t)
            if side == "left":
                b, idx, sign, mu_b = self._bl[1:-1], 0, 1.0, mu[0]
            else:
                b, idx, sign, mu_b = self._br[1:-1], n - 1, -1.0, mu[-1]
            if bc.kind is BCKind.SAT_NEUMANN:
                p[idx] += sign * mu_b / (h * w[idx]) * (b @ u[1:-1] - data)
            elif bc.kind is BCKind.SAT_DIRICHLET:
                jump = u[1:-1][idx] - data
                p -= sign * mu_b * jump * b / (h * w)
                p[idx] -= mu_b * self.tau[side] / h * jump / (h * w[idx])
        return p

    def accel(self, u: np.ndarray, t: float, homogeneous: bool = False) -> np.ndarray:
        """``rho^{-1}(G u + F + penalties)`` in extended layout."""
        core = self.operator(u) + self.penalty(u, t, homogeneous)
        if self.forcing is not None and not homogeneous:
            core = core + self.forcing(self.grid.x, t)
        core /= self.material.rho
        for _, bc, j in self._sides():
            if bc.kind is BCKind.INJECTION_DIRICHLET:
                core[j - 1] = 0.0
        return self.extend(core)

    def source_tt(self, t: float, dt: float) -> np.ndarray | None:
        """Second time derivative of the data part of :meth:`accel`."""
        if not self._has_data:
            return None
        boundary_data = any(b.data is not None for b in (self.left, self.right))
        if self.forcing_tt is not None and not boundary_data:
            core = self.forcing_tt(self.grid.x, t) / self.material.rho
            for _, bc, j in self._sides():
                if bc.kind is BCKind.INJECTION_DIRICHLET:
                    core[j - 1] = 0.0
            return self.extend(core)
        z = self.zeros()
        return (self.accel(z, t + dt) - 2 * self.accel(z, t) + self.accel(z, t - dt)) / dt**2

    # enforcement hook
    def enforce(self, u: np.ndarray, ctx) -> None:
        h, mu, rho = self.grid.h, self.material.mu, self.material.rho
        t, dt = ctx.t, ctx.dt
        for side, bc, j in self._sides():
            if bc.kind in (BCKind.GP_NEUMANN, BCKind.GHOST_ADDED_NEUMANN):
                enforce_neumann_ghost(u, bc.value(t), h, self.left_op if side == "left" else self.right_op, side)
            elif bc.kind is BCKind.INJECTION_DIRICHLET:
                u[j] = bc.value(t)
            elif bc.kind is BCKind.GP_DIRICHLET:
                op = self.left_op if side == "left" else self.right_op
                i = j - 1
                if ctx.stage == "predictor":
                    s = 0.0 if ctx.source_tt is None else ctx.source_tt[j] * rho[i]
                    target = (
                        2 * _first_row(op, mu, ctx.curr, h, side)
                        - _first_row(op, mu, ctx.prev, h, side)
                        - dt * dt * s
                    )
                else:
                    before = bc.value(t - dt) if ctx.curr is None else ctx.curr[j]
                    f = 0.0 if self.forcing is None else self.forcing(self.grid.x, t)[i]
                    target = rho[i] * (bc.value(t + dt) - 2 * u[j] + before) / dt**2 - f
                enforce_dirichlet_ghost(u, target, mu, h, op, side)

    # energy
    def bilinear_form(self) -> np.ndarray:
        if self.periodic:
            G = apply_periodic(self.material.mu[:, None], np.eye(self.n), self.grid.h)
            M = -self.grid.h * G
            return 0.5 * (M + M.T)
        return sbp_bilinear_form(self.left_op, self.material.mu, self.grid.h, self.right_op)

    def boundary_energy(self, u: np.ndarray) -> float:
        """SAT-Dirichlet boundary contributions to the semi-discrete energy (zero data)."""
        h, mu = self.grid.h, self.material.mu
        e = 0.0
        if self.left.kind is BCKind.SAT_DIRICHLET:
            e += 2 * mu[0] * u[1] * (self._bl @ u) + self.tau["left"] / h * mu[0] * u[1] ** 2
        if self.right.kind is BCKind.SAT_DIRICHLET:
            e += -2 * mu[-1] * u[-2] * (self._br @ u) + self.tau["right"] / h * mu[-1] * u[-2] ** 2
        return float(e)

    def energy(self, u: np.ndarray, ut: np.ndarray, M: np.ndarray | None = None) -> float:
        """``(u_t, rho u_t)_h + S(u, u)`` plus SAT-Dirichlet boundary terms."""
        M = self.bilinear_form() if M is None else M
        c, ct = u[1:-1], ut[1:-1]
        kinetic = self.grid.h * np.sum(self.weights * self.material.rho * ct * ct)
        return float(kinetic + c @ M @ c + self.boundary_energy(u))

    def homogeneous_core_operator(self) -> Callable[[np.ndarray], np.ndarray]:
        """Linear map ``u_core -> rho^{-1} L u_core`` with zero data, ghosts eliminated.

        Injection rows are dropped from the map (boundary values pinned to zero).
        GP-Dirichlet is not a pure spatial operator and is rejected.
        """
        if BCKind.GP_DIRICHLET in (self.left.kind, self.right.kind):
            raise ConfigurationError("GP-Dirichlet couples time levels; no spatial operator")

        class _Ctx:
            stage, t, dt, curr, prev, source_tt = "corrector", 0.0, 1.0, None, None, None

        def apply(core):
            u = self.extend(core)
            self.enforce(u, _Ctx)
            return self.accel(u, 0.0, homogeneous=True)[1:-1]

        return apply


# -- single-evaluation conveniences -----------------------------------------


def _as_ext(u, need_left=False, need_right=False):
    if isinstance(u, GhostedField1D):
        return u.extended(need_left, need_right)
    return np.asarray(u, dtype=float)


def _state(w: Wave1D, u) -> np.ndarray:
    u = _as_ext(u)
    return u if u.shape[0] == w.n + 2 else w.extend(u)


def _single(kind: BCKind, mat: Material1D, h: float, data=None, penalty=PenaltyConfig(), forcing=None):
    n = mat.rho.shape[0]
    bc = BoundaryTreatment(kind, data, penalty)
    return Wave1D(Grid1D(n, h), mat, bc, bc, forcing)


def rhs_gp(op: SbpOperatorSet, mat: Material1D, u, h: float, t: float = 0.0, forcing=None) -> np.ndarray:
    """``rho^{-1}(G~ u + F)`` at the core points; ghosts must already be set."""
    if op.variant is not Variant.WITH_GHOST:
        raise ConfigurationError("rhs_gp needs the with-ghost operator")
    ext = _as_ext(u, True, True)
    out = apply_extended(op, op, mat.mu, ext, h)
    if forcing is not None:
        out = out + forcing(Grid1D(mat.mu.shape[0], h).x, t)
    return out / mat.rho


def rhs_sat_neumann(op: SbpOperatorSet, mat: Material1D, u, h: float, f=None, t: float = 0.0, forcing=None):
    if op.variant is not Variant.NO_GHOST:
        raise ConfigurationError("SAT treatments need the no-ghost operator")
    w = _single(BCKind.SAT_NEUMANN, mat, h, f, forcing=forcing)
    return w.accel(_state(w, u), t)[1:-1]


def rhs_sat_dirichlet(op, mat, u, h, g=None, cfg: PenaltyConfig = PenaltyConfig(), t=0.0, forcing=None):
    if op.variant is not Variant.NO_GHOST:
        raise ConfigurationError("SAT treatments need the no-ghost operator")
    w = _single(BCKind.SAT_DIRICHLET, mat, h, g, cfg, forcing)
    return w.accel(_state(w, u), t)[1:-1]


def rhs_injection_dirichlet(op, mat, u, h, g=None, t=0.0, forcing=None):
    if op.variant is not Variant.NO_GHOST:
        raise ConfigurationError("injection needs the no-ghost operator")
    w = _single(BCKind.INJECTION_DIRICHLET, mat, h, g, forcing=forcing)
    return w.accel(_state(w, u), t)[1:-1]
