"""Two-block 2D wave solver with a 1:2 mesh-refinement interface.

The coarse block covers ``y in [-L, 0]`` with spacing ``H = 2h``, the fine
block ``y in [0, L]`` with spacing ``h``; both are periodic in ``x`` over
``[0, L)``.  Arrays are stored as ``(rows, columns) = (y, x)`` in extended
layout: one ghost row below and one above the core rows.

Fine ext rows: ``0`` ghost (below the interface), ``1`` interface,
``ny_f`` outer boundary.  Coarse ext rows: ``1`` outer boundary, ``ny_c``
interface, ``ny_c + 1`` ghost.  Outer boundaries use injection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .linalg import BandedMatrix, BandedLU, condition_2norm, lu_factor, solve
from .sbp_operators import (
    BorrowingConstants,
    SbpOperatorSet,
    Variant,
    apply_periodic,
    load_operator,
    sbp_bilinear_form,
)
from .timestepping import StageContext, TwoLevelState, initialize, pc_step

__all__ = [
    "Scheme",
    "CompositeGrid2D",
    "Material2D",
    "InterpolationOperator",
    "Block2D",
    "InterfaceCoupler",
    "InterfaceProblem",
    "EnergyLedger",
    "assemble_gp_original",
    "assemble_gp_improved",
    "sat3_tau_bound",
    "step_interface",
]

DataFn = Callable[[str, np.ndarray, np.ndarray, float], np.ndarray]


class Scheme(str, enum.Enum):
    GP_ORIGINAL = "gp-original"
    GP_IMPROVED = "gp-improved"
    SAT3 = "sat3"


# -- grid and material ---------------------------------------------------------


@dataclass(frozen=True)
class CompositeGrid2D:
    n: int
    length: float = 4 * math.pi

    def __post_init__(self):
        if self.n < 12:
            raise ValueError("need at least 12 coarse points per direction")

    @property
    def H(self) -> float:
        return self.length / self.n

    @property
    def h(self) -> float:
        return 0.5 * self.H

    @property
    def shape_fine(self) -> tuple[int, int]:
        return (2 * self.n + 1, 2 * self.n)

    @property
    def shape_coarse(self) -> tuple[int, int]:
        return (self.n + 1, self.n)

    def mesh(self, block: str) -> tuple[np.ndarray, np.ndarray]:
        """Core coordinates ``(X, Y)`` of a block, each of shape (ny, nx)."""
        if block == "fine":
            x = self.h * np.arange(2 * self.n)
            y = self.h * np.arange(2 * self.n + 1)
        else:
            x = self.H * np.arange(self.n)
            y = -self.length + self.H * np.arange(self.n + 1)
        return np.meshgrid(x, y)


@dataclass
class Material2D:
    rho_f: np.ndarray
    mu_f: np.ndarray
    rho_c: np.ndarray
    mu_c: np.ndarray

    def __post_init__(self):
        for name in ("rho_f", "mu_f", "rho_c", "mu_c"):
            a = np.asarray(getattr(self, name), dtype=float)
            if np.any(a <= 0):
                raise ValueError(f"{name} must be positive")
            setattr(self, name, a)

    @classmethod
    def from_functions(cls, grid: CompositeGrid2D, rho: Callable, mu: Callable) -> "Material2D":
        """``rho(block, X, Y)`` and ``mu(block, X, Y)`` sampled on both blocks."""
        Xf, Yf = grid.mesh("fine")
        Xc, Yc = grid.mesh("coarse")
        full = lambda fn, b, X, Y: np.broadcast_to(np.asarray(fn(b, X, Y), dtype=float), X.shape).copy()
        return cls(full(rho, "fine", Xf, Yf), full(mu, "fine", Xf, Yf),
                   full(rho, "coarse", Xc, Yc), full(mu, "coarse", Xc, Yc))

    @classmethod
    def piecewise_constant(cls, grid, rho_c=1.0, mu_c=1.0, rho_f=1.0, mu_f=0.25) -> "Material2D":
        return cls.from_functions(
            grid,
            lambda b, X, Y: rho_f if b == "fine" else rho_c,
            lambda b, X, Y: mu_f if b == "fine" else mu_c,
        )


# -- interpolation and restriction ------------------------------------------------

_HANGING = {
    4: ((-1, 0, 1, 2), (-1 / 16, 9 / 16, 9 / 16, -1 / 16)),
    6: ((-2, -1, 0, 1, 2, 3), (3 / 256, -25 / 256, 150 / 256, 150 / 256, -25 / 256, 3 / 256)),
}


@dataclass(frozen=True)
class InterpolationOperator:
    """Coarse-to-fine interpolation ``P`` and its compatible restriction ``R = P^T / 2``."""

    order: int = 4

    def __post_init__(self):
        if self.order not in _HANGING:
            raise ValueError("interpolation order must be 4 or 6")

    @property
    def offsets(self):
        return _HANGING[self.order][0]

    @property
    def weights(self):
        return _HANGING[self.order][1]

    def interpolate(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        f = np.empty(c.shape[:-1] + (2 * c.shape[-1],))
        f[..., 0::2] = c
        hang = np.zeros_like(c)
        for off, w in zip(self.offsets, self.weights):
            hang += w * np.roll(c, -off, axis=-1)
        f[..., 1::2] = hang
        return f

    def restrict(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        odd = f[..., 1::2]
        out = np.array(f[..., 0::2])
        for off, w in zip(self.offsets, self.weights):
            out += w * np.roll(odd, off, axis=-1)
        return 0.5 * out

    def matrix(self, n: int) -> np.ndarray:
        return np.column_stack([self.interpolate(e) for e in np.eye(n)])

    def restriction_matrix(self, n: int) -> np.ndarray:
        return np.column_stack([self.restrict(e) for e in np.eye(2 * n)])


# -- one block -------------------------------------------------------------------


@numba.njit(cache=True)
def _bulk_coefficients(mu):
    # five-point weights of the interior stencil, x and y directions; y rows only outside the closures
    ny, nx = mu.shape
    cx = np.zeros((5, ny, nx))
    cy = np.zeros((5, ny, nx))
    for j in range(ny):
        for i in range(nx):
            for d in range(2):
                if d == 0:
                    b0 = mu[j, (i - 2) % nx]
                    b1 = mu[j, (i - 1) % nx]
                    b3 = mu[j, (i + 1) % nx]
                    b4 = mu[j, (i + 2) % nx]
                    c = cx
                else:
                    if j < 6 or j >= ny - 6:
                        continue
                    b0, b1, b3, b4 = mu[j - 2, i], mu[j - 1, i], mu[j + 1, i], mu[j + 2, i]
                    c = cy
                b2 = mu[j, i]
                c[0, j, i] = -b0 / 8 + b1 / 6 - b2 / 8
                c[1, j, i] = b0 / 6 + b1 / 2 + b2 / 2 + b3 / 6
                c[2, j, i] = -(b0 / 24 + 5 * b1 / 6 + 3 * b2 / 4 + 5 * b3 / 6 + b4 / 24)
                c[3, j, i] = b1 / 6 + b2 / 2 + b3 / 2 + b4 / 6
                c[4, j, i] = -b2 / 8 + b3 / 6 - b4 / 8
    return cx, cy


@numba.njit(cache=True)
def _bulk(cx, cy, u, out, inv_h2):
    _, ny, nx = cx.shape
    for j in range(ny):
        r = j + 1
        ydir = 6 <= j < ny - 6
        for i in range(nx):
            im2 = i - 2 if i >= 2 else i - 2 + nx
            im1 = i - 1 if i >= 1 else i - 1 + nx
            ip1 = i + 1 if i + 1 < nx else i + 1 - nx
            ip2 = i + 2 if i + 2 < nx else i + 2 - nx
            s = (cx[0, j, i] * u[r, im2] + cx[1, j, i] * u[r, im1] + cx[2, j, i] * u[r, i]
                 + cx[3, j, i] * u[r, ip1] + cx[4, j, i] * u[r, ip2])
            if ydir:
                s += (cy[0, j, i] * u[r - 2, i] + cy[1, j, i] * u[r - 1, i] + cy[2, j, i] * u[r, i]
                      + cy[3, j, i] * u[r + 1, i] + cy[4, j, i] * u[r + 2, i])
            out[j, i] = s * inv_h2


@dataclass
class Block2D:
    """Variable-coefficient Laplacian-type operator on one block.

    ``low`` and ``high`` are the operator sets used at the ``y``-min and
    ``y``-max ends.
    """

    mu: np.ndarray
    h: float
    low: SbpOperatorSet
    high: SbpOperatorSet

    def __post_init__(self):
        self.mu = np.ascontiguousarray(self.mu, dtype=float)
        ny, nx = self.mu.shape
        self.ny, self.nx = ny, nx
        self._cx, self._cy = _bulk_coefficients(self.mu)
        self.weights = self.low.norm.weights(ny)
        self._t_low = np.tensordot(self.low.closure_f, self.mu[:8], axes=([2], [0]))  # (6, 9, nx)
        self._t_high = np.tensordot(self.high.closure_f, self.mu[::-1][:8], axes=([2], [0]))
        self.b_low = self.low.boundary_derivative.as_float()
        self.b_high = self.high.boundary_derivative.as_float()

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``(G_x + G_y) u`` at the core rows; ``u`` in extended layout."""
        out = np.empty((self.ny, self.nx))
        _bulk(self._cx, self._cy, np.ascontiguousarray(u), out, 1.0 / self.h**2)
        inv = 1.0 / self.h**2
        out[:6] += np.einsum("qkx,kx->qx", self._t_low, u[:9]) * inv
        out[self.ny - 6:] += (np.einsum("qkx,kx->qx", self._t_high, u[::-1][:9]) * inv)[::-1]
        return out

    def row(self, u: np.ndarray, end: str) -> np.ndarray:
        """Single boundary row of ``(G_x + G_y) u`` (row 1 or row ``ny``)."""
        inv = 1.0 / self.h**2
        if end == "low":
            gy = np.einsum("kx,kx->x", self._t_low[0], u[:9]) * inv
            gx = apply_periodic(self.mu[0], u[1], self.h)
        else:
            gy = np.einsum("kx,kx->x", self._t_high[0], u[::-1][:9]) * inv
            gx = apply_periodic(self.mu[-1], u[-2], self.h)
        return gx + gy

    def ghost_coefficient(self, end: str) -> np.ndarray:
        """Coefficient of the ghost value in the boundary row, per column."""
        t = self._t_low if end == "low" else self._t_high
        return t[0, 0] / self.h**2

    def flux(self, u: np.ndarray, end: str) -> np.ndarray:
        """``mu * dv/dy`` at the boundary row (derivative in the +y direction)."""
        if end == "low":
            return self.mu[0] * (self.b_low @ u[: len(self.b_low)]) / self.h
        return -self.mu[-1] * (self.b_high @ u[::-1][: len(self.b_high)]) / self.h

    def flux_ghost_coefficient(self, end: str) -> np.ndarray:
        if end == "low":
            return self.mu[0] * self.b_low[0] / self.h
        return -self.mu[-1] * self.b_high[0] / self.h

    def derivative_vector(self, end: str) -> np.ndarray:
        """Boundary-derivative weights on the core rows (``1/h`` included)."""
        v = np.zeros(self.ny)
        if end == "low":
            c = self.b_low[1:]
            v[: len(c)] = c / self.h
        else:
            c = self.b_high[1:]
            v[self.ny - len(c):] = -c[::-1] / self.h
        return v

    def inner(self, u: np.ndarray, v: np.ndarray, weight: np.ndarray | None = None) -> float:
        """``h^2 sum w_j u v`` over core rows (``u``, ``v`` core shaped)."""
        p = u * v if weight is None else u * v * weight
        return float(self.h**2 * np.sum(self.weights[:, None] * p))

    def bilinear(self, u_core: np.ndarray, v_core: np.ndarray) -> float:
        """``S(u, v) = S_x + S_y`` assembled from dense 1D forms (certifier path)."""
        h = self.h
        Sx = 0.0
        for j in range(self.ny):
            Gx = apply_periodic(self.mu[j], v_core[j], h)
            Sx -= h * h * self.weights[j] * (u_core[j] @ Gx)
        Sy = 0.0
        cache = {}
        for i in range(self.nx):
            key = self.mu[:, i].tobytes()
            if key not in cache:
                cache[key] = sbp_bilinear_form(self.low, self.mu[:, i], h, self.high)
            Sy += h * (u_core[:, i] @ cache[key] @ v_core[:, i])
        return float(Sx + Sy)


# -- coupler ----------------------------------------------------------------------


@dataclass
class InterfaceCoupler:
    scheme: Scheme
    interp: InterpolationOperator
    matrix: BandedMatrix | None = None
    factor: BandedLU | None = None
    pivot: bool = False

    @property
    def nnz(self) -> int:
        return 0 if self.matrix is None else self.matrix.nnz

    def condition(self) -> float:
        return condition_2norm(self.matrix)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve(self.factor, rhs)


def sat3_tau_bound(mu_f: np.ndarray, mu_c: np.ndarray, alpha: float | None = None) -> float:
    """Lower bound for the fine interface penalty ``tau_f`` (``tau_c = 2 tau_f``)."""
    consts = BorrowingConstants()
    alpha = consts.alpha if alpha is None else alpha
    r = consts.r
    bf = mu_f[0] ** 2 / (2 * mu_f[:r].min(axis=0) * alpha)
    bc = mu_c[-1] ** 2 / (2 * mu_c[-r:].min(axis=0) * alpha)
    return float(max(bf.max(), bc.max()))


def assemble_gp_improved(fine: Block2D, coarse: Block2D, rho_f_g, rho_c_g, interp: InterpolationOperator,
                         eta: bool = True) -> BandedMatrix:
    """Cyclic banded matrix of the coarse-ghost flux condition.

    Row ``i``: coarse flux ghost weight plus ``h w_1 R rho_f P (ghost weight / rho_c)``.
    """
    n = coarse.nx
    hw1 = fine.h * fine.weights[0]
    diag = coarse.flux_ghost_coefficient("high")
    gc = coarse.ghost_coefficient("high") / rho_c_g
    half = len(interp.offsets) // 2 + 1  # band half-width of R P
    m = BandedMatrix.zeros(n, half, half, periodic=True)
    for i in range(n):
        m.add(i, i, diag[i])
    if eta:
        Pm = interp.matrix(n)
        Rm = interp.restriction_matrix(n)
        K = hw1 * Rm @ (rho_f_g[:, None] * Pm) * gc[None, :]
        for i in range(n):
            for j in np.nonzero(np.abs(K[i]) > 0)[0]:
                m.add(i, j, K[i, j])
    return m


def _gp_original_index(n: int):
    """Interleaved unknown/row order: per coarse cell ``i`` -> (fine 2i, fine 2i+1, coarse i)."""
    fine = np.empty(2 * n, dtype=int)
    fine[0::2] = 3 * np.arange(n)
    fine[1::2] = 3 * np.arange(n) + 1
    coarse = 3 * np.arange(n) + 2
    return fine, coarse


def assemble_gp_original(fine: Block2D, coarse: Block2D, rho_f_g, rho_c_g,
                         interp: InterpolationOperator) -> BandedMatrix:
    """Cyclic banded matrix for ``3n`` ghosts: 2n acceleration-continuity rows and n flux rows."""
    n = coarse.nx
    fidx, cidx = _gp_original_index(n)
    Pm = interp.matrix(n)
    Rm = interp.restriction_matrix(n)
    gf = fine.ghost_coefficient("low") / rho_f_g
    gc = coarse.ghost_coefficient("high") / rho_c_g
    ff = fine.flux_ghost_coefficient("low")
    fc = coarse.flux_ghost_coefficient("high")
    m = BandedMatrix.zeros(3 * n, 8, 8, periodic=True)
    for j in range(2 * n):
        m.add(fidx[j], fidx[j], gf[j])
        for i in np.nonzero(Pm[j])[0]:
            m.add(fidx[j], cidx[i], -Pm[j, i] * gc[i])
    for i in range(n):
        m.add(cidx[i], cidx[i], fc[i])
        for j in np.nonzero(Rm[i])[0]:
            m.add(cidx[i], fidx[j], -Rm[i, j] * ff[j])
    return m


# -- the coupled problem -------------------------------------------------------------


@dataclass
class EnergyLedger:
    t: list = field(default_factory=list)
    kinetic_f: list = field(default_factory=list)
    potential_f: list = field(default_factory=list)
    kinetic_c: list = field(default_factory=list)
    potential_c: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def record(self, t, kf, pf, kc, pc, total):
        for name, v in zip(("t", "kinetic_f", "potential_f", "kinetic_c", "potential_c", "total"),
                           (t, kf, pf, kc, pc, total)):
            getattr(self, name).append(float(v))

    def relative_drift(self) -> float:
        e = np.asarray(self.total)
        return float(np.abs(e - e[0]).max() / abs(e[0]))

    def rows(self):
        return list(zip(self.t, self.kinetic_f, self.potential_f, self.kinetic_c, self.potential_c, self.total))


class InterfaceProblem:
    """Semi-discrete two-block problem; implements the integrator protocol."""

    def __init__(
        self,
        grid: CompositeGrid2D,
        material: Material2D,
        scheme: Scheme | str = Scheme.GP_IMPROVED,
        order: int = 4,
        boundary: DataFn | None = None,
        forcing: DataFn | None = None,
        forcing_tt: DataFn | None = None,
        tau_margin: float = 0.2,
        eta: bool = True,
        sat_mu_weighted: bool = False,
    ):
        self.grid = grid
        self.material = material
        self._inv_rho_f = 1.0 / material.rho_f
        self._inv_rho_c = 1.0 / material.rho_c
        self.scheme = Scheme(scheme)
        self.boundary = boundary
        self.forcing = forcing
        self.forcing_tt = forcing_tt
        self.eta = eta
        self.sat_mu_weighted = sat_mu_weighted
        gp = load_operator(Variant.WITH_GHOST)
        ngp = load_operator(Variant.NO_GHOST)
        f_low = gp if self.scheme is Scheme.GP_ORIGINAL else ngp
        c_high = ngp if self.scheme is Scheme.SAT3 else gp
        self.fine = Block2D(material.mu_f, grid.h, f_low, ngp)
        self.coarse = Block2D(material.mu_c, grid.H, ngp, c_high)
        self.shape_f = (grid.shape_fine[0] + 2, grid.shape_fine[1])
        self.shape_c = (grid.shape_coarse[0] + 2, grid.shape_coarse[1])
        self.size_f = self.shape_f[0] * self.shape_f[1]
        self.size = self.size_f + self.shape_c[0] * self.shape_c[1]
        self.mesh_f = grid.mesh("fine")
        self.mesh_c = grid.mesh("coarse")
        interp = InterpolationOperator(order)
        rf, rc = material.rho_f[0], material.rho_c[-1]
        if self.scheme is Scheme.GP_IMPROVED:
            m = assemble_gp_improved(self.fine, self.coarse, rf, rc, interp, eta)
            self.coupler = InterfaceCoupler(self.scheme, interp, m, lu_factor(m, pivot=False), False)
        elif self.scheme is Scheme.GP_ORIGINAL:
            m = assemble_gp_original(self.fine, self.coarse, rf, rc, interp)
            self.coupler = InterfaceCoupler(self.scheme, interp, m, lu_factor(m, pivot=True), True)
            self._fidx, self._cidx = _gp_original_index(grid.n)
        else:
            self.coupler = InterfaceCoupler(self.scheme, interp)
            self.tau_bound = sat3_tau_bound(material.mu_f, material.mu_c)
            self.tau_f = (1.0 + tau_margin) * self.tau_bound
            self.tau_c = 2.0 * self.tau_f
        self.P = interp.interpolate
        self.R = interp.restrict

    # layout
    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def split(self, u: np.ndarray):
        return u[: self.size_f].reshape(self.shape_f), u[self.size_f:].reshape(self.shape_c)

    def pack(self, f_core: np.ndarray, c_core: np.ndarray) -> np.ndarray:
        u = self.zeros()
        f, c = self.split(u)
        f[1:-1] = f_core
        c[1:-1] = c_core
        return u

    def sample(self, fn: DataFn, t: float) -> np.ndarray:
        return self.pack(fn("fine", *self.mesh_f, t), fn("coarse", *self.mesh_c, t))

    # right-hand side
    def _forcing(self, fn, t):
        if fn is None:
            return None, None
        return fn("fine", *self.mesh_f, t), fn("coarse", *self.mesh_c, t)

    def sat3_penalties(self, f: np.ndarray, c: np.ndarray):
        # tau carries the units of mu, so the continuity penalty is tau / h on both sides
        fb, cb = self.fine, self.coarse
        h, H = fb.h, cb.h
        muf, muc = fb.mu[0], cb.mu[-1]
        fG, cG = f[1], c[-2]
        fp, cp = fb.flux(f, "low"), cb.flux(c, "high")
        jf = fG - self.P(cG)
        jc = cG - self.R(fG)
        pf = np.zeros((fb.ny, fb.nx))
        pc = np.zeros((cb.ny, cb.nx))
        bL = fb.derivative_vector("low")
        bR = cb.derivative_vector("high")
        pf -= 0.5 * np.outer(bL, muf * jf)
        sf, sc = (muf, muc) if self.sat_mu_weighted else (1.0, 1.0)
        pf[0] += -sf * self.tau_f / h * jf + 0.5 * (fp - self.P(cp))
        pf /= (h * fb.weights)[:, None]
        pc += 0.5 * np.outer(bR, muc * jc)
        pc[-1] += -sc * self.tau_c / (2 * h) * jc - 0.5 * (cp - self.R(fp))
        pc /= (H * cb.weights)[:, None]
        return pf, pc

    def _accel(self, u: np.ndarray, Ff, Fc) -> np.ndarray:
        f, c = self.split(u)
        gf = self.fine.apply(f)
        gc = self.coarse.apply(c)
        if self.scheme is Scheme.SAT3:
            pf, pc = self.sat3_penalties(f, c)
            gf += pf
            gc += pc
        if Ff is not None:
            gf += Ff
            gc += Fc
        out = self.zeros()
        of, oc = self.split(out)
        af, ac = of[1:-1], oc[1:-1]
        np.multiply(gf, self._inv_rho_f, out=af)
        np.multiply(gc, self._inv_rho_c, out=ac)
        af[-1] = 0.0
        ac[0] = 0.0
        if self.scheme is Scheme.GP_IMPROVED:
            af[0] = self.P(ac[-1])
        return out

    def accel(self, u: np.ndarray, t: float, homogeneous: bool = False) -> np.ndarray:
        Ff, Fc = (None, None) if homogeneous else self._forcing(self.forcing, t)
        return self._accel(u, Ff, Fc)

    def source_tt(self, t: float, dt: float):
        if self.forcing is None:
            return None
        z = self.zeros()
        if self.forcing_tt is not None:
            return self._accel(z, *self._forcing(self.forcing_tt, t))
        return (self.accel(z, t + dt) - 2 * self.accel(z, t) + self.accel(z, t - dt)) / dt**2

    # enforcement
    def _outer(self, f, c, t):
        if self.boundary is None:
            f[-2] = 0.0
            c[1] = 0.0
        else:
            Xf, Yf = self.mesh_f
            Xc, Yc = self.mesh_c
            f[-2] = self.boundary("fine", Xf[-1], Yf[-1], t)
            c[1] = self.boundary("coarse", Xc[0], Yc[0], t)

    def _forcing_rows(self, t):
        if self.forcing is None:
            return 0.0, 0.0
        Xf, Yf = self.mesh_f
        Xc, Yc = self.mesh_c
        return self.forcing("fine", Xf[0], Yf[0], t), self.forcing("coarse", Xc[-1], Yc[-1], t)

    def _solve_improved(self, f, c, t):
        f[1] = self.P(c[-2])
        c[-1] = 0.0
        Ff, Fc = self._forcing_rows(t)
        hw1 = self.fine.h * self.fine.weights[0]
        rf, rc = self.material.rho_f[0], self.material.rho_c[-1]
        ac = (self.coarse.row(c, "high") + Fc) / rc
        eta0 = rf * self.P(ac) - (self.fine.row(f, "low") + Ff)
        target = self.fine.flux(f, "low")
        if self.eta:
            target = target - hw1 * eta0
        rhs = self.R(target) - self.coarse.flux(c, "high")
        c[-1] = self.coupler.solve(rhs)

    def interface_jump(self, u: np.ndarray, homogeneous: bool = True, t: float = 0.0) -> np.ndarray:
        """Jump of the interface-row accelerations, fine minus interpolated coarse."""
        f, c = self.split(u)
        af = self.fine.row(f, "low")
        ac = self.coarse.row(c, "high")
        if not homogeneous:
            Ff, Fc = self._forcing_rows(t)
            af, ac = af + Ff, ac + Fc
        return af / self.material.rho_f[0] - self.P(ac / self.material.rho_c[-1])

    def continuity_defect(self, u: np.ndarray) -> np.ndarray:
        f, c = self.split(u)
        return f[1] - self.P(c[-2])

    def _solve_original(self, f, c, ctx: StageContext):
        dt = ctx.dt
        u_new = np.concatenate([f.ravel(), c.ravel()])
        if ctx.stage == "predictor":
            target = 2 * self.interface_jump(ctx.curr) - self.interface_jump(ctx.prev)
            if ctx.source_tt is not None:
                sf, sc = self.split(ctx.source_tt)
                target -= dt * dt * (sf[1] - self.P(sc[-2]))
        else:
            d_new = self.continuity_defect(u_new)
            d_old = 0.0 if ctx.curr is None else self.continuity_defect(ctx.curr)
            Ff, Fc = self._forcing_rows(ctx.t)
            target = (-2 * d_new + d_old) / dt**2
            if self.forcing is not None:
                target = target - (Ff / self.material.rho_f[0] - self.P(Fc / self.material.rho_c[-1]))
        f[0] = 0.0
        c[-1] = 0.0
        u0 = np.concatenate([f.ravel(), c.ravel()])
        r_jump = self.interface_jump(u0)
        r_flux = self.coarse.flux(c, "high") - self.R(self.fine.flux(f, "low"))
        rhs = np.empty(3 * self.grid.n)
        rhs[self._fidx] = target - r_jump
        rhs[self._cidx] = -r_flux
        z = self.coupler.solve(rhs)
        f[0] = z[self._fidx]
        c[-1] = z[self._cidx]

    def enforce(self, u: np.ndarray, ctx: StageContext) -> None:
        f, c = self.split(u)
        self._outer(f, c, ctx.t)
        if self.scheme is Scheme.GP_IMPROVED:
            self._solve_improved(f, c, ctx.t)
        elif self.scheme is Scheme.GP_ORIGINAL:
            if ctx.stage == "init":
                f[1] = self.P(c[-2])
            self._solve_original(f, c, ctx)

    # setup from an exact solution
    def initial_state(self, exact: DataFn, dt: float, t0: float = 0.0) -> TwoLevelState:
        return initialize(self, self.sample(exact, t0 - dt), self.sample(exact, t0), t0, dt)

    # energy
    def weighted_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        uf, uc = self.split(u)
        vf, vc = self.split(v)
        return (self.fine.inner(uf[1:-1], vf[1:-1], self.material.rho_f)
                + self.coarse.inner(uc[1:-1], vc[1:-1], self.material.rho_c))

    def discrete_energy(self, state: TwoLevelState, a_prev=None, a_curr=None) -> float:
        """Conserved quantity of the predictor-corrector scheme for zero data.

        ``|D+ u|^2 - <u^{k+1}, a^k> - dt^2/12 <a^{k+1}, a^k>`` in the rho-weighted norm,
        with ``u^k = state.prev`` and ``u^{k+1} = state.curr``.
        """
        dt = state.dt
        a0 = self.accel(state.prev, 0.0, True) if a_prev is None else a_prev
        a1 = self.accel(state.curr, 0.0, True) if a_curr is None else a_curr
        d = (state.curr - state.prev) / dt
        return (self.weighted_inner(d, d) - self.weighted_inner(state.curr, a0)
                - dt * dt / 12 * self.weighted_inner(a1, a0))

    def energy_components(self, state: TwoLevelState):
        """Kinetic parts from ``D+ u`` and bilinear parts ``S(u^{k+1}, u^k)`` per block."""
        d = (state.curr - state.prev) / state.dt
        df, dc = self.split(d)
        f1, c1 = self.split(state.curr)
        f0, c0 = self.split(state.prev)
        kf = self.fine.inner(df[1:-1], df[1:-1], self.material.rho_f)
        kc = self.coarse.inner(dc[1:-1], dc[1:-1], self.material.rho_c)
        sf = self._bilinear_identity(self.fine, f1, f0, "low")
        sc = self._bilinear_identity(self.coarse, c1, c0, "high")
        return kf, sf, kc, sc

    @staticmethod
    def _bilinear_identity(block: Block2D, u: np.ndarray, v: np.ndarray, interface: str) -> float:
        # S(u, v) = -(u, G v) -/+ <u_G, v'_G> at both ends, read off the SBP identity
        h = block.h
        s = -block.inner(u[1:-1], block.apply(v))
        s -= h * np.sum(u[1] * block.flux(v, "low"))
        s += h * np.sum(u[-2] * block.flux(v, "high"))
        return float(s)

    def energy_rate(self, u: np.ndarray, ut: np.ndarray) -> tuple[float, float]:
        """Semi-discrete ``dE/dt`` and the magnitude of its largest contribution.

        ``u`` must already carry enforced ghost values; ``ut`` must satisfy
        the interface and boundary constraints.  Uses the dense bilinear forms.
        """
        a = self.accel(u, 0.0, homogeneous=True)
        uf, uc = self.split(u)
        tf, tc = self.split(ut)
        af, ac = self.split(a)
        terms = [
            self.fine.inner(tf[1:-1], af[1:-1], self.material.rho_f),
            self.fine.bilinear(tf[1:-1], uf[1:-1]),
            self.coarse.inner(tc[1:-1], ac[1:-1], self.material.rho_c),
            self.coarse.bilinear(tc[1:-1], uc[1:-1]),
        ]
        return 2 * sum(terms), 2 * max(abs(x) for x in terms)

    def constrained_velocity(self, rng: np.random.Generator) -> np.ndarray:
        ut = self.pack(rng.standard_normal(self.grid.shape_fine), rng.standard_normal(self.grid.shape_coarse))
        f, c = self.split(ut)
        f[-2] = 0.0
        c[1] = 0.0
        if self.scheme is not Scheme.SAT3:
            f[1] = self.P(c[-2])
        return ut


def step_interface(problem: InterfaceProblem, state: TwoLevelState) -> TwoLevelState:
    return pc_step(problem, state)
