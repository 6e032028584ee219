"""Fourth-order summation-by-parts operators with and without ghost points.

A second-derivative operator ``G(mu)`` approximates ``(mu v')'`` on a grid of
``n`` core points with spacing ``h``.  Grid functions are handled in *extended*
layout: an array of length ``n + 2`` whose entries 0 and ``n + 1`` are the ghost
slots left and right of the core.  Variants that do not use ghost points simply
have zero coefficients in those slots.

Every variant satisfies the identity

    (u, G v)_h = -S(u, v) - u_1 mu_1 b_1^T v + u_n mu_n b_n^T v,

with ``(u, v)_h = h sum_j w_j u_j v_j`` and ``S`` symmetric positive
semi-definite.  Closure coefficients are stored as exact rationals and converted
to floating point once at load time.  The right boundary is the mirror image of
the left one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = [
    "Variant",
    "Grid1D",
    "GhostedField1D",
    "DiagonalNorm",
    "BoundaryDerivativeStencil",
    "BorrowingConstants",
    "HighDifferenceStencil",
    "SbpOperatorSet",
    "CLOSURE_ROWS",
    "load_operator",
    "interior_coefficients",
    "apply_extended",
    "apply_periodic",
    "apply_rows",
    "apply_second_derivative",
    "apply_boundary_derivative",
    "second_derivative_matrix",
    "boundary_derivative_vectors",
    "remove_ghost",
    "add_ghost",
    "sbp_bilinear_form",
    "sbp_identity_residual",
    "borrowing_split",
    "exactness_error",
    "D4_PLUS",
    "D5_PLUS",
]

#: number of boundary rows with special coefficients at each end
CLOSURE_ROWS = 6
#: column window of a closure row (ghost at 0, core points 1..8)
CLOSURE_COLS = 9
#: mu window of a closure row (mu_1 .. mu_8)
CLOSURE_MU = 8
MIN_POINTS = 2 * CLOSURE_ROWS


class Variant(str, enum.Enum):
    WITH_GHOST = "with_ghost"
    NO_GHOST = "no_ghost"
    GHOST_REMOVED = "ghost_removed"
    GHOST_ADDED = "ghost_added"


@dataclass(frozen=True)
class Grid1D:
    n: int
    h: float
    origin: float = 0.0

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if self.n < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} core points, got {self.n}")

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n)

    @property
    def x_extended(self) -> np.ndarray:
        return self.origin + self.h * np.arange(-1, self.n + 1)


@dataclass
class GhostedField1D:
    """Core values plus optional ghost values on either side."""

    core: np.ndarray
    left_ghost: float | None = None
    right_ghost: float | None = None

    def __post_init__(self):
        self.core = np.asarray(self.core, dtype=float)

    @property
    def n(self) -> int:
        return self.core.shape[0]

    def extended(self, need_left: bool = False, need_right: bool = False) -> np.ndarray:
        if need_left and self.left_ghost is None:
            raise ValueError("operator requires a left ghost value")
        if need_right and self.right_ghost is None:
            raise ValueError("operator requires a right ghost value")
        out = np.empty(self.n + 2)
        out[1:-1] = self.core
        out[0] = 0.0 if self.left_ghost is None else self.left_ghost
        out[-1] = 0.0 if self.right_ghost is None else self.right_ghost
        return out

    @classmethod
    def from_extended(cls, u: np.ndarray) -> "GhostedField1D":
        u = np.asarray(u, dtype=float)
        return cls(u[1:-1].copy(), float(u[0]), float(u[-1]))


NORM_WEIGHTS = (Fraction(17, 48), Fraction(59, 48), Fraction(43, 48), Fraction(49, 48))


@dataclass(frozen=True)
class DiagonalNorm:
    boundary_weights: tuple[Fraction, ...] = NORM_WEIGHTS
    interior_weight: Fraction = Fraction(1)

    def weights(self, n: int) -> np.ndarray:
        r = len(self.boundary_weights)
        if n < 2 * r:
            raise ValueError("grid too small for the norm closures")
        w = np.full(n, float(self.interior_weight))
        b = np.array([float(x) for x in self.boundary_weights])
        w[:r] = b
        w[n - r:] = b[::-1]
        return w

    def matrix(self, n: int, h: float) -> np.ndarray:
        return np.diag(h * self.weights(n))


@dataclass(frozen=True)
class BoundaryDerivativeStencil:
    """Left-boundary derivative: ``h * b^T v = sum_k coefficients[k] * v_k``.

    Index 0 is the ghost point, index 1 the boundary point.  The right-boundary
    stencil is the mirror-negation.
    """

    name: str
    coefficients: tuple[Fraction, ...]
    order: int
    side: str = "left"

    @property
    def uses_ghost(self) -> bool:
        return self.coefficients[0] != 0

    def as_float(self) -> np.ndarray:
        return np.array([float(c) for c in self.coefficients])

    def mirrored(self) -> "BoundaryDerivativeStencil":
        side = "right" if self.side == "left" else "left"
        return replace(self, coefficients=tuple(-c for c in self.coefficients), side=side)


@dataclass(frozen=True)
class BorrowingConstants:
    alpha: float = 0.2505765857
    r: int = 4


@dataclass(frozen=True)
class HighDifferenceStencil:
    """One-sided undivided difference starting at the ghost point."""

    order: int

    @property
    def coefficients(self) -> tuple[int, ...]:
        from math import comb

        k = self.order
        return tuple((-1) ** (k - j) * comb(k, j) for j in range(k + 1))

    def apply(self, v_ext: np.ndarray, h: float) -> float:
        c = np.array(self.coefficients, dtype=float)
        return float(c @ np.asarray(v_ext)[: self.order + 1]) / h**self.order


D4_PLUS = HighDifferenceStencil(4)
D5_PLUS = HighDifferenceStencil(5)


@dataclass(frozen=True)
class SbpOperatorSet:
    """Coefficient bundle for one second-derivative operator.

    ``closure[q, k, m]`` is the coefficient of ``mu_{m+1} v_k`` in
    ``h^2 (G v)_{q+1}`` at the left boundary (``k = 0`` is the ghost slot).
    """

    variant: Variant
    closure: tuple
    boundary_derivative: BoundaryDerivativeStencil
    norm: DiagonalNorm = DiagonalNorm()
    borrowing: BorrowingConstants | None = None
    closure_f: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        arr = np.array([[[float(c) for c in row_m] for row_m in row] for row in self.closure])
        if arr.shape != (CLOSURE_ROWS, CLOSURE_COLS, CLOSURE_MU):
            raise ValueError(f"closure table has shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "closure_f", arr)

    @property
    def uses_ghost(self) -> bool:
        return bool(np.any(self.closure_f[:, 0, :] != 0)) or self.boundary_derivative.uses_ghost

    @property
    def ghost_coefficient(self) -> Fraction:
        """Coefficient of ``mu_1 v_0`` in ``h^2 (G v)_1``."""
        return self.closure[0][0][0]

    def exact_closure(self) -> list:
        return [[list(r) for r in row] for row in self.closure]


# -- data loading -----------------------------------------------------------

_FAMILY_FILES = {Variant.WITH_GHOST: "gp_closure.txt", Variant.NO_GHOST: "ngp_closure.txt"}
_STENCIL_NAMES = {
    Variant.WITH_GHOST: ("b~1", 4),
    Variant.NO_GHOST: ("b1", 3),
    Variant.GHOST_REMOVED: ("underbar-b~1", 4),
    Variant.GHOST_ADDED: ("underbar-b1", 3),
}


def _parse_table(text: str):
    table = [[[Fraction(0)] * CLOSURE_MU for _ in range(CLOSURE_COLS)] for _ in range(CLOSURE_ROWS)]
    bder = [Fraction(0)] * CLOSURE_COLS
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "G" and len(parts) == 6:
            q, k, m, num, den = map(int, parts[1:])
            if not (1 <= q <= CLOSURE_ROWS and 0 <= k < CLOSURE_COLS and 1 <= m <= CLOSURE_MU):
                raise ValueError(f"line {lineno}: index out of range")
            table[q - 1][k][m - 1] = Fraction(num, den)
        elif parts[0] == "B" and len(parts) == 4:
            k, num, den = map(int, parts[1:])
            bder[k] = Fraction(num, den)
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    return table, bder


def _freeze(table) -> tuple:
    return tuple(tuple(tuple(r) for r in row) for row in table)


@lru_cache(maxsize=None)
def load_operator(variant: Variant | str) -> SbpOperatorSet:
    """Operator set of the requested variant, built from the shipped tables."""
    variant = Variant(variant)
    if variant is Variant.GHOST_REMOVED:
        return remove_ghost(load_operator(Variant.WITH_GHOST))
    if variant is Variant.GHOST_ADDED:
        return add_ghost(load_operator(Variant.NO_GHOST))
    text = resources.files("sbp_wavelab.data").joinpath(_FAMILY_FILES[variant]).read_text()
    table, bder = _parse_table(text)
    name, order = _STENCIL_NAMES[variant]
    borrowing = BorrowingConstants() if variant is Variant.NO_GHOST else None
    return SbpOperatorSet(
        variant=variant,
        closure=_freeze(table),
        boundary_derivative=BoundaryDerivativeStencil(name, tuple(bder), order),
        borrowing=borrowing,
    )


# -- ghost transforms -------------------------------------------------------

# v_0 = 5 v_1 - 10 v_2 + 10 v_3 - 5 v_4 + v_5 makes the fifth difference vanish
_EXTRAPOLATION = (0, 5, -10, 10, -5, 1)


def remove_ghost(op: SbpOperatorSet) -> SbpOperatorSet:
    """Eliminate the ghost point by fifth-order extrapolation."""
    if op.variant is not Variant.WITH_GHOST:
        raise ValueError(f"remove_ghost expects the with-ghost operator, got {op.variant.value}")
    table = op.exact_closure()
    for q in range(CLOSURE_ROWS):
        for m in range(CLOSURE_MU):
            g = table[q][0][m]
            if g:
                for k, e in enumerate(_EXTRAPOLATION):
                    table[q][k][m] += g * e
                table[q][0][m] = Fraction(0)
    b = list(op.boundary_derivative.coefficients)
    g = b[0]
    for k, e in enumerate(_EXTRAPOLATION):
        b[k] += g * e
    b[0] = Fraction(0)
    name, order = _STENCIL_NAMES[Variant.GHOST_REMOVED]
    return SbpOperatorSet(
        variant=Variant.GHOST_REMOVED,
        closure=_freeze(table),
        boundary_derivative=BoundaryDerivativeStencil(name, tuple(b), order),
        norm=op.norm,
    )


def add_ghost(op: SbpOperatorSet) -> SbpOperatorSet:
    """Trade a fourth difference between the first closure row and ``b_1``."""
    if op.variant is not Variant.NO_GHOST:
        raise ValueError(f"add_ghost expects the no-ghost operator, got {op.variant.value}")
    w1 = op.norm.boundary_weights[0]
    gamma = Fraction(-1, 3)
    table = op.exact_closure()
    b = list(op.boundary_derivative.coefficients)
    for k, d in enumerate(D4_PLUS.coefficients):
        # h b_1 gains gamma * h^4 d4+ ; row 1 gains the matching -gamma/w1 term
        b[k] += gamma * d
        table[0][k][0] += -gamma / w1 * d
    name, order = _STENCIL_NAMES[Variant.GHOST_ADDED]
    return SbpOperatorSet(
        variant=Variant.GHOST_ADDED,
        closure=_freeze(table),
        boundary_derivative=BoundaryDerivativeStencil(name, tuple(b), order),
        norm=op.norm,
        borrowing=op.borrowing,
    )


# -- application ------------------------------------------------------------


def interior_coefficients(b_m2, b_m1, b_0, b_p1, b_p2):
    """Weights of ``v_{i-2} .. v_{i+2}`` in ``h^2 (G v)_i`` given mu around ``i``."""
    c_m2 = -b_m2 / 8 + b_m1 / 6 - b_0 / 8
    c_m1 = b_m2 / 6 + b_m1 / 2 + b_0 / 2 + b_p1 / 6
    c_0 = -(b_m2 / 24 + 5 * b_m1 / 6 + 3 * b_0 / 4 + 5 * b_p1 / 6 + b_p2 / 24)
    c_p1 = b_m1 / 6 + b_0 / 2 + b_p1 / 2 + b_p2 / 6
    c_p2 = -b_0 / 8 + b_p1 / 6 - b_p2 / 8
    return c_m2, c_m1, c_0, c_p1, c_p2


def _closure_rows(table: np.ndarray, mu: np.ndarray, u: np.ndarray) -> np.ndarray:
    # table (6, 9, 8); u (9, ...); mu (8, ...)
    t = np.tensordot(table, u, axes=([1], [0]))  # (6, 8, ...)
    return np.einsum("qm...,m...->q...", t, mu)


def apply_extended(left: SbpOperatorSet, right: SbpOperatorSet | None, mu, u, h):
    """``(G v)`` at the core points along axis 0.

    ``mu`` has ``n`` rows, ``u`` has ``n + 2`` rows in extended layout.  Extra
    trailing axes are treated as independent columns.
    """
    right = left if right is None else right
    mu = np.asarray(mu, dtype=float)
    u = np.asarray(u, dtype=float)
    n = mu.shape[0]
    if n < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} core points, got {n}")
    if u.shape[0] != n + 2:
        raise ValueError(f"extended field needs {n + 2} rows, got {u.shape[0]}")
    out = np.empty(np.broadcast_shapes(mu.shape, u[1:-1].shape))
    c = interior_coefficients(mu[0:n - 4], mu[1:n - 3], mu[2:n - 2], mu[3:n - 1], mu[4:n])
    out[2:n - 2] = (
        c[0] * u[1:n - 3] + c[1] * u[2:n - 2] + c[2] * u[3:n - 1] + c[3] * u[4:n] + c[4] * u[5:n + 1]
    )
    out[:CLOSURE_ROWS] = _closure_rows(left.closure_f, mu[:CLOSURE_MU], u[:CLOSURE_COLS])
    out[n - CLOSURE_ROWS:] = _closure_rows(
        right.closure_f, mu[::-1][:CLOSURE_MU], u[::-1][:CLOSURE_COLS]
    )[::-1]
    out /= h * h
    return out


def apply_rows(op: SbpOperatorSet, mu, u, h, q: int = 0) -> np.ndarray:
    """Single closure row ``q`` (0-based, left end) of ``G v``; cheap interface evaluation."""
    mu = np.asarray(mu, dtype=float)
    u = np.asarray(u, dtype=float)
    t = np.tensordot(op.closure_f[q], u[:CLOSURE_COLS], axes=([0], [0]))  # (8, ...)
    return np.einsum("m...,m...->...", t, mu[:CLOSURE_MU]) / (h * h)


def apply_second_derivative(op, mu, v, h, right_op=None) -> np.ndarray:
    """``G(mu) v`` at the core points for a :class:`GhostedField1D` or extended array."""
    right_op = op if right_op is None else right_op
    mu = np.asarray(mu, dtype=float)
    if isinstance(v, GhostedField1D):
        if v.n != mu.shape[0]:
            raise ValueError("grid-size mismatch between mu and v")
        u = v.extended(op.uses_ghost, right_op.uses_ghost)
    else:
        u = np.asarray(v, dtype=float)
    return apply_extended(op, right_op, mu, u, h)


def apply_boundary_derivative(stencil: BoundaryDerivativeStencil, v, h: float) -> float:
    """Boundary derivative at the side named by ``stencil.side``."""
    if isinstance(v, GhostedField1D):
        need = stencil.uses_ghost
        u = v.extended(need and stencil.side == "left", need and stencil.side == "right")
    else:
        u = np.asarray(v, dtype=float)
    c = stencil.as_float()
    if stencil.side == "left":
        return float(c @ u[: len(c)]) / h
    return float(c @ u[::-1][: len(c)]) / h


def boundary_derivative_vectors(left: SbpOperatorSet, right: SbpOperatorSet | None, n: int, h: float):
    """Extended-layout vectors ``b_1`` and ``b_n`` of length ``n + 2``."""
    right = left if right is None else right
    bl = np.zeros(n + 2)
    br = np.zeros(n + 2)
    cl = left.boundary_derivative.as_float()
    cr = right.boundary_derivative.as_float()
    bl[: len(cl)] = cl / h
    br[n + 2 - len(cr):] = -cr[::-1] / h
    return bl, br


def second_derivative_matrix(op, mu, h, right_op=None) -> np.ndarray:
    """Dense ``n x (n + 2)`` matrix of ``G(mu)`` in extended layout."""
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    return apply_extended(op, right_op, mu[:, None], np.eye(n + 2), h)


# -- certifiers -------------------------------------------------------------


def _assembled_form(op, mu, h, right_op=None):
    right_op = op if right_op is None else right_op
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    G = second_derivative_matrix(op, mu, h, right_op)
    w = op.norm.weights(n)
    bl, br = boundary_derivative_vectors(op, right_op, n, h)
    A = -(h * w)[:, None] * G
    A[0] -= mu[0] * bl
    A[-1] += mu[-1] * br
    return A, bl, br


def sbp_bilinear_form(op, mu, h=1.0, right_op=None, check_ghost=True) -> np.ndarray:
    """Symmetric matrix ``M`` with ``S(u, v) = u^T M v`` (core points only)."""
    A, _, _ = _assembled_form(op, mu, h, right_op)
    if check_ghost:
        ghost = np.abs(A[:, [0, -1]]).max()
        scale = np.abs(A).max()
        if ghost > 1e-12 * scale:
            raise ValueError(f"bilinear form has a nonzero ghost column ({ghost:.3e})")
    M = A[:, 1:-1]
    return 0.5 * (M + M.T)


def sbp_identity_residual(op, mu, u, v, h=1.0, right_op=None) -> float:
    """Relative mismatch of the SBP identity for core ``u`` and extended ``v``."""
    right_op = op if right_op is None else right_op
    mu = np.asarray(mu, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = mu.shape[0]
    if v.shape[0] == n:
        v = np.concatenate([[0.0], v, [0.0]])
    M = sbp_bilinear_form(op, mu, h, right_op, check_ghost=False)
    bl, br = boundary_derivative_vectors(op, right_op, n, h)
    Gv = apply_extended(op, right_op, mu, v, h)
    lhs = h * np.dot(u * op.norm.weights(n), Gv)
    rhs = -u @ M @ v[1:-1] - u[0] * mu[0] * (bl @ v) + u[-1] * mu[-1] * (br @ v)
    return abs(lhs - rhs) / (1.0 + abs(lhs))


def borrowing_split(op, mu, h=1.0, alpha=None):
    """Remainder matrix after borrowing ``h alpha mu_min (b_1^T u)^2`` at both ends."""
    if op.variant is not Variant.NO_GHOST:
        raise ValueError("borrowing applies to the no-ghost operator")
    consts = op.borrowing or BorrowingConstants()
    alpha = consts.alpha if alpha is None else alpha
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    M = sbp_bilinear_form(op, mu, h)
    bl, br = boundary_derivative_vectors(op, op, n, h)
    bl, br = bl[1:-1], br[1:-1]
    r = consts.r
    mu_min_l = mu[:r].min()
    mu_min_r = mu[n - r:].min()
    Mu = M - h * alpha * mu_min_l * np.outer(bl, bl) - h * alpha * mu_min_r * np.outer(br, br)
    return Mu, alpha, mu_min_l


def exactness_error(op, a: int, b: int, n: int = 24, h: float = 0.1, origin: float = 0.3):
    """Largest closure and interior errors for ``mu = x^a`` and ``v = x^b``.

    Returns ``(closure_error, interior_error)`` relative to the size of the
    exact result, measured at both boundaries.
    """
    x = origin + h * np.arange(-1, n + 1)
    mu = x[1:-1] ** a
    v = x**b
    exact = b * (a + b - 1) * x[1:-1] ** (a + b - 2) if b >= 1 and a + b >= 2 else np.zeros(n)
    got = apply_extended(op, op, mu, v, h)
    err = np.abs(got - exact) / (1.0 + np.abs(exact).max())
    rows = np.r_[0:CLOSURE_ROWS, n - CLOSURE_ROWS:n]
    interior = np.setdiff1d(np.arange(n), rows)
    return float(err[rows].max()), float(err[interior].max())


def apply_periodic(mu, u, h, axis: int = 0) -> np.ndarray:
    """Periodic variable-coefficient interior stencil along ``axis`` (no closures)."""
    mu = np.moveaxis(np.asarray(mu, dtype=float), axis, 0)
    u = np.moveaxis(np.asarray(u, dtype=float), axis, 0)

    def sh(a, s):
        return np.roll(a, -s, axis=0)

    c = interior_coefficients(sh(mu, -2), sh(mu, -1), mu, sh(mu, 1), sh(mu, 2))
    out = c[0] * sh(u, -2) + c[1] * sh(u, -1) + c[2] * u + c[3] * sh(u, 1) + c[4] * sh(u, 2)
    return np.moveaxis(out / (h * h), 0, axis)
