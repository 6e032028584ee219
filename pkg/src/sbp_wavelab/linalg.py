"""Banded LU factorization, substitution and conditioning.

Band storage is row-major: ``data[i, j - i + kl]`` holds ``A[i, j]``.  A
periodic matrix additionally couples the first and last rows through the wrap
``j -> j mod n``; it is factored after a folding permutation
``0, n-1, 1, n-2, ...`` that turns a cyclic band of half-width ``b`` into an
ordinary band of half-width ``2b + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

__all__ = [
    "SingularMatrixError",
    "BandedMatrix",
    "BandedLU",
    "lu_factor",
    "solve",
    "condition_1norm",
    "condition_2norm",
    "symmetric_eigenvalues",
    "growth_factor",
]


class SingularMatrixError(ArithmeticError):
    pass


@dataclass
class BandedMatrix:
    n: int
    kl: int
    ku: int
    data: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        if self.data.shape != (self.n, self.kl + self.ku + 1):
            raise ValueError("band storage has the wrong shape")
        if self.kl >= self.n or self.ku >= self.n:
            raise ValueError("bandwidths must be smaller than the dimension")

    @classmethod
    def zeros(cls, n, kl, ku, periodic=False):
        return cls(n, kl, ku, np.zeros((n, kl + ku + 1)), periodic)

    @classmethod
    def from_dense(cls, A, kl, ku, periodic=False, check=True):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        m = cls.zeros(n, kl, ku, periodic)
        for i in range(n):
            for off in range(-kl, ku + 1):
                j = i + off
                if periodic:
                    j %= n
                elif not 0 <= j < n:
                    continue
                m.data[i, off + kl] = A[i, j]
        if check and not np.allclose(m.to_dense(), A, rtol=0, atol=0):
            raise ValueError("matrix has entries outside the declared band")
        return m

    def add(self, i, j, value):
        off = j - i
        if self.periodic:
            off = (off + self.n // 2) % self.n - self.n // 2
        if not -self.kl <= off <= self.ku:
            raise ValueError(f"entry ({i}, {j}) lies outside the band")
        self.data[i, off + self.kl] += value

    def columns(self) -> np.ndarray:
        j = np.arange(self.n)[:, None] + np.arange(-self.kl, self.ku + 1)[None, :]
        return j % self.n if self.periodic else j

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        cols = self.columns()
        rows = np.repeat(np.arange(self.n)[:, None], cols.shape[1], axis=1)
        ok = (cols >= 0) & (cols < self.n)
        np.add.at(A, (rows[ok], cols[ok]), self.data[ok])
        return A

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = self.columns()
        ok = (cols >= 0) & (cols < self.n)
        xs = np.where(ok, x[np.clip(cols, 0, self.n - 1)], 0.0)
        return np.einsum("ij,ij->i", self.data, xs)

    @property
    def nnz(self) -> int:
        cols = self.columns()
        ok = (cols >= 0) & (cols < self.n)
        return int(np.count_nonzero(self.data[ok]))


def _fold_order(n: int) -> np.ndarray:
    order = np.empty(n, dtype=np.int64)
    order[0::2] = np.arange((n + 1) // 2)
    order[1::2] = n - 1 - np.arange(n // 2)
    return order


def _unfold(m: BandedMatrix):
    """Non-periodic band matrix equal to ``A[order][:, order]``."""
    n = m.n
    b = max(m.kl, m.ku)
    order = _fold_order(n)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    width = min(2 * b + 1, n - 1)
    out = BandedMatrix.zeros(n, width, width)
    cols = m.columns()
    for i in range(n):
        for c in range(cols.shape[1]):
            v = m.data[i, c]
            if v != 0.0:
                pi, pj = pos[i], pos[cols[i, c]]
                out.data[pi, pj - pi + width] += v
    return out, order


@numba.njit(cache=True)
def _gbtrf(W, n, kl, ku, pivot):
    # W[i, j - i + kl] for j in [i - kl, i + kl + ku]; returns pivots or -1 index on failure
    piv = np.arange(n)
    wu = ku + kl if pivot else ku
    for k in range(n):
        last = min(n - 1, k + kl)
        p = k
        if pivot:
            big = abs(W[k, kl])
            for i in range(k + 1, last + 1):
                a = abs(W[i, k - i + kl])
                if a > big:
                    big = a
                    p = i
        if W[p, k - p + kl] == 0.0:
            return piv, k
        piv[k] = p
        jmax = min(n - 1, k + wu)
        if p != k:
            for j in range(k, jmax + 1):
                t = W[k, j - k + kl]
                W[k, j - k + kl] = W[p, j - p + kl]
                W[p, j - p + kl] = t
        d = W[k, kl]
        for i in range(k + 1, last + 1):
            l = W[i, k - i + kl] / d
            W[i, k - i + kl] = l
            if l != 0.0:
                for j in range(k + 1, jmax + 1):
                    W[i, j - i + kl] -= l * W[k, j - k + kl]
    return piv, -1


@numba.njit(cache=True)
def _gbtrs(W, piv, n, kl, ku, pivot, b):
    x = b.copy()
    wu = ku + kl if pivot else ku
    for k in range(n):
        p = piv[k]
        if p != k:
            t = x[k]
            x[k] = x[p]
            x[p] = t
        xk = x[k]
        if xk != 0.0:
            for i in range(k + 1, min(n - 1, k + kl) + 1):
                x[i] -= W[i, k - i + kl] * xk
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, min(n - 1, i + wu) + 1):
            s -= W[i, j - i + kl] * x[j]
        x[i] = s / W[i, kl]
    return x


@dataclass
class BandedLU:
    n: int
    kl: int
    ku: int
    work: np.ndarray
    piv: np.ndarray
    pivot: bool
    order: np.ndarray | None = None

    @property
    def upper(self) -> np.ndarray:
        """Dense ``U`` factor (in folded ordering for periodic input)."""
        wu = self.ku + self.kl if self.pivot else self.ku
        U = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(i, min(self.n, i + wu + 1)):
                U[i, j] = self.work[i, j - i + self.kl]
        return U

    @property
    def lower(self) -> np.ndarray:
        """Unit lower factor ``L`` with ``P A = L U`` (pivoted) or ``A = L U``."""
        L = np.eye(self.n)
        if not self.pivot:
            for i in range(self.n):
                for j in range(max(0, i - self.kl), i):
                    L[i, j] = self.work[i, j - i + self.kl]
            return L
        # multipliers are stored in elimination order; replay row swaps on them
        cols = []
        for k in range(self.n):
            col = np.zeros(self.n)
            for i in range(k + 1, min(self.n, k + self.kl + 1)):
                col[i] = self.work[i, k - i + self.kl]
            cols.append(col)
        for k in range(self.n):
            L[:, k] += cols[k]
            p = self.piv[k]
            if p != k:
                for kk in range(k):
                    L[[k, p], kk] = L[[p, k], kk]
        return L

    def permutation(self) -> np.ndarray:
        perm = np.arange(self.n)
        for k in range(self.n):
            p = self.piv[k]
            perm[[k, p]] = perm[[p, k]]
        return perm


def lu_factor(m: BandedMatrix, pivot: bool = True) -> BandedLU:
    """Factor ``m``; raises :class:`SingularMatrixError` on an exact zero pivot."""
    order = None
    if m.periodic:
        m, order = _unfold(m)
    n, kl, ku = m.n, m.kl, m.ku
    W = np.zeros((n, 2 * kl + ku + 1))
    W[:, : kl + ku + 1] = m.data
    piv, bad = _gbtrf(W, n, kl, ku, pivot)
    if bad >= 0:
        raise SingularMatrixError(f"zero pivot at step {bad}")
    return BandedLU(n, kl, ku, W, piv, pivot, order)


def solve(f: BandedLU, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != f.n:
        raise ValueError(f"right-hand side has length {rhs.shape[0]}, expected {f.n}")
    if rhs.ndim > 1:
        return np.stack([solve(f, rhs[:, j]) for j in range(rhs.shape[1])], axis=1)
    b = rhs if f.order is None else rhs[f.order]
    x = _gbtrs(f.work, f.piv, f.n, f.kl, f.ku, f.pivot, np.ascontiguousarray(b))
    if f.order is None:
        return x
    out = np.empty_like(x)
    out[f.order] = x
    return out


def condition_2norm(m) -> float:
    """``sigma_max / sigma_min``; ``inf`` for a numerically singular matrix."""
    A = m.to_dense() if isinstance(m, BandedMatrix) else np.asarray(m, dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= s[0] * np.finfo(float).eps * max(A.shape):
        return float("inf")
    return float(s[0] / s[-1])


def condition_1norm(m) -> float:
    """``||A||_1 ||A^-1||_1`` from the dense matrix; ``inf`` when singular."""
    A = m.to_dense() if isinstance(m, BandedMatrix) else np.asarray(m, dtype=float)
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return float("inf")
    return float(np.linalg.norm(A, 1) * np.linalg.norm(inv, 1))


def symmetric_eigenvalues(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.linalg.eigvalsh(0.5 * (A + A.T))


def growth_factor(f: BandedLU, m: BandedMatrix) -> float:
    wu = f.ku + f.kl if f.pivot else f.ku
    u = f.work[:, f.kl: f.kl + wu + 1]
    return float(np.abs(u).max() / np.abs(m.data).max())
