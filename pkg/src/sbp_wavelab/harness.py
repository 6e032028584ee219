"""Experiment drivers: operator certificates, CFL probes, convergence,
long-time stability, conditioning and energy checks.

Every driver returns plain dataclass rows so that the service layer can
serialize them and :func:`write_csv` can dump them.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from fractions import Fraction
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .interface2d import CompositeGrid2D, InterfaceProblem, Material2D, Scheme
from .linalg import condition_1norm, condition_2norm
from .sbp_operators import (
    Grid1D,
    Variant,
    _assembled_form,
    apply_periodic,
    borrowing_split,
    exactness_error,
    load_operator,
    sbp_bilinear_form,
    sbp_identity_residual,
)
from .timestepping import (
    FourierSymbol,
    InstabilityDetected,
    StageContext,
    advance,
    cfl_threshold,
    dense_spectral_radius,
    initialize,
    pc_step,
    run_until,
    spectral_radius,
)
from .wave1d import BCKind, BoundaryTreatment, Material1D, PenaltyConfig, Wave1D

__all__ = [
    "SnellSolution",
    "ManufacturedCase",
    "METHODS",
    "make_case",
    "build_problem",
    "l2_error",
    "ConvergenceRow",
    "run_convergence",
    "CflResult",
    "CFL_CASES",
    "stable_1d",
    "stable_2d",
    "run_cfl_suite",
    "LongTimeResult",
    "run_energy_longtime",
    "ConditionRow",
    "run_conditioning_study",
    "CertificateRow",
    "verify_operators",
    "energy_drift",
    "energy_rate_residual",
    "neumann_equivalence",
    "spectral_radius_check",
    "write_csv",
]


# -- exact solutions -------------------------------------------------------------


@dataclass(frozen=True)
class SnellSolution:
    """Plane wave hitting a flat material interface, with its reflection and transmission."""

    mu_coarse: float = 1.0
    mu_fine: float = 0.25
    forcing = None
    forcing_tt = None

    @property
    def omega(self) -> float:
        return math.sqrt(2 * self.mu_coarse)

    @property
    def k(self) -> float:
        return math.sqrt(2 * self.mu_coarse / self.mu_fine - 1)

    @property
    def reflection(self) -> float:
        a, b = self.mu_coarse, self.mu_fine * self.k
        return (a - b) / (a + b)

    @property
    def transmission(self) -> float:
        return 1 + self.reflection

    def __call__(self, block: str, X, Y, t: float):
        w = self.omega
        if block == "fine":
            return self.transmission * np.cos(X + self.k * Y - w * t)
        return np.cos(X + Y - w * t) + self.reflection * np.cos(X - Y - w * t)

    def material(self, grid: CompositeGrid2D) -> Material2D:
        return Material2D.piecewise_constant(grid, mu_c=self.mu_coarse, mu_f=self.mu_fine)


class ManufacturedCase:
    """``u = sin(x+2) cos(y+1) sin(t+3)`` with smooth ``rho`` and ``mu``.

    The forcing separates into a spatial factor times ``sin(t + 3)``; the
    spatial factor is cached per sampling grid.
    """

    def __init__(self):
        self._cache: dict = {}

    @staticmethod
    def rho(block, X, Y):
        return 3 - np.cos(X) * np.cos(Y)

    @staticmethod
    def mu(block, X, Y):
        return 2 + np.cos(X) * np.cos(Y)

    def __call__(self, block, X, Y, t):
        return np.sin(X + 2) * np.cos(Y + 1) * math.sin(t + 3)

    def _spatial(self, block, X, Y):
        X = np.asarray(X)
        Y = np.asarray(Y)
        key = (block, X.shape, float(X.flat[0]), float(X.flat[-1]), float(Y.flat[0]), float(Y.flat[-1]))
        hit = self._cache.get(key)
        if hit is None:
            u = np.sin(X + 2) * np.cos(Y + 1)
            ux = np.cos(X + 2) * np.cos(Y + 1)
            uy = -np.sin(X + 2) * np.sin(Y + 1)
            mx = -np.sin(X) * np.cos(Y)
            my = -np.cos(X) * np.sin(Y)
            hit = (2 * self.mu(block, X, Y) - self.rho(block, X, Y)) * u - (mx * ux + my * uy)
            self._cache[key] = hit
        return hit

    def forcing(self, block, X, Y, t):
        return self._spatial(block, X, Y) * math.sin(t + 3)

    def forcing_tt(self, block, X, Y, t):
        return -self.forcing(block, X, Y, t)

    def material(self, grid: CompositeGrid2D) -> Material2D:
        return Material2D.from_functions(grid, self.rho, self.mu)


METHODS = {
    "gp-improved": (Scheme.GP_IMPROVED, 4),
    "gp-original": (Scheme.GP_ORIGINAL, 4),
    "sat3": (Scheme.SAT3, 4),
    "int6": (Scheme.SAT3, 6),
}

DEFAULT_RATIO = {"snell": 1.0, "smooth": 0.7}


def make_case(case: str):
    if case == "snell":
        return SnellSolution()
    if case == "smooth":
        return ManufacturedCase()
    raise ValueError(f"unknown case {case!r}")


def build_problem(case: str, method: str, n: int, tau_margin: float = 0.2, with_data: bool = True):
    """Problem and exact solution for a named case and interface method."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    sol = make_case(case)
    grid = CompositeGrid2D(n)
    scheme, order = METHODS[method]
    problem = InterfaceProblem(
        grid,
        sol.material(grid),
        scheme,
        order=order,
        boundary=sol if with_data else None,
        forcing=sol.forcing if with_data else None,
        forcing_tt=sol.forcing_tt if with_data else None,
        tau_margin=tau_margin,
    )
    return problem, sol


def l2_error(problem: InterfaceProblem, u: np.ndarray, exact: Callable, t: float) -> float:
    """Discrete L2 norm (SBP weights, no density) of ``u - exact`` over both blocks."""
    e = u - problem.sample(exact, t)
    ef, ec = problem.split(e)
    return math.sqrt(problem.fine.inner(ef[1:-1], ef[1:-1]) + problem.coarse.inner(ec[1:-1], ec[1:-1]))


# -- convergence -----------------------------------------------------------------


@dataclass
class ConvergenceRow:
    case: str
    method: str
    n: int
    two_h: float
    steps: int
    error: float
    rate: float | None
    seconds: float


def run_convergence(
    case: str,
    method: str,
    levels: Sequence[int] = (80, 160, 320, 640),
    T: float = 11.0,
    ratio: float | None = None,
    tau_margin: float = 0.2,
    progress: Callable[[ConvergenceRow], None] | None = None,
) -> list[ConvergenceRow]:
    """Errors at ``T`` on successively refined grids.

    The step is ``ratio * h`` shrunk so that an integer number of steps
    lands exactly on ``T``.
    """
    ratio = DEFAULT_RATIO[case] if ratio is None else ratio
    rows: list[ConvergenceRow] = []
    for n in levels:
        t0 = time.perf_counter()
        problem, sol = build_problem(case, method, n, tau_margin)
        steps = math.ceil(T / (ratio * problem.grid.h) - 1e-9)
        dt = T / steps
        state = advance(problem, problem.initial_state(sol, dt), steps)
        with np.errstate(over="ignore", invalid="ignore"):
            err = l2_error(problem, state.curr, sol, state.t)
        if not np.isfinite(err):
            raise InstabilityDetected(state.t, float("inf"))
        rate = math.log2(rows[-1].error / err) if rows else None
        row = ConvergenceRow(case, method, n, problem.grid.H, steps, err, rate, time.perf_counter() - t0)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


# -- CFL probes ------------------------------------------------------------------


@dataclass
class CflResult:
    name: str
    threshold: float
    target: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return abs(self.threshold - self.target) <= self.tolerance + 1e-12


_KIND_1D = {
    "periodic": BCKind.PERIODIC,
    "gp-neumann": BCKind.GP_NEUMANN,
    "sat-neumann": BCKind.SAT_NEUMANN,
    "injection-dirichlet": BCKind.INJECTION_DIRICHLET,
    "sat-dirichlet": BCKind.SAT_DIRICHLET,
}


def stable_1d(kind: str, ratio: float, tau_margin: float = 0.2, n: int = 201, T: float = 200.0, seed: int = 1) -> bool:
    """Random-data run on ``[-pi/2, pi/2]``; ``False`` if the solution grows by 1e3."""
    h = math.pi / (n - 1)
    bc = BoundaryTreatment(_KIND_1D[kind], None, PenaltyConfig(tau_margin=tau_margin))
    m = n - 1 if kind == "periodic" else n
    problem = Wave1D(Grid1D(m, h, -math.pi / 2), Material1D.constant(m), bc, bc)
    rng = np.random.default_rng(seed)
    u = problem.extend(rng.standard_normal(m))
    up = problem.extend(rng.standard_normal(m))
    try:
        run_until(problem, initialize(problem, up, u, 0.0, ratio * h), T)
    except InstabilityDetected:
        return False
    return True


def stable_2d(case: str, method: str, ratio: float, n: int = 160, T: float = 100.0, seed: int = 1,
              tau_margin: float = 0.2) -> bool:
    """Random-data run with zero data on the two-block grid."""
    problem, _ = build_problem(case, method, n, tau_margin, with_data=False)
    g = problem.grid
    rng = np.random.default_rng(seed)
    u0 = problem.pack(rng.standard_normal(g.shape_fine), rng.standard_normal(g.shape_coarse))
    try:
        run_until(problem, initialize(problem, u0, u0, 0.0, ratio * g.h), T)
    except InstabilityDetected:
        return False
    return True


@dataclass(frozen=True)
class CflCase:
    name: str
    target: float
    dims: int
    args: tuple
    bracket: tuple[float, float]


CFL_CASES = (
    CflCase("1d-periodic", 1.50, 1, ("periodic", 0.2), (1.0, 2.0)),
    CflCase("1d-gp-neumann", 1.44, 1, ("gp-neumann", 0.2), (1.0, 2.0)),
    CflCase("1d-sat-neumann", 1.50, 1, ("sat-neumann", 0.2), (1.0, 2.0)),
    CflCase("1d-injection-dirichlet", 1.50, 1, ("injection-dirichlet", 0.2), (1.0, 2.0)),
    CflCase("1d-sat-dirichlet-20pct", 1.16, 1, ("sat-dirichlet", 0.2), (1.0, 2.0)),
    CflCase("1d-sat-dirichlet-0.1pct", 1.25, 1, ("sat-dirichlet", 0.001), (1.0, 2.0)),
    CflCase("2d-snell-gp-improved", 2.09, 2, ("snell", "gp-improved"), (1.9, 2.3)),
    CflCase("2d-snell-sat3", 1.18, 2, ("snell", "sat3"), (1.0, 1.4)),
    CflCase("2d-smooth-gp-improved", 0.86, 2, ("smooth", "gp-improved"), (0.7, 1.0)),
    CflCase("2d-smooth-sat3", 0.77, 2, ("smooth", "sat3"), (0.6, 1.0)),
)


def run_cfl_suite(
    names: Iterable[str] | None = None,
    full: bool = False,
    n2d: int | None = None,
    T2d: float | None = None,
    progress: Callable[[CflResult], None] | None = None,
) -> list[CflResult]:
    """Bisect each probe to a bracket of width 0.02 and compare with its target.

    Desk scale uses the 1D grid with 201 points and the 161^2 coarse 2D grid
    with ``T = 100`` (tolerance 0.05); ``full`` tightens the tolerance to 0.02.
    """
    wanted = None if names is None else set(names)
    tol = 0.02 if full else 0.05
    n2d = 160 if n2d is None else n2d
    T2d = 100.0 if T2d is None else T2d
    out = []
    for case in CFL_CASES:
        if wanted is not None and case.name not in wanted:
            continue
        t0 = time.perf_counter()
        if case.dims == 1:
            kind, margin = case.args
            fn = lambda c, k=kind, m=margin: stable_1d(k, c, m)
        else:
            which, method = case.args
            fn = lambda c, w=which, m=method: stable_2d(w, m, c, n=n2d, T=T2d)
        thr = cfl_threshold(fn, *case.bracket)
        res = CflResult(case.name, thr, case.target, tol, time.perf_counter() - t0)
        out.append(res)
        if progress is not None:
            progress(res)
    if wanted is not None and not out:
        raise ValueError(f"no CFL case matches {sorted(wanted)}")
    return out


# -- long-time stability ----------------------------------------------------------


@dataclass
class LongTimeResult:
    n: int
    ratio: float
    T: float
    times: list
    errors: list
    energies: list
    slope: float
    slope_stderr: float

    @property
    def stable(self) -> bool:
        """Log-error slope over the final half is zero within two standard errors."""
        return bool(np.isfinite(self.slope) and abs(self.slope) <= 2 * self.slope_stderr)


def run_energy_longtime(n: int = 160, T: float = 250.0, ratio: float = 2.09, method: str = "gp-improved",
                        samples: int = 500, progress: Callable[[float, float], None] | None = None) -> LongTimeResult:
    """Snell problem run to ``T`` at the given ``dt / h``, sampling the L2 error."""
    problem, sol = build_problem("snell", method, n)
    dt = ratio * problem.grid.h
    nsteps = math.ceil(T / dt - 1e-9)
    every = max(1, nsteps // samples)
    state = problem.initial_state(sol, dt)
    times, errors, energies = [], [], []
    for k in range(1, nsteps + 1):
        state = pc_step(problem, state)
        if k % every == 0 or k == nsteps:
            err = l2_error(problem, state.curr, sol, state.t)
            if not np.isfinite(err):
                raise InstabilityDetected(state.t, float("inf"))
            times.append(state.t)
            errors.append(err)
            d = state.velocity
            energies.append(problem.weighted_inner(d, d))
            if progress is not None:
                progress(state.t, err)
    t = np.asarray(times)
    late = t >= t[-1] / 2
    fit = stats.linregress(t[late], np.log(np.asarray(errors)[late]))
    return LongTimeResult(n, ratio, T, times, errors, energies, float(fit.slope), float(fit.stderr))


# -- ghost-system conditioning --------------------------------------------------------


@dataclass
class ConditionRow:
    n: int
    coarse_points: str
    cond_i: float
    cond_o: float
    cond2_i: float
    cond2_o: float
    nnz_i: int
    nnz_o: int


def run_conditioning_study(sizes: Sequence[int] = (320, 640)) -> list[ConditionRow]:
    """1-norm (and 2-norm) condition numbers and nonzero counts of both ghost systems."""
    rows = []
    for n in sizes:
        grid = CompositeGrid2D(n)
        mat = SnellSolution().material(grid)
        imp = InterfaceProblem(grid, mat, Scheme.GP_IMPROVED).coupler
        org = InterfaceProblem(grid, mat, Scheme.GP_ORIGINAL).coupler
        rows.append(ConditionRow(
            n, f"{n + 1}^2",
            condition_1norm(imp.matrix), condition_1norm(org.matrix),
            condition_2norm(imp.matrix), condition_2norm(org.matrix),
            imp.nnz, org.nnz,
        ))
    return rows


# -- energy checks ----------------------------------------------------------------------


def _random_state(problem: InterfaceProblem, rng) -> np.ndarray:
    g = problem.grid
    return problem.pack(rng.standard_normal(g.shape_fine), rng.standard_normal(g.shape_coarse))


def energy_drift(method: str, case: str = "snell", n: int = 24, steps: int = 100, ratio: float = 0.2,
                 seed: int = 3) -> float:
    """Largest relative change of the time-discrete energy over ``steps`` steps (zero data)."""
    problem, _ = build_problem(case, method, n, with_data=False)
    rng = np.random.default_rng(seed)
    u0 = _random_state(problem, rng)
    u1 = u0 + 0.01 * _random_state(problem, rng)
    state = initialize(problem, u0, u1, 0.0, ratio * problem.grid.h)
    e0 = problem.discrete_energy(state)
    worst = 0.0
    for _ in range(steps):
        state = pc_step(problem, state)
        worst = max(worst, abs(problem.discrete_energy(state) - e0))
    return worst / abs(e0)


def energy_rate_residual(method: str = "gp-improved", eta: bool = True, case: str = "snell", n: int = 12,
                         seed: int = 0) -> float:
    """Relative semi-discrete energy rate on a random constrained state."""
    sol = make_case(case)
    grid = CompositeGrid2D(n)
    scheme, order = METHODS[method]
    problem = InterfaceProblem(grid, sol.material(grid), scheme, order=order, eta=eta)
    rng = np.random.default_rng(seed)
    u = _random_state(problem, rng)
    problem.enforce(u, StageContext("init", 0.0, 1.0))
    ut = problem.constrained_velocity(rng)
    rate, scale = problem.energy_rate(u, ut)
    return abs(rate) / scale


# -- 1D checks ------------------------------------------------------------------------------


def neumann_equivalence(n: int = 33, steps: int = 1000, ratio: float = 0.3, samples: int = 100,
                        seed: int = 0) -> tuple[float, float]:
    """SAT-Neumann against GP-Neumann with the ghost-added operator.

    Returns the worst relative right-hand-side difference over random states and
    the relative trajectory difference after ``steps`` steps, both with
    variable material and time-dependent boundary data.
    """
    h = 1.0 / (n - 1)
    rng = np.random.default_rng(seed)
    mat = Material1D(rng.uniform(0.5, 2.0, n), rng.uniform(0.5, 2.0, n))

    def data(t):
        return 0.3 * math.cos(t)

    def make(kind):
        bc = BoundaryTreatment(kind, data)
        return Wave1D(Grid1D(n, h), mat, bc, bc)

    sat, gp = make(BCKind.SAT_NEUMANN), make(BCKind.GHOST_ADDED_NEUMANN)
    worst = 0.0
    for _ in range(samples):
        t = rng.uniform(0, 5)
        u = sat.extend(rng.standard_normal(n))
        v = u.copy()
        gp.enforce(v, StageContext("init", t, 1.0))
        a, b = sat.accel(u, t)[1:-1], gp.accel(v, t)[1:-1]
        worst = max(worst, np.abs(a - b).max() / np.abs(a).max())
    u0 = rng.standard_normal(n)
    u1 = u0 + 0.01 * rng.standard_normal(n)
    dt = ratio * h
    a = advance(sat, initialize(sat, sat.extend(u0), sat.extend(u1), 0.0, dt), steps)
    b = advance(gp, initialize(gp, gp.extend(u0), gp.extend(u1), 0.0, dt), steps)
    traj = np.abs(a.curr[1:-1] - b.curr[1:-1]).max() / np.abs(a.curr[1:-1]).max()
    return float(worst), float(traj)


def spectral_radius_check(n: int) -> tuple[float, float]:
    """Relative gaps of power iteration and a dense eigensolve to ``16 / (3 h^2)`` (periodic, unit material)."""
    h = 2 * math.pi / n
    mu = np.ones(n)

    def rhs(v):
        return apply_periodic(mu, v, h)

    exact = FourierSymbol(h).spectral_radius
    return (abs(spectral_radius(rhs, n) - exact) / exact, abs(dense_spectral_radius(rhs, n) - exact) / exact)


# -- operator certificates ----------------------------------------------------------------

_VARIANT_GROUPS = {
    "all": (Variant.WITH_GHOST, Variant.NO_GHOST, Variant.GHOST_REMOVED, Variant.GHOST_ADDED),
    "gp": (Variant.WITH_GHOST,),
    "sat": (Variant.NO_GHOST,),
    "gp-removed": (Variant.GHOST_REMOVED,),
    "sat-added": (Variant.GHOST_ADDED,),
}


# ghost slot first, then boundary point onwards; units of 1/h
_PRINTED_STENCILS = {
    Variant.GHOST_REMOVED: (Fraction(0),) + tuple(Fraction(c, 12) for c in (-25, 48, -36, 16, -3)),
    Variant.GHOST_ADDED: tuple(Fraction(c, 6) for c in (-2, -3, 6, -1)),
}


@dataclass
class CertificateRow:
    check: str
    variant: str
    n: int
    value: float
    tolerance: float
    passed: bool


def verify_operators(variant: str = "all", sizes: Sequence[int] | None = None, samples: int = 100,
                     seed: int = 0) -> list[CertificateRow]:
    """SBP identity, symmetry/PSD, ghost columns, exactness and borrowing certificates."""
    if variant not in _VARIANT_GROUPS:
        raise ValueError(f"unknown variant group {variant!r}")
    sizes = (12, 16, 33) if sizes is None else tuple(sizes)
    rng = np.random.default_rng(seed)
    rows: list[CertificateRow] = []

    def add(check, v, n, value, tol, ok=None):
        rows.append(CertificateRow(check, v.value, n, float(value), tol, bool(value <= tol if ok is None else ok)))

    for v in _VARIANT_GROUPS[variant]:
        op = load_operator(v)
        for n in sizes:
            worst = 0.0
            for _ in range(samples):
                mu = rng.uniform(0.5, 2.0, n)
                u = rng.standard_normal(n)
                w = rng.standard_normal(n + 2)
                if not op.uses_ghost:
                    w[[0, -1]] = 0.0
                h = rng.uniform(0.05, 1.0)
                worst = max(worst, sbp_identity_residual(op, mu, u, w, h))
            add("sbp-identity", v, n, worst, 1e-12)
            mu = rng.uniform(0.5, 2.0, n)
            M = sbp_bilinear_form(op, mu, 1.0, check_ghost=False)
            scale = np.abs(M).max()
            add("symmetric", v, n, np.abs(M - M.T).max() / scale, 1e-14)
            lam = np.linalg.eigvalsh(M).min()
            add("psd", v, n, max(0.0, -lam) / np.linalg.norm(M, 2), 1e-12)
        A, _, _ = _assembled_form(op, rng.uniform(0.5, 2.0, 16), 1.0)
        add("ghost-column", v, 16, np.abs(A[:, [0, -1]]).max() / np.abs(A).max(), 1e-14)
        worst_c = worst_i = 0.0
        for a in range(0, 4):
            for b in range(0, 4 - a):
                c, i = exactness_error(op, a, b)
                worst_c, worst_i = max(worst_c, c), max(worst_i, i)
        add("exactness-closure", v, 24, worst_c, 1e-10)
        worst_i = 0.0
        for a in range(0, 5):
            for b in range(0, 5 - a):
                _, i = exactness_error(op, a, b)
                worst_i = max(worst_i, i)
        add("exactness-interior", v, 24, worst_i, 1e-10)
        if v in _PRINTED_STENCILS:
            want = _PRINTED_STENCILS[v]
            got = op.boundary_derivative.coefficients[: len(want)]
            rest = op.boundary_derivative.coefficients[len(want):]
            ok = tuple(got) == want and not any(rest)
            rows.append(CertificateRow("stencil-exact", v.value, 0, 0.0 if ok else 1.0, 0.0, ok))
        if v is Variant.NO_GHOST:
            for n in (16, 33):
                mu = rng.uniform(0.5, 2.0, n)
                Mu, alpha, _ = borrowing_split(op, mu)
                lam = np.linalg.eigvalsh(Mu).min() / np.linalg.norm(Mu, 2)
                add("borrowing-psd", v, n, max(0.0, -lam), 1e-12)
                Mu2, _, _ = borrowing_split(op, np.ones(n), alpha=1.1 * alpha)
                lam2 = np.linalg.eigvalsh(Mu2).min()
                rows.append(CertificateRow("borrowing-indefinite-1.1alpha", v.value, n, float(lam2), 0.0, bool(lam2 < 0)))
    return rows


# -- output ----------------------------------------------------------------------------------


def write_csv(rows: Sequence, path: str | Path) -> Path:
    """Write dataclass rows (or dicts) to ``path``; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = [dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r) for r in rows]
    if not records:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0]))
        writer.writeheader()
        writer.writerows(records)
    return path
