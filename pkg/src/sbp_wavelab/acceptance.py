"""Reference values and pass/fail evaluation of harness results.

Each ``check_*`` function turns harness output into :class:`Check` records;
the CLI exits nonzero when any record fails.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "Check",
    "LEVELS",
    "REFERENCE_ERRORS",
    "RATE_TARGETS",
    "REFERENCE_COND_O",
    "check_operators",
    "check_neumann",
    "check_spectral",
    "check_cfl",
    "check_convergence",
    "check_conditioning",
    "check_longtime",
    "check_energy",
]


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.criterion:>2} {self.name}: {self.detail}"


# coarse-block cell counts of the refinement levels
LEVELS = (80, 160, 320, 640, 1280)

_GP_SNELL = (1.6439e-3, 1.0076e-4, 6.2738e-6, 3.9193e-7, 2.4344e-8)
_GP_SMOOTH = (2.7076e-4, 1.6000e-5, 9.7412e-7, 6.0183e-8, 3.7426e-9)

REFERENCE_ERRORS = {
    ("snell", "gp-improved"): _GP_SNELL,
    ("snell", "gp-original"): _GP_SNELL,
    ("snell", "sat3"): (3.0832e-3, 3.4792e-4, 4.4189e-5, 5.6079e-6, 7.0745e-7),
    ("snell", "int6"): (2.1022e-3, 1.1014e-4, 6.6815e-6, 4.0346e-7, 2.4651e-8),
    ("smooth", "gp-improved"): _GP_SMOOTH,
    ("smooth", "gp-original"): _GP_SMOOTH,
    ("smooth", "sat3"): (3.8636e-3, 4.3496e-4, 5.3152e-5, 6.6271e-6, 8.2783e-7),
    ("smooth", "int6"): (1.8503e-3, 9.4736e-5, 3.7043e-6, 2.0779e-7, 1.3372e-8),
}

# (target, tolerance) for the observed rate between consecutive levels
RATE_TARGETS = {
    "gp-improved": (4.0, 0.10),
    "gp-original": (4.0, 0.10),
    "sat3": (3.0, 0.2),
    "int6": (4.0, 0.3),
}

ERROR_TOLERANCE = 0.05

REFERENCE_COND_I = 1.26
REFERENCE_COND_O = {320: 778.0, 640: 1680.0, 1280: 3425.0}


def _by(rows, key):
    out = defaultdict(list)
    for r in rows:
        out[getattr(r, key)].append(r)
    return out


def check_operators(rows: Sequence) -> list[Check]:
    """Criteria 1 to 3 from :func:`harness.verify_operators` rows."""
    groups = _by(rows, "check")
    out = []
    cert = [r for name in ("sbp-identity", "symmetric", "psd", "ghost-column", "exactness-closure",
                           "exactness-interior") for r in groups.get(name, [])]
    if cert:
        bad = [f"{r.check}/{r.variant}/n={r.n}: {r.value:.2e}" for r in cert if not r.passed]
        worst = max(r.value for r in groups.get("sbp-identity", cert))
        out.append(Check(1, "operator certificates", not bad,
                         "; ".join(bad) if bad else f"{len(cert)} certificates, worst SBP residual {worst:.1e}"))
    if "stencil-exact" in groups:
        rs = groups["stencil-exact"]
        out.append(Check(2, "ghost-transform stencils", all(r.passed for r in rs),
                         ", ".join(f"{r.variant}={'exact' if r.passed else 'differs'}" for r in rs)))
    borrow = groups.get("borrowing-psd", []) + groups.get("borrowing-indefinite-1.1alpha", [])
    if borrow:
        out.append(Check(3, "borrowing constant", all(r.passed for r in borrow),
                         ", ".join(f"{r.check}/n={r.n}: {r.value:.2e}" for r in borrow)))
    return out


def check_neumann(rhs_gap: float, trajectory_gap: float) -> list[Check]:
    ok = rhs_gap <= 1e-13 and trajectory_gap <= 1e-12
    return [Check(4, "SAT/GP Neumann equivalence", ok, f"rhs {rhs_gap:.1e} (<=1e-13), trajectory {trajectory_gap:.1e} (<=1e-12)")]


def check_spectral(results: dict) -> list[Check]:
    """``results`` maps ``n`` to ``(power_gap, dense_gap)``."""
    ok = all(p <= 1e-8 and d <= 1e-10 for p, d in results.values())
    detail = ", ".join(f"n={n}: power {p:.1e}, dense {d:.1e}" for n, (p, d) in results.items())
    return [Check(5, "periodic spectral radius", ok, detail)]


def check_cfl(results: Iterable) -> list[Check]:
    return [
        Check(6, f"CFL {r.name}", r.passed, f"{r.threshold:.3f} vs {r.target:.2f} (+-{r.tolerance:.2f})")
        for r in results
    ]


def check_convergence(rows: Sequence) -> list[Check]:
    """Criterion 7: errors within 5% of reference and observed rates on target."""
    if not rows:
        return []
    case, method = rows[0].case, rows[0].method
    ref = REFERENCE_ERRORS[(case, method)]
    target, tol = RATE_TARGETS[method]
    out = []
    for r in rows:
        k = LEVELS.index(r.n)
        gap = abs(r.error - ref[k]) / ref[k]
        out.append(Check(7, f"{case}/{method} error n={r.n}", gap <= ERROR_TOLERANCE,
                         f"{r.error:.4e} vs {ref[k]:.4e} ({100 * gap:.1f}%)"))
        if r.rate is not None:
            out.append(Check(7, f"{case}/{method} rate n={r.n}", abs(r.rate - target) <= tol,
                             f"{r.rate:.2f} vs {target:.1f} (+-{tol})"))
    if len(rows) > 1:
        errs = [r.error for r in rows]
        out.append(Check(7, f"{case}/{method} monotone", all(b < a for a, b in zip(errs, errs[1:])),
                         " > ".join(f"{e:.2e}" for e in errs)))
    return out


def check_conditioning(rows: Sequence) -> list[Check]:
    out = []
    for r in rows:
        out.append(Check(8, f"cond_i n={r.n}", abs(r.cond_i - REFERENCE_COND_I) <= 0.05, f"{r.cond_i:.3f}"))
        if r.n in REFERENCE_COND_O:
            ref = REFERENCE_COND_O[r.n]
            gap = abs(r.cond_o - ref) / ref
            out.append(Check(8, f"cond_o n={r.n}", gap <= 0.10, f"{r.cond_o:.1f} vs {ref:.0f} ({100 * gap:.0f}%)"))
        out.append(Check(8, f"nnz n={r.n}", r.nnz_i == 7 * r.n and r.nnz_o == 13 * r.n,
                         f"nnz_i {r.nnz_i} (7n={7 * r.n}), nnz_o {r.nnz_o} (13n={13 * r.n})"))
    conds = [r.cond_o for r in sorted(rows, key=lambda r: r.n)]
    if len(conds) > 1:
        grows = all(b > a for a, b in zip(conds, conds[1:]))
        out.append(Check(8, "cond_o grows with n", grows, ", ".join(f"{c:.1f}" for c in conds)))
    return out


def check_longtime(result) -> list[Check]:
    """Slope test over the final half, plus a bound on the late error against the early peak."""
    half = len(result.errors) // 2
    early, late = max(result.errors[:half]), max(result.errors[half:])
    return [
        Check(9, "long-time stability", result.stable,
              f"log-error slope {result.slope:.2e} +- {result.slope_stderr:.1e} over t in "
              f"[{result.T / 2:.0f}, {result.T:.0f}], final error {result.errors[-1]:.3e}"),
        Check(9, "long-time error bounded", late <= early,
              f"final-half max {late:.3e} vs first-half max {early:.3e}"),
    ]


def check_energy(drifts: dict, residual_eta: float, residual_no_eta: float) -> list[Check]:
    out = [Check(10, f"energy drift {m}", d <= 1e-8, f"{d:.1e} (<=1e-8)") for m, d in drifts.items()]
    out.append(Check(10, "energy rate with eta", residual_eta <= 1e-12, f"{residual_eta:.1e}"))
    out.append(Check(10, "energy rate without eta", residual_no_eta > 1e-6, f"{residual_no_eta:.1e} (>1e-6)"))
    return out
