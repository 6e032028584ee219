import math

import numpy as np
import pytest

from sbp_wavelab.sbp_operators import apply_periodic
from sbp_wavelab.timestepping import (
    FourierSymbol,
    InstabilityDetected,
    TwoLevelState,
    advance,
    cfl_threshold,
    dense_spectral_radius,
    initialize,
    periodic_cfl_bound,
    run_until,
    spectral_radius,
)


class Oscillator:
    """u'' = -w^2 u + F(t) on a vector of independent frequencies."""

    def __init__(self, w, forced=False):
        self.w = np.asarray(w, dtype=float)
        self.forced = forced

    def force(self, t):
        # exact solution cos(t) + sin(2t) per component
        return (self.w**2 - 1) * math.cos(t) + (self.w**2 - 4) * math.sin(2 * t)

    def exact(self, t):
        return (math.cos(t) + math.sin(2 * t)) * np.ones_like(self.w) if self.forced else np.cos(self.w * t)

    def accel(self, u, t, homogeneous=False):
        a = -self.w**2 * u
        if self.forced and not homogeneous:
            a = a + self.force(t)
        return a

    def source_tt(self, t, dt):
        if not self.forced:
            return None
        return -(self.w**2 - 1) * math.cos(t) - 4 * (self.w**2 - 4) * math.sin(2 * t)

    def enforce(self, u, ctx):
        pass


def final_error(problem, dt, T, scheme):
    s = initialize(problem, problem.exact(-dt), problem.exact(0.0), 0.0, dt)
    n = round(T / dt)
    s = advance(problem, s, n, scheme)
    return np.abs(s.curr - problem.exact(n * dt)).max()


@pytest.mark.parametrize("forced", [False, True])
def test_pc_fourth_order(forced):
    p = Oscillator([1.0, 2.5], forced)
    e1, e2 = final_error(p, 0.02, 4.0, "pc"), final_error(p, 0.01, 4.0, "pc")
    assert 3.8 < math.log2(e1 / e2) < 4.3


def test_stormer_second_order():
    p = Oscillator([1.0, 2.5])
    e1, e2 = final_error(p, 0.02, 4.0, "stormer"), final_error(p, 0.01, 4.0, "stormer")
    assert 1.9 < math.log2(e1 / e2) < 2.1


def test_stability_limits():
    # Stormer is stable for w dt < 2, predictor-corrector for w dt < 2 sqrt(3)
    p = Oscillator([1.0])

    def grows(dt, scheme):
        s = initialize(p, np.array([1.0]), np.array([1.0]), 0.0, dt)
        try:
            run_until(p, s, 2000 * dt, scheme=scheme)
        except InstabilityDetected:
            return True
        return False

    assert not grows(1.99, "stormer") and grows(2.01, "stormer")
    assert not grows(2 * math.sqrt(3) - 0.01, "pc") and grows(2 * math.sqrt(3) + 0.01, "pc")


def test_two_level_state():
    with pytest.raises(ValueError):
        TwoLevelState(np.zeros(2), np.zeros(2), 0.0, 0.0)
    with pytest.raises(ValueError):
        TwoLevelState(np.zeros(2), np.zeros(3), 0.0, 0.1)
    s = TwoLevelState(np.zeros(2), np.ones(2), 0.0, 0.5)
    assert np.allclose(s.velocity, 2.0)


def test_enforce_hook_stages():
    seen = []

    class Recorder(Oscillator):
        def enforce(self, u, ctx):
            seen.append(ctx.stage)

    p = Recorder([1.0])
    s = initialize(p, np.zeros(1), np.zeros(1), 0.0, 0.1)
    advance(p, s, 1, "pc")
    advance(p, s, 1, "stormer")
    assert seen == ["init", "init", "predictor", "corrector", "stormer"]


def test_run_until_monitor_and_time():
    p = Oscillator([1.0])
    ticks = []
    s = run_until(p, initialize(p, np.ones(1), np.ones(1), 0.0, 0.3), 3.0, monitor=lambda st: ticks.append(st.t))
    assert s.t == pytest.approx(3.0) and len(ticks) == 10


class TestSymbol:
    def test_radius_and_limits(self):
        s = FourierSymbol(h=0.1, mu=2.0, rho=0.5)
        assert s.spectral_radius == pytest.approx(16 * 4 / (3 * 0.01))
        assert abs(s(math.pi / 0.1)) == pytest.approx(s.spectral_radius)
        assert s.pc_limit == pytest.approx(math.sqrt(3) * s.stormer_limit)

    def test_periodic_bounds(self):
        assert periodic_cfl_bound() == pytest.approx(1.5)
        assert periodic_cfl_bound(2) == pytest.approx(1.5 / math.sqrt(2))
        assert periodic_cfl_bound(2, mu=3, rho=2) == pytest.approx(math.sqrt(3) / 2)

    def test_symbol_matches_stencil(self):
        n = 32
        h = 2 * math.pi / n
        x = h * np.arange(n)
        s = FourierSymbol(h)
        for k in (1, 5, 16):
            u = np.cos(k * x)
            assert np.allclose(apply_periodic(np.ones(n), u, h), s(k) * u)

    @pytest.mark.parametrize("n", [64, 256])
    def test_power_iteration(self, n):
        h = 2 * math.pi / n
        rhs = lambda v: apply_periodic(np.ones(n), v, h)
        exact = FourierSymbol(h).spectral_radius
        assert spectral_radius(rhs, n) == pytest.approx(exact, rel=1e-8)
        assert dense_spectral_radius(rhs, n) == pytest.approx(exact, rel=1e-10)

    def test_weighted_power_iteration(self):
        n = 40
        rho = np.linspace(1, 2, n)
        h = 2 * math.pi / n
        rhs = lambda v: apply_periodic(np.ones(n), v, h) / rho
        got = spectral_radius(rhs, n, weights=rho)
        assert got == pytest.approx(dense_spectral_radius(rhs, n), rel=1e-8)

    def test_no_convergence(self):
        with pytest.raises(RuntimeError):
            spectral_radius(lambda v: -np.arange(1, 101) * v, 100, maxiter=3)


class TestBisection:
    def test_finds_threshold(self):
        c = cfl_threshold(lambda r: r < 1.234, 1.0, 2.0)
        assert abs(c - 1.234) <= 0.01

    def test_bad_brackets(self):
        with pytest.raises(ValueError):
            cfl_threshold(lambda r: False, 1.0, 2.0)
        with pytest.raises(ValueError):
            cfl_threshold(lambda r: True, 1.0, 2.0)
