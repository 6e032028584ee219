import math

import numpy as np
import pytest

from sbp_wavelab.harness import ManufacturedCase, SnellSolution, build_problem, energy_drift, energy_rate_residual, l2_error
from sbp_wavelab.interface2d import (
    Block2D,
    CompositeGrid2D,
    EnergyLedger,
    InterfaceProblem,
    InterpolationOperator,
    Material2D,
    Scheme,
    sat3_tau_bound,
    step_interface,
)
from sbp_wavelab.sbp_operators import Variant, apply_extended, apply_periodic, load_operator
from sbp_wavelab.timestepping import StageContext, advance, initialize


def random_state(problem, rng):
    g = problem.grid
    return problem.pack(rng.standard_normal(g.shape_fine), rng.standard_normal(g.shape_coarse))


class TestGrid:
    def test_shapes(self):
        g = CompositeGrid2D(16)
        assert g.H == pytest.approx(4 * math.pi / 16) and g.h == pytest.approx(g.H / 2)
        Xf, Yf = g.mesh("fine")
        Xc, Yc = g.mesh("coarse")
        assert Xf.shape == g.shape_fine == (33, 32)
        assert Xc.shape == g.shape_coarse == (17, 16)
        assert Yf[0, 0] == 0 and Yc[-1, 0] == pytest.approx(0) and Yf[-1, 0] == pytest.approx(g.length)
        assert np.allclose(Xf[0, ::2], Xc[0])

    def test_too_small(self):
        with pytest.raises(ValueError):
            CompositeGrid2D(8)

    def test_material(self):
        g = CompositeGrid2D(12)
        m = Material2D.piecewise_constant(g)
        assert np.all(m.mu_f == 0.25) and np.all(m.mu_c == 1.0)
        with pytest.raises(ValueError):
            Material2D.from_functions(g, lambda b, X, Y: -1.0, lambda b, X, Y: 1.0)


class TestInterpolation:
    @pytest.mark.parametrize("order", [4, 6])
    def test_compatibility(self, order):
        ip = InterpolationOperator(order)
        n = 16
        assert np.allclose(ip.restriction_matrix(n), ip.matrix(n).T / 2, atol=0)
        assert np.allclose(ip.interpolate(np.ones(n)), 1) and np.allclose(ip.restrict(np.ones(2 * n)), 1)

    @pytest.mark.parametrize("order", [4, 6])
    def test_accuracy(self, order):
        ip = InterpolationOperator(order)

        def err(n):
            L = 2 * math.pi
            xc = L / n * np.arange(n)
            xf = L / (2 * n) * np.arange(2 * n)
            return np.abs(ip.interpolate(np.sin(xc)) - np.sin(xf)).max()

        assert math.log2(err(32) / err(64)) == pytest.approx(order, abs=0.1)

    def test_batched_rows(self):
        ip = InterpolationOperator(4)
        C = np.random.default_rng(0).standard_normal((3, 12))
        F = ip.interpolate(C)
        assert np.allclose(F[1], ip.interpolate(C[1]))
        assert np.allclose(ip.restrict(F)[2], ip.restrict(F[2]))

    def test_bad_order(self):
        with pytest.raises(ValueError):
            InterpolationOperator(5)


class TestBlock:
    @pytest.mark.parametrize("low,high", [("with_ghost", "no_ghost"), ("no_ghost", "with_ghost"), ("no_ghost", "no_ghost")])
    def test_apply_matches_1d(self, low, high):
        rng = np.random.default_rng(1)
        ny, nx, h = 20, 10, 0.3
        mu = rng.uniform(0.5, 2, (ny, nx))
        u = rng.standard_normal((ny + 2, nx))
        lo, hi = load_operator(low), load_operator(high)
        b = Block2D(mu, h, lo, hi)
        gy = apply_extended(lo, hi, mu, u, h)
        gx = np.stack([apply_periodic(mu[j], u[j + 1], h) for j in range(ny)])
        assert np.allclose(b.apply(u), gx + gy, rtol=1e-12, atol=1e-10)
        assert np.allclose(b.row(u, "low"), (gx + gy)[0])
        assert np.allclose(b.row(u, "high"), (gx + gy)[-1])

    def test_bilinear_identity(self):
        # (u, G v) = -S(u, v) - <u_1, mu v'_1> + <u_n, mu v'_n> along y
        rng = np.random.default_rng(2)
        ny, nx, h = 16, 8, 0.2
        mu = rng.uniform(0.5, 2, (ny, nx))
        b = Block2D(mu, h, load_operator(Variant.WITH_GHOST), load_operator(Variant.NO_GHOST))
        u = rng.standard_normal((ny + 2, nx))
        v = rng.standard_normal((ny + 2, nx))
        u[0] = u[-1] = v[-1] = 0
        lhs = b.inner(u[1:-1], b.apply(v))
        rhs = -b.bilinear(u[1:-1], v[1:-1]) - h * np.sum(u[1] * b.flux(v, "low")) + h * np.sum(u[-2] * b.flux(v, "high"))
        assert lhs == pytest.approx(rhs, rel=1e-11)
        assert b.bilinear(u[1:-1], v[1:-1]) == pytest.approx(b.bilinear(v[1:-1], u[1:-1]), rel=1e-12)

    def test_ghost_coefficients(self):
        rng = np.random.default_rng(3)
        ny, nx, h = 16, 6, 0.2
        mu = rng.uniform(0.5, 2, (ny, nx))
        gp = load_operator(Variant.WITH_GHOST)
        b = Block2D(mu, h, gp, gp)
        u = rng.standard_normal((ny + 2, nx))
        for end, gi in (("low", 0), ("high", -1)):
            v = u.copy()
            v[gi] += 1.0
            assert np.allclose(b.row(v, end) - b.row(u, end), b.ghost_coefficient(end))
            assert np.allclose(b.flux(v, end) - b.flux(u, end), b.flux_ghost_coefficient(end))

    def test_derivative_vector(self):
        h = 0.1
        ny = 14
        y = h * np.arange(ny)
        b = Block2D(np.ones((ny, 4)), h, load_operator(Variant.NO_GHOST), load_operator(Variant.NO_GHOST))
        assert b.derivative_vector("low") @ y**2 == pytest.approx(0, abs=1e-12)
        assert b.derivative_vector("high") @ y**2 == pytest.approx(2 * y[-1])


class TestExactSolutions:
    def test_snell_interface_conditions(self):
        s = SnellSolution()
        x = np.linspace(0, 4, 9)
        t, e = 0.7, 1e-5
        zero = np.zeros_like(x)
        assert np.allclose(s("fine", x, zero, t), s("coarse", x, zero, t), atol=1e-14)
        dy = lambda b: (s(b, x, zero + e, t) - s(b, x, zero - e, t)) / (2 * e)
        assert np.allclose(s.mu_fine * dy("fine"), s.mu_coarse * dy("coarse"), atol=1e-8)

    @pytest.mark.parametrize("block,mu", [("fine", 0.25), ("coarse", 1.0)])
    def test_snell_pde(self, block, mu):
        s = SnellSolution()
        x, y, t, e = 0.4, -0.3 if block == "coarse" else 0.3, 1.1, 1e-3
        f = lambda dx, dy, dt: s(block, x + dx, y + dy, t + dt)
        utt = (f(0, 0, e) - 2 * f(0, 0, 0) + f(0, 0, -e)) / e**2
        lap = (f(e, 0, 0) + f(-e, 0, 0) + f(0, e, 0) + f(0, -e, 0) - 4 * f(0, 0, 0)) / e**2
        assert utt == pytest.approx(mu * lap, abs=1e-5)

    def test_manufactured_forcing(self):
        c = ManufacturedCase()
        rng = np.random.default_rng(4)
        X, Y = rng.uniform(-3, 3, (2, 5, 4))
        t, e = 0.8, 1e-3
        u = lambda dx, dy, dt: c("fine", X + dx, Y + dy, t + dt)
        mu = lambda dx, dy: c.mu("fine", X + dx, Y + dy)
        utt = (u(0, 0, e) - 2 * u(0, 0, 0) + u(0, 0, -e)) / e**2
        div = (mu(e / 2, 0) * (u(e, 0, 0) - u(0, 0, 0)) - mu(-e / 2, 0) * (u(0, 0, 0) - u(-e, 0, 0))
               + mu(0, e / 2) * (u(0, e, 0) - u(0, 0, 0)) - mu(0, -e / 2) * (u(0, 0, 0) - u(0, -e, 0))) / e**2
        F = c.rho("fine", X, Y) * utt - div
        assert np.allclose(c.forcing("fine", X, Y, t), F, atol=1e-5)
        # a second call reuses the cached spatial factor
        assert np.array_equal(c.forcing("fine", X, Y, t), c.forcing("fine", X, Y, t))
        assert np.allclose(c.forcing_tt("fine", X, Y, t), -c.forcing("fine", X, Y, t))


class TestCoupling:
    @pytest.mark.parametrize("n", [16, 24])
    def test_nnz(self, n):
        g = CompositeGrid2D(n)
        mat = Material2D.piecewise_constant(g)
        assert InterfaceProblem(g, mat, Scheme.GP_IMPROVED).coupler.nnz == 7 * n
        assert InterfaceProblem(g, mat, Scheme.GP_ORIGINAL).coupler.nnz == 13 * n
        assert InterfaceProblem(g, mat, Scheme.SAT3).coupler.nnz == 0

    def test_improved_condition_is_mesh_independent(self):
        conds = []
        for n in (16, 32, 64):
            g = CompositeGrid2D(n)
            conds.append(InterfaceProblem(g, Material2D.piecewise_constant(g), "gp-improved").coupler.condition())
        assert max(conds) - min(conds) < 1e-6 and max(conds) < 1.5

    def test_improved_enforcement(self):
        p, _ = build_problem("smooth", "gp-improved", 16, with_data=False)
        u = random_state(p, np.random.default_rng(5))
        p.enforce(u, StageContext("corrector", 0.0, 0.1))
        f, c = p.split(u)
        assert np.allclose(p.continuity_defect(u), 0)
        hw1 = p.fine.h * p.fine.weights[0]
        ac = p.coarse.row(c, "high") / p.material.rho_c[-1]
        eta = p.material.rho_f[0] * p.P(ac) - p.fine.row(f, "low")
        assert np.allclose(p.coarse.flux(c, "high"), p.R(p.fine.flux(f, "low") - hw1 * eta), atol=1e-11)
        assert np.allclose(f[-2], 0) and np.allclose(c[1], 0)

    def test_original_enforcement(self):
        p, _ = build_problem("smooth", "gp-original", 16, with_data=False)
        rng = np.random.default_rng(6)
        prev, curr = random_state(p, rng), random_state(p, rng)
        for u in (prev, curr):
            p.enforce(u, StageContext("init", 0.0, 0.1))
        new = random_state(p, rng)
        ctx = StageContext("predictor", 0.1, 0.1, curr, prev)
        p.enforce(new, ctx)
        f, c = p.split(new)
        assert np.allclose(p.coarse.flux(c, "high"), p.R(p.fine.flux(f, "low")), atol=1e-11)
        want = 2 * p.interface_jump(curr) - p.interface_jump(prev)
        assert np.allclose(p.interface_jump(new), want, atol=1e-9)

    def test_sat3_tau(self):
        g = CompositeGrid2D(12)
        m = Material2D.piecewise_constant(g)
        assert sat3_tau_bound(m.mu_f, m.mu_c) == pytest.approx(1 / (2 * 0.2505765857))
        p = InterfaceProblem(g, m, "sat3", tau_margin=0.5)
        assert p.tau_f == pytest.approx(1.5 * p.tau_bound) and p.tau_c == 2 * p.tau_f


class TestEnergy:
    @pytest.mark.parametrize("method", ["gp-improved", "gp-original", "sat3", "int6"])
    @pytest.mark.parametrize("case", ["snell", "smooth"])
    def test_discrete_energy_conserved(self, method, case):
        assert energy_drift(method, case, n=16, steps=60) < 1e-12

    def test_rate_cancellation_needs_eta(self):
        assert energy_rate_residual("gp-improved", eta=True) < 1e-13
        assert energy_rate_residual("gp-improved", eta=False) > 1e-3
        assert energy_rate_residual("gp-original") < 1e-13
        assert energy_rate_residual("gp-improved", eta=True, case="smooth") < 1e-13

    def test_components_and_ledger(self):
        p, _ = build_problem("snell", "gp-improved", 16, with_data=False)
        rng = np.random.default_rng(7)
        u0 = random_state(p, rng)
        s = initialize(p, u0, u0 + 0.01 * random_state(p, rng), 0.0, 0.2 * p.grid.h)
        ledger = EnergyLedger()
        for _ in range(20):
            kf, sf, kc, sc = p.energy_components(s)
            ledger.record(s.t, kf, sf, kc, sc, p.discrete_energy(s))
            s = step_interface(p, s)
        assert ledger.relative_drift() < 1e-12
        assert len(ledger.rows()) == 20 and kf > 0 and kc > 0


class TestAccuracy:
    @pytest.mark.parametrize("method", ["gp-improved", "gp-original", "int6"])
    def test_snell_fourth_order(self, method):
        errs = []
        for n in (24, 48):
            p, sol = build_problem("snell", method, n)
            steps = math.ceil(2.0 / p.grid.h)
            s = advance(p, p.initial_state(sol, 2.0 / steps), steps)
            errs.append(l2_error(p, s.curr, sol, s.t))
        assert math.log2(errs[0] / errs[1]) > 3.6

    @pytest.mark.parametrize("method,rate", [("gp-improved", 3.6), ("sat3", 2.6)])
    def test_smooth_rates(self, method, rate):
        errs = []
        for n in (24, 48):
            p, sol = build_problem("smooth", method, n)
            steps = math.ceil(2.0 / (0.7 * p.grid.h))
            s = advance(p, p.initial_state(sol, 2.0 / steps), steps)
            errs.append(l2_error(p, s.curr, sol, s.t))
        assert math.log2(errs[0] / errs[1]) > rate

    def test_mu_weighted_sat_still_runs(self):
        g = CompositeGrid2D(16)
        sol = SnellSolution()
        p = InterfaceProblem(g, sol.material(g), "sat3", boundary=sol, sat_mu_weighted=True)
        s = advance(p, p.initial_state(sol, g.h), 10)
        assert np.isfinite(l2_error(p, s.curr, sol, s.t))
