import numpy as np
import pytest

from conftest import (make_system, random_certified_setup, random_problem,
                      simple_certificate)

from submhe._kernel import run_pgd
from submhe.errors import (DegenerateHessian, MaxCyclesExceeded,
                           NonfiniteIterate)
from submhe.mhe import MheProblem, build_problem
from submhe.model import Box
from submhe.solver import (attach_distances, contraction_rate, kkt_residual,
                           project_box, solve_fixed_iters, solve_oracle)


def plain_problem(weight, reference, lower=None, upper=None):
    """Problem with an identity lift, for exercising the solver in isolation."""
    weight = np.asarray(weight, dtype=float)
    n = weight.shape[0]
    sys = make_system(np.zeros((n, n)), np.zeros((n, 1)), np.zeros((1, n)))
    return MheProblem(
        sys=sys, t=0, horizon=1, m_eff=0, weight=weight,
        reference=np.asarray(reference, dtype=float),
        lift_matrix=np.eye(n), lift_offset=np.zeros(n),
        lower=np.full(n, -np.inf) if lower is None else np.asarray(lower, float),
        upper=np.full(n, np.inf) if upper is None else np.asarray(upper, float),
        x_prior=np.asarray(reference, dtype=float),
        u_window=np.zeros((0, 1)), y_window=np.zeros((0, 1)))


class TestProjectBox:
    def test_identity_inside(self):
        v = np.array([0.05, -0.02])
        out = project_box(v, np.array([-0.1, -0.1]), np.array([0.1, 0.1]))
        assert np.array_equal(out, v)

    def test_clamps(self):
        assert project_box(np.array([0.3]), np.array([-0.1]),
                           np.array([0.1]))[0] == 0.1

    def test_unbounded_sides(self):
        v = np.array([1e12, -1e12])
        out = project_box(v, np.array([-np.inf, -np.inf]),
                          np.array([np.inf, np.inf]))
        assert np.array_equal(out, v)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        lo, hi = -rng.random(5), rng.random(5)
        v = rng.standard_normal(5) * 3
        once = project_box(v, lo, hi)
        assert np.array_equal(project_box(once, lo, hi), once)


class TestContractionRate:
    def test_identity_weight_one_step(self):
        prob = plain_problem(np.eye(3), np.zeros(3))
        alpha, q = contraction_rate(prob)
        assert alpha == pytest.approx(0.5)
        assert q == pytest.approx(0.0, abs=1e-15)

    def test_hand_conditioned(self):
        prob = plain_problem(np.diag([0.5, 2.0]), np.zeros(2))
        alpha, q = contraction_rate(prob)
        assert alpha == pytest.approx(0.25)
        assert q == pytest.approx(0.75)

    def test_case_study_base_below_paper_rate(self, case_study):
        sys, cert, _ = case_study
        worst = 0.0
        for t in range(6):
            m_eff = min(5, t)
            prob = build_problem(sys, cert, np.zeros(4), np.zeros((m_eff, 2)),
                                 np.zeros((m_eff, 1)), 5, t)
            worst = max(worst, contraction_rate(prob)[1])
        assert worst <= 0.98

    def test_degenerate_weight_raises(self):
        prob = plain_problem(np.diag([1.0, 0.0]), np.zeros(2))
        with pytest.raises(DegenerateHessian):
            contraction_rate(prob)


class TestSolveFixedIters:
    def test_optimum_is_fixed_point(self):
        rng = np.random.default_rng(1)
        sys, cert = random_certified_setup(rng)
        prob = random_problem(rng, sys, cert)
        z_star = solve_oracle(prob, tol=1e-12)
        rep = solve_fixed_iters(prob, z_star.z, 25)
        assert np.linalg.norm(rep.point.z - z_star.z) <= 1e-12

    def test_zero_iterations_projects(self):
        prob = plain_problem(np.eye(2), np.zeros(2),
                             lower=np.array([-1.0, -1.0]),
                             upper=np.array([1.0, 1.0]))
        rep = solve_fixed_iters(prob, np.array([3.0, -5.0]), 0)
        assert np.array_equal(rep.point.v, [1.0, -1.0])

    def test_linear_contraction_vs_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            sys, cert = random_certified_setup(rng)
            prob = random_problem(rng, sys, cert)
            _, q = contraction_rate(prob)
            z_star = solve_oracle(prob, tol=1e-11)
            v0 = np.clip(rng.uniform(-2, 2, size=prob.dim_v),
                         prob.lower, prob.upper)
            z0 = prob.lift(v0)
            d0_v = np.linalg.norm(v0 - z_star.v)
            d0_z = np.linalg.norm(z0 - z_star.z)
            rep = solve_fixed_iters(prob, z0, 50)
            assert np.linalg.norm(rep.point.v - z_star.v) <= q ** 50 * d0_v + 1e-9
            assert np.linalg.norm(rep.point.z - z_star.z) <= q ** 50 * d0_z + 1e-9

    def test_per_iteration_feasibility_and_monotone_cost(self):
        rng = np.random.default_rng(3)
        sys, cert = random_certified_setup(rng)
        prob = random_problem(rng, sys, cert)
        v0 = rng.uniform(-3, 3, size=prob.dim_v)  # possibly infeasible start
        rep = solve_fixed_iters(prob, prob.lift(np.clip(v0, prob.lower, prob.upper)),
                                30, record=True)
        for v in rep.history[1:]:
            assert np.all(v >= prob.lower - 0.0)
            assert np.all(v <= prob.upper + 0.0)
        assert np.all(np.diff(rep.costs) <= 1e-12 * np.maximum(1.0, rep.costs[:-1]))

    def test_per_iteration_ratio_never_exceeds_base(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            sys, cert = random_certified_setup(rng)
            prob = random_problem(rng, sys, cert)
            _, q = contraction_rate(prob)
            z_star = solve_oracle(prob, tol=1e-12)
            v0 = np.clip(rng.uniform(-2, 2, size=prob.dim_v),
                         prob.lower, prob.upper)
            rep = solve_fixed_iters(prob, prob.lift(v0), 40, record=True)
            dv = np.linalg.norm(rep.history - z_star.v, axis=1)
            live = dv[:-1] > 1e-10 * max(1.0, dv[0])
            ratios = dv[1:][live] / dv[:-1][live]
            assert ratios.size == 0 or np.max(ratios) <= q + 1e-10

    def test_distances_attachment(self):
        rng = np.random.default_rng(5)
        sys, cert = random_certified_setup(rng)
        prob = random_problem(rng, sys, cert)
        z_star = solve_oracle(prob)
        rep = solve_fixed_iters(prob, prob.lift(np.zeros(prob.dim_v)), 10,
                                record=True)
        rep = attach_distances(prob, rep, z_star)
        assert rep.per_iteration_distances.shape == (11,)
        assert rep.per_iteration_distances[-1] <= rep.per_iteration_distances[0]

    def test_nonfinite_iterate(self):
        prob = plain_problem(np.eye(2), np.array([np.nan, 0.0]))
        with pytest.raises(NonfiniteIterate):
            solve_fixed_iters(prob, np.zeros(2), 3)


class TestSolveOracle:
    def test_unconstrained_normal_equations(self):
        rng = np.random.default_rng(6)
        sys, cert = random_certified_setup(rng)
        prob = random_problem(rng, sys, cert)
        wide = MheProblem(sys=prob.sys, t=prob.t, horizon=prob.horizon,
                          m_eff=prob.m_eff, weight=prob.weight,
                          reference=prob.reference, lift_matrix=prob.lift_matrix,
                          lift_offset=prob.lift_offset,
                          lower=np.full(prob.dim_v, -np.inf),
                          upper=np.full(prob.dim_v, np.inf),
                          x_prior=prob.x_prior, u_window=prob.u_window,
                          y_window=prob.y_window)
        s, c = wide.reduced_gradient_terms()
        expected = np.linalg.solve(s, -c)
        got = solve_oracle(wide, tol=1e-12)
        assert np.allclose(got.v, expected, atol=1e-10)

    def test_scalar_active_bound(self):
        # min (v - 3)^2 over [-1, 1] -> v* = 1
        prob = plain_problem(np.eye(1), np.array([3.0]),
                             lower=np.array([-1.0]), upper=np.array([1.0]))
        assert solve_oracle(prob, tol=1e-12).v[0] == 1.0

    def test_agrees_with_long_projected_gradient(self):
        rng = np.random.default_rng(7)
        m = rng.standard_normal((10, 10))
        weight = m @ m.T / 10 + 0.3 * np.eye(10)
        prob = plain_problem(weight, rng.standard_normal(10) * 2,
                             lower=-rng.random(10), upper=rng.random(10))
        z_star = solve_oracle(prob, tol=1e-12)
        s, c = prob.reduced_gradient_terms()
        alpha = 1.0 / np.linalg.eigvalsh(s)[-1]
        v_pg = run_pgd(s, c, prob.lower, prob.upper, np.zeros(10), alpha,
                       1_000_000)
        assert np.linalg.norm(v_pg - z_star.v) <= 1e-8

    def test_kkt_residual_below_tol(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            sys, cert = random_certified_setup(rng)
            prob = random_problem(rng, sys, cert)
            z_star = solve_oracle(prob, tol=1e-10)
            assert kkt_residual(prob, z_star) <= 1e-10

    def test_cost_lower_bounds_every_iterate(self):
        rng = np.random.default_rng(9)
        sys, cert = random_certified_setup(rng)
        prob = random_problem(rng, sys, cert)
        z_star = solve_oracle(prob, tol=1e-11)
        best = prob.cost(z_star.z)
        v0 = np.clip(rng.uniform(-2, 2, size=prob.dim_v), prob.lower, prob.upper)
        for K in (0, 1, 5, 20):
            rep = solve_fixed_iters(prob, prob.lift(v0), K)
            assert best <= prob.cost(rep.point.z) + 1e-10

    def test_pinned_interval(self):
        prob = plain_problem(np.eye(2), np.array([1.0, -4.0]),
                             lower=np.array([0.0, -1.0]),
                             upper=np.array([0.0, 1.0]))
        got = solve_oracle(prob, tol=1e-12)
        assert got.v[0] == 0.0
        assert got.v[1] == -1.0

    def test_cycle_cap(self):
        prob = plain_problem(np.eye(2), np.array([3.0, 3.0]),
                             lower=np.array([-1.0, -1.0]),
                             upper=np.array([1.0, 1.0]))
        with pytest.raises(MaxCyclesExceeded):
            solve_oracle(prob, max_cycles=0)


class TestKernelBackends:
    def test_backends_agree(self):
        from submhe import _pgd_fallback
        try:
            from submhe import _pgd
        except ImportError:
            pytest.skip("compiled kernel not built")
        rng = np.random.default_rng(10)
        m = rng.standard_normal((8, 8))
        s = m @ m.T / 8 + 0.2 * np.eye(8)
        g = rng.standard_normal(8)
        lo, hi = -rng.random(8), rng.random(8)
        v0 = rng.standard_normal(8)
        alpha = 1.0 / np.linalg.eigvalsh(s)[-1]
        a = _pgd.run_pgd(s, g, lo, hi, v0, alpha, 5000)
        b = _pgd_fallback.run_pgd(s, g, lo, hi, v0, alpha, 5000)
        assert np.allclose(a, b, atol=1e-12)

    def test_kernel_does_not_mutate_input(self):
        rng = np.random.default_rng(11)
        s = np.eye(3)
        g = rng.standard_normal(3)
        v0 = rng.standard_normal(3)
        v0_copy = v0.copy()
        run_pgd(s, g, np.full(3, -1.0), np.full(3, 1.0), v0, 0.5, 100)
        assert np.array_equal(v0, v0_copy)
