import numpy as np
import pytest

import mealopt as m
from mealopt.envelope import (
    EnvelopeContext,
    alpha_cap,
    alpha_from_beta,
    beta_for_target_alpha,
    lyapunov,
    potential_P,
    solve_subproblem,
    stationarity_stream,
)
from mealopt.errors import (
    GammaTooLarge,
    InvalidSubproblemPath,
    MissingMetadata,
    NonPositiveAlpha,
    NotComposite,
    WindowTooShort,
)
from tests.conftest import make_convex_qp


def zero_problem(n=2):
    return m.Problem(m.LinearConstraint(np.eye(n), np.zeros(n)), m.Zero())


class TestAugmentedLagrangian:
    def test_zero_everything(self):
        ctx = EnvelopeContext(zero_problem(), m.PenaltyPlan.fixed(1.0, 0.5, 1.0))
        assert m.augmented_lagrangian(ctx, [0.0, 0.0], [3.0, -1.0], 7.0) == 0.0

    def test_exp1_hand_value(self, exp1_problem):
        ctx = EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(50.0, 0.25, 1.0))
        # f(1,0) = 1, residual 1, lam = 0: 1 + 25
        assert m.augmented_lagrangian(ctx, [1.0, 0.0], [0.0], 50.0) == pytest.approx(26.0)

    def test_feasible_point_ignores_penalty(self, exp1_problem):
        ctx = EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(50.0, 0.25, 1.0))
        for lam, beta in [(0.0, 1.0), (5.0, 400.0), (-3.0, 17.0)]:
            got = m.augmented_lagrangian(ctx, [0.3, 0.3], [lam], beta)
            assert got == pytest.approx(exp1_problem.objective_value([0.3, 0.3]),
                                        abs=1e-14)


class TestPotential:
    def test_reduces_to_lagrangian_when_z_is_x(self, exp1_problem):
        ctx = EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(50.0, 0.25, 1.0))
        x = np.array([0.4, -0.2])
        assert potential_P(ctx, x, x, [1.0], 50.0) == pytest.approx(
            m.augmented_lagrangian(ctx, x, [1.0], 50.0))

    def test_hand_value(self):
        ctx = EnvelopeContext(zero_problem(), m.PenaltyPlan.fixed(1.0, 0.5, 1.0))
        got = potential_P(ctx, [0.0, 0.0], [1.0, 0.0], [0.0, 0.0], 1.0)
        assert got == pytest.approx(1.0)

    def test_depends_only_on_residual_shift(self):
        # same residual Ax - b and same (x, z): identical potential
        p1 = m.Problem(m.LinearConstraint([[1.0, 0.0]], [0.0]), m.Zero())
        p2 = m.Problem(m.LinearConstraint([[1.0, 0.0]], [1.0]), m.Zero())
        plan = m.PenaltyPlan.fixed(3.0, 0.5, 1.0)
        c1 = EnvelopeContext(p1, plan)
        c2 = EnvelopeContext(p2, plan)
        x1, x2 = np.array([0.7, 0.1]), np.array([1.7, 0.1])
        z = np.array([0.0, 0.0])
        r1 = potential_P(c1, x1, x1 - z, [2.0], 3.0)
        r2 = potential_P(c2, x2, x2 - z, [2.0], 3.0)
        assert r1 == pytest.approx(r2, abs=1e-12)


class TestSolveSubproblem:
    def test_zero_fixed_point(self):
        ctx = EnvelopeContext(zero_problem(), m.PenaltyPlan.fixed(1.0, 0.5, 1.0))
        res = solve_subproblem(ctx, np.zeros(2), np.zeros(2), 1.0)
        np.testing.assert_allclose(res.x, np.zeros(2), atol=1e-12)

    def test_one_dimensional_hand_solution(self):
        prob = m.Problem(m.LinearConstraint([[1.0]], [0.0]), m.QuadraticForm(Q=[[1.0]]))
        ctx = EnvelopeContext(prob, m.PenaltyPlan.fixed(1.0, 0.5, 1.0), m.DirectQP())
        res = solve_subproblem(ctx, [3.0], [0.0], 1.0)
        # stationarity x + beta x + (x - z)/gamma = 0 with z=3: x = 6/4
        assert res.x[0] == pytest.approx(1.5, abs=1e-12)
        assert res.residual_norm == 0.0

    def test_inner_matches_direct_on_qp(self):
        prob = make_convex_qp(11)
        plan = m.PenaltyPlan.fixed(20.0, 0.4, 1.0)
        direct = EnvelopeContext(prob, plan, m.DirectQP())
        inner = EnvelopeContext(prob, plan, m.InnerProxGradient(tol=1e-12,
                                                                max_inner=200000))
        z = np.linspace(-1, 1, prob.n)
        lam = np.array([0.3, -0.2])
        xd = solve_subproblem(direct, z, lam, 20.0).x
        xi = solve_subproblem(inner, z, lam, 20.0).x
        np.testing.assert_allclose(xi, xd, atol=1e-9)

    def test_fast_path_formula(self):
        # one linearized solve then projection, matched against the
        # transcription of the update rule
        prob = m.build_exp2(seed=3, m=2, n=5)
        gamma = 0.1
        ctx = EnvelopeContext(prob, m.PenaltyPlan.fixed(8.0, gamma, 1.0),
                              m.Paper72FastPath())
        Q, r, _ = prob.smooth.quadratic_terms()
        A, b = prob.constraint.A, prob.constraint.b
        z = np.linspace(0, 1, 5)
        lam = np.array([0.5, -0.1])
        x0 = np.full(5, 0.4)
        res = solve_subproblem(ctx, z, lam, 8.0, linearize_at=x0)
        M = 8.0 * A.T @ A + np.eye(5) / gamma
        x_tilde = np.linalg.solve(M, z / gamma + 8.0 * A.T @ b - r - Q @ x0 - A.T @ lam)
        np.testing.assert_allclose(res.x, np.clip(x_tilde, 0.0, 1.0), atol=1e-10)
        assert res.residual is None

    def test_residual_certifies_inexactness(self, exp1_problem):
        ctx = EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(50.0, 0.25, 1.0),
                              m.InnerProxGradient(tol=1e-3, max_inner=100000))
        res = solve_subproblem(ctx, [1.0, -1.0], [0.0], 50.0)
        assert res.residual_norm <= 1e-3

    def test_envelope_gradient_matches_finite_differences(self):
        prob = make_convex_qp(5)
        gamma = 0.4
        plan = m.PenaltyPlan.fixed(10.0, gamma, 1.0)
        ctx = EnvelopeContext(prob, plan, m.InnerProxGradient(tol=1e-10,
                                                              max_inner=200000))
        lam = np.array([0.2, -0.4])

        def phi(z):
            res = solve_subproblem(ctx, z, lam, 10.0)
            return res.objective(ctx, z, lam, 10.0)

        rng = np.random.default_rng(8)
        for _ in range(5):
            z = rng.uniform(-1, 1, prob.n)
            x_star = solve_subproblem(ctx, z, lam, 10.0).x
            grad = (z - x_star) / gamma
            err = m.finite_diff_check(phi, lambda _: grad, z, h=1e-5)
            assert err <= 1e-4

    def test_strong_convexity_certificate(self, exp1_problem):
        gamma = 0.25
        ctx = EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(50.0, gamma, 1.0),
                              m.InnerProxGradient(tol=1e-12, max_inner=300000))
        z = np.array([0.7, -0.4])
        lam = np.array([1.0])
        res = solve_subproblem(ctx, z, lam, 50.0)
        base = res.objective(ctx, z, lam, 50.0)
        mu = 1.0 / gamma - exp1_problem.rho_total
        rng = np.random.default_rng(9)
        for _ in range(20):
            d = rng.normal(size=2)
            d /= np.linalg.norm(d)
            delta = 1e-3
            cand = res.x + delta * d
            if not np.isfinite(exp1_problem.objective_value(cand)):
                continue
            from mealopt.envelope import _subproblem_value
            val = _subproblem_value(ctx, cand, z, lam, 50.0)
            assert val - base >= 0.5 * mu * delta ** 2 - 1e-9

    def test_direct_requires_quadratic(self, exp1_problem):
        with pytest.raises(InvalidSubproblemPath):
            EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(1.0, 0.25, 1.0),
                            m.DirectQP())


class TestPenaltyCalculus:
    def test_alpha_from_beta_hand_value(self):
        assert alpha_from_beta(50.0, 50.0, 0.5, 1.0, 0.5) == pytest.approx(0.0401)

    def test_alpha_eta_limit(self):
        # as eta -> 2 the gamma term vanishes
        got = alpha_from_beta(10.0, 12.0, 0.7, 2.0 - 1e-12, 0.5)
        assert got == pytest.approx((10.0 + 12.0) / (2 * 0.5 * 100.0), rel=1e-9)

    def test_alpha_roughly_halves_when_beta_doubles(self):
        a1 = alpha_from_beta(100.0, 100.0, 0.5, 1.0, 0.5)
        a2 = alpha_from_beta(200.0, 200.0, 0.5, 1.0, 0.5)
        assert a2 < a1

    def test_beta_hand_value(self):
        # frozen from direct evaluation: (1 + sqrt(1.01)) / 0.04, +1e-6 margin
        got = beta_for_target_alpha(0.04, 0.5, 1.0, 0.5)
        assert got == pytest.approx(50.12473917749127, rel=1e-12)

    @pytest.mark.parametrize("target", [1e-3, 1e-2, 0.1, 0.5, 1.0])
    def test_round_trip_strictly_below_target(self, target):
        beta = beta_for_target_alpha(target, 0.5, 1.0, 0.5)
        assert alpha_from_beta(beta, beta, 0.5, 1.0, 0.5) < target

    def test_monotone_decreasing_in_c(self):
        b1 = beta_for_target_alpha(0.04, 0.5, 1.0, 0.5)
        b2 = beta_for_target_alpha(0.04, 0.5, 1.0, 1.0)
        assert b2 < b1

    def test_horizon_mode_achieves_target_exactly(self):
        K, alpha_star, gamma, eta, c = 25, 0.05, 0.5, 1.0, 0.5
        beta = beta_for_target_alpha(alpha_star, gamma, eta, c, horizon_K=K)
        assert alpha_from_beta(beta, beta, gamma, eta, c) == pytest.approx(
            alpha_star / K, rel=1e-12)

    def test_nonpositive_alpha(self):
        with pytest.raises(NonPositiveAlpha):
            beta_for_target_alpha(0.0, 0.5, 1.0, 0.5)


class TestAlphaCap:
    def test_meal_a_hand_value(self):
        prob = m.Problem(m.LinearConstraint([[1.0, -1.0]], [0.0]), m.Zero())
        plan = m.PenaltyPlan.fixed(1.0, 0.5, 1.0)
        assert alpha_cap(prob, plan, "meal-a") == pytest.approx(0.25)

    def test_cap_decreases_toward_eta_two(self):
        prob = m.Problem(m.LinearConstraint([[1.0, -1.0]], [0.0]), m.Zero())
        caps = [alpha_cap(prob, m.PenaltyPlan.fixed(1.0, 0.5, eta), "meal-a")
                for eta in (1.5, 1.8, 1.95, 1.99)]
        assert all(a > b for a, b in zip(caps, caps[1:]))

    def test_limeal_gamma_bound_enforced(self, exp1_problem):
        # rho_g + L_h = 2: the admissible bound is below 1/2 for eta=1
        with pytest.raises(GammaTooLarge):
            alpha_cap(exp1_problem, m.PenaltyPlan.fixed(1.0, 0.5, 1.0), "limeal-a")
        cap = alpha_cap(exp1_problem, m.PenaltyPlan.fixed(1.0, 0.18, 1.0), "limeal-a")
        assert cap > 0

    def test_missing_metadata_named(self):
        box = m.BoxIndicator([0.0], [1.0])   # implicit class unknown
        prob = m.Problem(m.LinearConstraint([[1.0]], [0.5]), box,
                         m.QuadraticSmooth([[1.0]]))
        with pytest.raises(MissingMetadata) as exc:
            alpha_cap(prob, m.PenaltyPlan.fixed(1.0, 0.2, 1.0), "limeal-a")
        assert "L_g" in str(exc.value)

    def test_limeal_on_pure_problem_rejected(self):
        prob = m.Problem(m.LinearConstraint([[1.0]], [0.0]), m.QuadraticForm(Q=[[1.0]]))
        with pytest.raises(NotComposite):
            alpha_cap(prob, m.PenaltyPlan.fixed(1.0, 0.2, 1.0), "limeal-b")

    @pytest.mark.parametrize("variant", ["meal-b", "imeal-a", "imeal-b", "limeal-b"])
    def test_other_variants_positive(self, variant, exp1_problem):
        plan = m.PenaltyPlan.fixed(1.0, 0.15, 1.0)
        assert alpha_cap(exp1_problem, plan, variant) > 0


class TestStationarityStream:
    def test_prefix_minimum(self):
        np.testing.assert_allclose(stationarity_stream([3.0, 1.0, 2.0]), [3.0, 1.0, 1.0])

    def test_zero_stays_zero(self):
        np.testing.assert_allclose(stationarity_stream([0.0, 5.0, 1.0]), [0.0, 0.0, 0.0])

    def test_accepts_step_reports(self):
        from mealopt.solvers import StepReport

        reports = [StepReport(np.zeros(1), np.zeros(1), v, v) for v in (3.0, 1.0, 2.0)]
        np.testing.assert_allclose(stationarity_stream(reports), [3.0, 1.0, 1.0])


class TestModuleLevelProx:
    def test_delegates_to_kind(self):
        got = m.prox(m.L1(weight=1.0), 1.0, [2.0, -0.5])
        np.testing.assert_allclose(got, [1.0, 0.0])


class TestLyapunov:
    def setup_method(self):
        self.prob = make_convex_qp(13)
        self.plan = m.PenaltyPlan.fixed(30.0, 0.4, 1.0)
        self.ctx = EnvelopeContext(self.prob, self.plan)
        rng = np.random.default_rng(14)
        self.x = rng.normal(size=self.prob.n)
        self.z = rng.normal(size=self.prob.n)
        self.lam = rng.normal(size=self.prob.m)

    def test_reduces_to_potential_when_stationary(self):
        got = lyapunov(self.ctx, "meal-s1", self.x, self.z, self.lam,
                       z_prev=self.z, beta=30.0, alpha=0.1)
        assert got == pytest.approx(potential_P(self.ctx, self.x, self.z,
                                                self.lam, 30.0))

    def test_s1_s2_differ_by_alpha_term(self):
        z_prev = self.z + 0.3
        alpha = 0.07
        e1 = lyapunov(self.ctx, "meal-s1", self.x, self.z, self.lam,
                      z_prev=z_prev, beta=30.0, alpha=alpha)
        e2 = lyapunov(self.ctx, "meal-s2", self.x, self.z, self.lam,
                      z_prev=z_prev, beta=30.0, alpha=alpha)
        gap = alpha * float(np.sum((self.z - z_prev) ** 2))
        assert e2 - e1 == pytest.approx(gap, rel=1e-12)

    def test_coefficients_ladder(self):
        z_prev = self.z + 0.5
        alpha = 0.05
        vals = {}
        for variant in ("meal-s1", "meal-s2", "imeal-s1", "imeal-s2"):
            vals[variant] = lyapunov(self.ctx, variant, self.x, self.z, self.lam,
                                     z_prev=z_prev, beta=30.0, alpha=alpha)
        assert vals["meal-s2"] == pytest.approx(vals["imeal-s1"], rel=1e-12)
        base = potential_P(self.ctx, self.x, self.z, self.lam, 30.0)
        gap = alpha * float(np.sum((self.z - z_prev) ** 2))
        for variant, coef in (("meal-s1", 2), ("meal-s2", 3),
                              ("imeal-s1", 3), ("imeal-s2", 4)):
            assert vals[variant] == pytest.approx(base + coef * gap, rel=1e-12)

    def test_limeal_variant_includes_x_term(self, exp1_problem):
        ctx = EnvelopeContext(exp1_problem, m.PenaltyPlan.fixed(50.0, 0.25, 1.0))
        x, z, lam = np.array([0.5, 0.5]), np.array([0.2, 0.1]), np.array([1.0])
        x_prev, z_prev = x + 0.2, z - 0.1
        alpha = 0.03
        got = lyapunov(ctx, "limeal-s1", x, z, lam, z_prev=z_prev, x_prev=x_prev,
                       beta=50.0, alpha=alpha)
        L_h = exp1_problem.L_h
        expected = potential_P(ctx, x, z, lam, 50.0) + 3 * alpha * (
            float(np.sum((z - z_prev) ** 2))
            + 0.25 ** 2 * L_h ** 2 * float(np.sum((x - x_prev) ** 2)))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_window_too_short(self):
        with pytest.raises(WindowTooShort):
            lyapunov(self.ctx, "meal-s1", self.x, self.z, self.lam, z_prev=None)
        with pytest.raises(WindowTooShort):
            lyapunov(self.ctx, "limeal-s1", self.x, self.z, self.lam,
                     z_prev=self.z, x_prev=None)
