import math

import numpy as np
import pytest

from dcflow.toy import ToyProblem


class TestObjective:
    def test_zero_is_minimum(self):
        p = ToyProblem(0.5)
        assert p.objective(np.zeros(p.n)) == 0.0

    def test_constant_one(self):
        p = ToyProblem(0.5)
        assert p.objective(p.e) == pytest.approx(0.25, abs=1e-15)

    def test_scaled_constant_closed_form(self):
        p = ToyProblem(0.3, n=50)
        for k in range(6):
            u = 0.3**k * p.e
            expected = (1 - 0.3) / 2 * 0.3 ** (2 * k)
            assert p.objective(u) == pytest.approx(expected, rel=1e-13)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(0)
        p = ToyProblem(0.9)
        for _ in range(50):
            assert p.objective(rng.standard_normal(p.n)) >= 0.0

    def test_unit_norm_of_e(self):
        for n in (1, 7, 64, 100):
            p = ToyProblem(0.5, n=n)
            assert p.inner_product(p.e, p.e) == pytest.approx(1.0, abs=1e-15)


class TestSubgradient:
    def test_zero(self):
        p = ToyProblem(0.5)
        np.testing.assert_array_equal(p.eps_subgradient_h(np.zeros(p.n), 0.1), np.zeros(p.n))

    def test_at_e(self):
        p = ToyProblem(0.5)
        np.testing.assert_allclose(p.eps_subgradient_h(p.e, 0.0), 0.5 * p.e, atol=1e-15)

    def test_geometric_sequence(self):
        p = ToyProblem(0.5)
        for k in range(5):
            v = p.eps_subgradient_h(0.5**k * p.e, 1e-3)
            np.testing.assert_allclose(v, 0.5 ** (k + 1) * p.e, rtol=1e-14)


class TestArgmin:
    def test_zero(self):
        p = ToyProblem(0.5)
        u, cert = p.eps_argmin_linearized(np.zeros(p.n), 0.1)
        np.testing.assert_array_equal(u, np.zeros(p.n))
        assert cert == 0.0

    def test_exact_returns_v(self):
        p = ToyProblem(0.5)
        rng = np.random.default_rng(1)
        v = rng.standard_normal(p.n)
        u, cert = p.eps_argmin_linearized(v, 1e-6)
        np.testing.assert_array_equal(u, v)
        assert cert == 0.0

    def test_noise_bound_and_certificate(self):
        p = ToyProblem(0.5, noise=1e-6)
        u, cert = p.eps_argmin_linearized(p.e, 1.0)
        assert cert <= 1e-6
        # strong convexity: distance to the true minimizer is sqrt(2 gap)
        assert p.norm(u - p.e) <= math.sqrt(2e-6)
        # certificate is exactly the objective gap of the quadratic
        gap = (0.5 * p.inner_product(u, u) - p.inner_product(p.e, u)) - (-0.5)
        assert cert == pytest.approx(gap, rel=1e-12)

    def test_noise_respects_requested_eps(self):
        p = ToyProblem(0.5, noise=1.0)
        u, cert = p.eps_argmin_linearized(p.e, 1e-8)
        assert cert <= 1e-8


class TestPlInequality:
    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9])
    def test_constant_over_random_points(self, alpha):
        # |f(u)|^(1/2) <= ||grad f(u)|| / sqrt(2 (1 - alpha)), no violations
        p = ToyProblem(alpha)
        c = 1.0 / math.sqrt(2.0 * (1.0 - alpha))
        rng = np.random.default_rng(123)
        worst = -math.inf
        for _ in range(1000):
            u = 4.0 * rng.standard_normal(p.n)
            lhs = math.sqrt(p.objective(u))
            rhs = c * p.norm(p.gradient(u))
            worst = max(worst, lhs - rhs)
        assert worst <= 1e-12
