import math

import numpy as np
import pytest

from smoothzo.estimator import (
    estimator_mean, exact_one_point_mean_1d, gradient_bias_bound, value_bias_bound,
    one_point_estimate, smoothed_gradient_check, smoothed_value, two_point_estimate,
)
from smoothzo.geometry import RandomSource
from smoothzo.kernels import abs_moment, build_kernel
from smoothzo.oracles import NoiseModel, Oracle, ProtocolError, Quadratic, make_quadratic

K2, K4 = build_kernel(2), build_kernel(4)


class FixedDraw:
    """RandomSource stand-in returning a fixed ``(r, u)``."""

    def __init__(self, r, u):
        self.r, self.u = r, np.asarray(u, float)

    def draw_pair(self, d):
        return self.r, self.u


class Fn:
    """Minimal noiseless problem wrapper around a vectorised callable."""

    online = False

    def __init__(self, f, dim):
        self.f, self.dim = f, dim

    def value_at(self, n, x):
        return float(self.f(np.asarray(x)[None, :])[0])


def oracle_for(f, dim, q=1):
    o = Oracle(Fn(f, dim))
    o.configure(q)
    return o


def sq(X):
    return 0.5 * np.sum(X * X, axis=-1)


def within(mean, target, se, z=3.0):
    return np.all(np.abs(np.asarray(mean) - np.asarray(target)) <= z * np.asarray(se) + 1e-15)


class TestOnePoint:
    def test_zero_function(self):
        o = oracle_for(lambda X: np.zeros(len(X)), 3)
        est = one_point_estimate(o, 1, np.ones(3), 0.1, K2, RandomSource(0))
        assert np.array_equal(est.g, np.zeros(3))

    def test_single_query_and_geometry(self):
        o = oracle_for(sq, 3)
        x = np.array([0.2, -1.0, 0.5])
        est = one_point_estimate(o, 1, x, 0.3, K2, RandomSource(1))
        assert o.count == 1
        (y,) = est.query_points
        assert abs(np.linalg.norm(y - x) - 0.3 * abs(est.r)) <= 1e-12
        assert est.k_value == pytest.approx(3 * est.r)
        g = 3 / 0.3 * sq(y[None])[0] * est.k_value * est.u
        assert np.allclose(est.g, g, rtol=1e-14)

    def test_nonpositive_delta(self):
        with pytest.raises(ValueError):
            one_point_estimate(oracle_for(sq, 2), 1, np.zeros(2), 0.0, K2, RandomSource(0))

    def test_linear_unbiased(self):
        c = np.array([1.0, -2.0, 0.5])
        est = estimator_mean(lambda X: X @ c, np.array([0.3, 0.1, -0.4]), 0.2, K2, 1_000_000,
                             np.random.default_rng(0))
        assert within(est.mean, c, est.se)

    def test_quadratic_beta2(self):
        est = estimator_mean(sq, np.array([1.0, 0.0]), 0.5, K2, 1_000_000, np.random.default_rng(1))
        assert within(est.mean, [1.0, 0.0], est.se)

    def test_stream_order_r_first(self):
        # one estimate consumes r then d uniforms for u
        rng, ref = RandomSource(7), RandomSource(7)
        est = one_point_estimate(oracle_for(sq, 2), 1, np.zeros(2), 0.1, K2, rng)
        r, u = ref.draw_pair(2)
        assert est.r == r and np.array_equal(est.u, u)

    def test_second_moment_scaling(self):
        # E|g|^2 ~ delta^-2 for f bounded away from 0 near x
        def f(X):
            return 2.0 + np.sin(X).sum(axis=-1)

        x = np.array([0.1, 0.2])
        gen = np.random.default_rng(2)
        m1 = estimator_mean(f, x, 0.1, K2, 400_000, gen).second_moment
        m2 = estimator_mean(f, x, 0.05, K2, 400_000, gen).second_moment
        assert m2 / m1 == pytest.approx(4.0, rel=0.2)

    def test_second_moment_bound(self):
        # E|g|^2 <= 6 beta^3 d^2 / delta^2 (C^2 + sigma^2)
        C, d, delta = 3.0, 2, 0.1
        est = estimator_mean(lambda X: 2.0 + np.sin(X).sum(axis=-1), np.zeros(d), delta, K4,
                             200_000, np.random.default_rng(3))
        assert est.second_moment <= 6 * 4**3 * d**2 / delta**2 * C**2


class TestTwoPoint:
    def test_two_queries_and_protocol(self):
        o = oracle_for(sq, 2, q=2)
        x = np.array([0.5, 0.5])
        est = two_point_estimate(o, 1, x, 0.2, K2, RandomSource(0))
        assert o.count == 2
        yp, ym = est.query_points
        assert np.allclose(yp + ym, 2 * x)
        with pytest.raises(ProtocolError):
            two_point_estimate(o, 1, x, 0.2, K2, RandomSource(0))

    def test_hand_arithmetic(self):
        c, delta = 2.0, 0.1
        o = oracle_for(lambda X: c * X[:, 0], 1, q=2)
        est = two_point_estimate(o, 1, np.array([0.7]), delta, K2, FixedDraw(0.5, [1.0]))
        assert est.g[0] == pytest.approx(0.75 * c, rel=1e-12)

    def test_constant_function(self):
        o = oracle_for(lambda X: np.full(len(X), 5.0), 2, q=2)
        rng = RandomSource(1)
        for n in range(1, 20):
            assert np.allclose(two_point_estimate(o, n, np.zeros(2), 0.3, K2, rng).g, 0.0)

    def test_constant_noisy_mean_zero(self):
        oracle, _ = make_quadratic(2, 0.0, noise=NoiseModel("gaussian", 1.0), rng=RandomSource(0, 1))
        oracle.configure(2)
        rng = RandomSource(0)
        G = np.array([two_point_estimate(oracle, n, np.zeros(2), 0.5, K2, rng).g
                      for n in range(1, 40_001)])
        assert within(G.mean(axis=0), 0.0, G.std(axis=0) / math.sqrt(len(G)))

    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_unbiased_on_quadratics(self, d):
        g = np.random.default_rng(d)
        B = g.normal(size=(d, d))
        q = Quadratic(B @ B.T + np.eye(d), g.normal(size=d))
        x = g.normal(size=d)
        est = estimator_mean(q.value, x, 0.4, K2, 400_000, g, "two_point")
        assert within(est.mean, q.gradient(x), est.se)

    def test_translation_equivariance(self):
        a = np.array([0.3, -1.2, 2.0])
        o1 = oracle_for(lambda X: np.sum(np.cos(X), axis=-1), 3, q=2)
        o2 = oracle_for(lambda X: np.sum(np.cos(X - a), axis=-1), 3, q=2)
        r1, r2 = RandomSource(3), RandomSource(3)
        x = np.array([0.1, 0.2, 0.3])
        for n in range(1, 50):
            g1 = two_point_estimate(o1, n, x, 0.2, K4, r1).g
            g2 = two_point_estimate(o2, n, x + a, 0.2, K4, r2).g
            assert np.allclose(g1, g2, atol=1e-12)

    def test_scale_equivariance(self):
        o1 = oracle_for(lambda X: np.sum(np.exp(X), axis=-1), 2, q=2)
        o2 = oracle_for(lambda X: 3.5 * np.sum(np.exp(X), axis=-1), 2, q=2)
        r1, r2 = RandomSource(4), RandomSource(4)
        for n in range(1, 50):
            g1 = two_point_estimate(o1, n, np.zeros(2), 0.2, K2, r1).g
            g2 = two_point_estimate(o2, n, np.zeros(2), 0.2, K2, r2).g
            assert np.allclose(3.5 * g1, g2, rtol=1e-13, atol=1e-13)


class TestSmoothedValue:
    def test_linear(self):
        c = np.array([2.0, -1.0])
        sv = smoothed_value(lambda X: X @ c + 1.0, np.array([0.5, 0.5]), 0.3, K2, 500_000,
                            np.random.default_rng(0))
        assert abs(sv.value - 1.5) <= 3 * sv.value_se

    def test_quadratic_beta2_closed_form(self):
        x = np.array([0.2, 0.4])
        sv = smoothed_value(sq, x, 0.5, K2, 1_000_000, np.random.default_rng(1))
        assert abs(sv.value - (sq(x) + 0.0375)) <= 3 * sv.value_se

    def test_quadratic_beta4_exact(self):
        x = np.array([0.2, 0.4])
        sv = smoothed_value(sq, x, 0.5, K4, 1_000_000, np.random.default_rng(2))
        assert abs(sv.value - sq(x)) <= 3 * sv.value_se

    def test_samples_required(self):
        with pytest.raises(ValueError):
            smoothed_value(sq, np.zeros(2), 0.1, K2, 0, np.random.default_rng(0))


class TestGradientCheck:
    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_sphere_matches_fd(self, d):
        def f(X):
            return np.sum(np.log1p(np.exp(X)), axis=-1) + 0.1 * np.sum(X, axis=-1) ** 4

        chk = smoothed_gradient_check(f, np.linspace(-0.5, 0.5, d), 0.3, K2, 300_000,
                                      np.random.default_rng(d))
        gap, se = chk.gap("sphere", "fd")
        assert np.all(gap <= 3 * se)

    @pytest.mark.parametrize("beta", [2, 4, 6])
    def test_quadratic_matches_analytic(self, beta):
        x = np.array([0.3, -0.6])
        chk = smoothed_gradient_check(sq, x, 0.4, build_kernel(beta), 300_000,
                                      np.random.default_rng(beta), grad=lambda v: v)
        gap, se = chk.gap("sphere", "analytic")
        assert np.all(gap <= 3 * se)
        d = chk.to_dict()
        assert d["analytic"] == x.tolist()

    def test_linear_no_bias_any_beta(self):
        c = np.array([1.0, 2.0])
        for beta in (1, 3, 5):
            chk = smoothed_gradient_check(lambda X: X @ c, np.zeros(2), 0.2, build_kernel(beta),
                                          200_000, np.random.default_rng(beta), grad=lambda v: c)
            gap, se = chk.gap("sphere", "analytic")
            assert np.all(gap <= 3 * se)

    def test_quartic_bias_below_bound(self):
        def quartic(X):
            return np.sum(X**4, axis=-1)

        bound = gradient_bias_bound(K4, 24.0, 0.1)
        assert bound == pytest.approx(4 * 0.1**3 * abs_moment(K4, 4))
        bias = abs(exact_one_point_mean_1d(quartic, 0.7, 0.1, K4) - 4 * 0.7**3)
        assert bias <= bound
        chk = smoothed_gradient_check(quartic, np.array([0.7]), 0.1, K4, 200_000,
                                      np.random.default_rng(0), lambda v: 4 * v**3, 24.0)
        gap, se = chk.gap("sphere", "analytic")
        assert np.all(gap <= bound + 3 * se)


class TestExactMean1d:
    def test_beta2_bias_on_cubic(self):
        # E[g] for x^3 under k = 3r: 3x^2 + (3/5) delta^2
        mean = exact_one_point_mean_1d(lambda X: np.sum(X**3, axis=-1), 0.4, 0.2, K2)
        assert mean == pytest.approx(3 * 0.16 + 0.6 * 0.04, abs=1e-13)

    def test_matches_monte_carlo(self):
        def f(X):
            return np.sum(np.exp(X), axis=-1)

        exact = exact_one_point_mean_1d(f, 0.2, 0.5, K4)
        mc = estimator_mean(f, np.array([0.2]), 0.5, K4, 1_000_000, np.random.default_rng(5))
        assert abs(exact - mc.mean[0]) <= 3 * mc.se[0]

    def test_bias_order(self):
        # for exp, bias ~ delta^beta-1 with beta = 2
        f = lambda X: np.sum(np.exp(X), axis=-1)  # noqa: E731
        b1 = exact_one_point_mean_1d(f, 0.0, 0.1, K2) - 1.0
        b2 = exact_one_point_mean_1d(f, 0.0, 0.05, K2) - 1.0
        assert b1 / b2 == pytest.approx(4.0, rel=0.01)

    def test_value_bound(self):
        # |f_delta - f| <= M^beta / beta! delta^beta E|k r^(beta+1)| for the beta=2 quadratic
        assert value_bias_bound(K2, 1.0, 0.5) >= 0.3 * 0.25
