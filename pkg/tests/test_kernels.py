import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from smoothzo.kernels import (
    MAX_DEGREE, KernelCertificationError, build_kernel, discrepancy_note, eval_kernel,
    kernel_moment, kernel_norm_bounds, legendre_basis, poly_mul, uniform_moment,
)

F = Fraction


def sympy_kernel(beta):
    """Independent construction: sum over m <= beta of p_m'(0) p_m(r) with sympy."""
    r = sympy.Symbol("r")
    k = 0
    for m in range(beta + 1):
        L = sympy.legendre(m, r)
        k += (2 * m + 1) * sympy.diff(L, r).subs(r, 0) * L
    poly = sympy.Poly(sympy.expand(k), r)
    coeffs = [F(int(c.p), int(c.q)) for c in reversed(poly.all_coeffs())]
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return tuple(coeffs)


class TestLegendreBasis:
    def test_base_cases(self):
        b = legendre_basis(1)
        assert b[0] == (F(1),)
        assert b[1] == (F(0), F(1))

    def test_degree_three(self):
        assert legendre_basis(3)[3] == (F(0), F(-3, 2), F(0), F(5, 2))

    def test_matches_sympy(self):
        b = legendre_basis(12)
        r = sympy.Symbol("r")
        for m in range(13):
            ref = sympy.Poly(sympy.legendre(m, r), r).all_coeffs()[::-1]
            assert b[m] == tuple(F(int(c.p), int(c.q)) for c in ref)

    def test_orthogonality(self):
        b = legendre_basis(8)
        for i in range(9):
            for j in range(9):
                val = uniform_moment(poly_mul(b[i], b[j]))
                assert val == (F(1, 2 * i + 1) if i == j else 0)

    def test_orthogonality_one_three(self):
        b = legendre_basis(3)
        assert uniform_moment(poly_mul(b[1], b[3])) == 0

    def test_derivative_at_zero(self):
        b = legendre_basis(5)
        assert [b.derivative_at_zero(m) for m in range(6)] == [0, 1, 0, F(-3, 2), 0, F(15, 8)]

    @pytest.mark.parametrize("deg", [-1, MAX_DEGREE + 1])
    def test_degree_cap(self, deg):
        with pytest.raises(ValueError):
            legendre_basis(deg)


class TestBuildKernel:
    def test_beta_two(self):
        assert build_kernel(2).exact_coeffs == (F(0), F(3))
        assert build_kernel(1).exact_coeffs == (F(0), F(3))

    def test_beta_four(self):
        # (15 r / 4)(5 - 7 r^2)
        assert build_kernel(4).exact_coeffs == (F(0), F(75, 4), F(0), F(-105, 4))

    def test_beta_six(self):
        # (105 r / 64)(99 r^4 - 126 r^2 + 35)
        expected = (F(0), F(105 * 35, 64), F(0), F(-105 * 126, 64), F(0), F(105 * 99, 64))
        assert build_kernel(6).exact_coeffs == expected

    @pytest.mark.parametrize("beta", range(1, 21))
    def test_matches_independent_construction(self, beta):
        assert build_kernel(beta).exact_coeffs == sympy_kernel(beta)

    @pytest.mark.parametrize("s", range(1, 12))
    def test_even_order_repeats_odd(self, s):
        assert build_kernel(2 * s).exact_coeffs == build_kernel(2 * s - 1).exact_coeffs

    @pytest.mark.parametrize("beta", [0, 33])
    def test_range(self, beta):
        with pytest.raises(ValueError):
            build_kernel(beta)

    def test_floats_match_exact(self):
        k = build_kernel(9)
        assert np.allclose(k.coeffs, [float(c) for c in k.exact_coeffs], rtol=0, atol=0)

    def test_largest_order_certifies(self):
        k = build_kernel(MAX_DEGREE)
        assert kernel_moment(k, 1) == 1

    def test_certification_error_type(self):
        assert issubclass(KernelCertificationError, ArithmeticError)

    def test_discrepancy_notes(self):
        assert "r^3" in discrepancy_note(4)
        assert "13/7" in discrepancy_note(6)
        assert discrepancy_note(2) is None


class TestMoments:
    def test_examples(self):
        assert kernel_moment(build_kernel(2), 1) == 1
        assert kernel_moment(build_kernel(4), 0) == 0
        assert kernel_moment(build_kernel(6), 5) == 0

    @pytest.mark.parametrize("beta", range(1, 17))
    def test_moment_conditions(self, beta):
        k = build_kernel(beta)
        assert kernel_moment(k, 1) == 1
        for s in range(0, beta + 1):
            if s != 1 and (s % 2 == 0 or s >= 3):
                assert kernel_moment(k, s) == 0

    def test_first_nonvanishing_moment(self):
        # order beta kernels (beta even) stop cancelling at s = beta + 1
        assert kernel_moment(build_kernel(2), 3) == F(3, 5)
        assert kernel_moment(build_kernel(4), 5) != 0

    def test_printed_factor_fails_moment(self):
        # 195/64 instead of 105/64 scales E[r k] to 13/7
        assert F(195, 105) == F(13, 7)

    def test_negative_order(self):
        with pytest.raises(ValueError):
            kernel_moment(build_kernel(2), -1)


class TestNormBounds:
    def test_beta_two_values(self):
        rep = kernel_norm_bounds(build_kernel(2))
        assert rep.second_moment == pytest.approx(3.0, abs=1e-12)
        assert rep.weighted_second_moment == pytest.approx(9 / 5, abs=1e-12)
        assert rep.tail_moment == pytest.approx(3 / 5, abs=1e-12)
        assert rep.passed

    @pytest.mark.parametrize("beta", range(1, 17))
    def test_bounds_hold(self, beta):
        assert kernel_norm_bounds(build_kernel(beta)).passed

    @pytest.mark.parametrize("beta", [3, 6, 10])
    def test_quadrature_matches_exact_second_moments(self, beta):
        k = build_kernel(beta)
        k2 = poly_mul(k.exact_coeffs, k.exact_coeffs)
        rep = kernel_norm_bounds(k)
        assert rep.second_moment == pytest.approx(float(uniform_moment(k2)), rel=1e-12)
        assert rep.weighted_second_moment == pytest.approx(float(uniform_moment(k2, 2)), rel=1e-12)

    def test_report_dict(self):
        d = kernel_norm_bounds(build_kernel(4)).as_dict()
        assert set(d) == {"E|k|^2", "E|k|^2 r^2", "E|k r^(beta+1)|"}
        assert all(v["pass"] for v in d.values())


class TestEval:
    def test_examples(self):
        assert eval_kernel(build_kernel(2), 0.5) == 1.5
        assert eval_kernel(build_kernel(4), 0.0) == 0.0
        assert eval_kernel(build_kernel(4), 1.0) == pytest.approx(-7.5, abs=1e-14)

    def test_domain(self):
        with pytest.raises(ValueError):
            eval_kernel(build_kernel(2), 1.5)
        with pytest.raises(ValueError):
            eval_kernel(build_kernel(2), np.array([0.0, -1.01]))

    def test_array(self):
        r = np.linspace(-1, 1, 7)
        assert np.allclose(eval_kernel(build_kernel(2), r), 3 * r)

    @settings(max_examples=200, deadline=None)
    @given(beta=st.integers(1, 16), r=st.floats(-1.0, 1.0))
    def test_odd(self, beta, r):
        k = build_kernel(beta)
        assert eval_kernel(k, -r) == pytest.approx(-eval_kernel(k, r), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(beta=st.integers(1, 12), r=st.floats(-1.0, 1.0))
    def test_horner_matches_exact(self, beta, r):
        k = build_kernel(beta)
        fr = F(r)
        exact = sum(c * fr**j for j, c in enumerate(k.exact_coeffs))
        assert eval_kernel(k, r) == pytest.approx(float(exact), abs=1e-9 * max(1, beta**3))

    def test_norm_bound_scales(self):
        # E|k|^2 grows no faster than beta^3
        vals = [kernel_norm_bounds(build_kernel(b)).second_moment for b in (2, 4, 8, 16)]
        assert all(v <= 3 * b**3 for v, b in zip(vals, (2, 4, 8, 16)))
        assert math.isclose(vals[0], 3.0)
