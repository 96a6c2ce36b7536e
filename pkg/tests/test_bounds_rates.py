import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smoothzo.bounds import BoundError, bound_overlay, expected_exponent
from smoothzo.oracles import ProblemMeta
from smoothzo.rates import FitError, fit_rate, loglog_slope
from smoothzo.schedules import REGIMES


def meta(**kw):
    base = dict(dim=2, beta=2, M_beta=1.0, M_2=1.0, mu=0.5, sigma=0.1, M_1=2.0, M_3=1.0,
                optimum_value=0.0, optimum_point=np.array([0.5, -0.5]), C_delta_hint=1.0)
    base.update(kw)
    return ProblemMeta(**base)


class TestExpectedExponent:
    def test_table(self):
        assert expected_exponent("one_point_strongly_convex", 2) == pytest.approx(1 / 3)
        assert expected_exponent("one_point_strongly_convex", 4) == pytest.approx(3 / 5)
        assert expected_exponent("beta2_refined_one_point_strongly_convex", 2) == 0.5
        assert expected_exponent("one_point_convex", 4) == pytest.approx(3 / 8)
        assert expected_exponent("beta2_refined_one_point_convex", 2) == pytest.approx(1 / 3)
        assert expected_exponent("asymptotic_strongly_convex", 3) == pytest.approx(3 / 4)
        assert expected_exponent("two_point_mbeta_zero", 2) == 0.5
        assert expected_exponent("constant", 2) is None


class TestOverlay:
    def test_one_point_convex_example(self):
        m = meta(dim=1, beta=2, M_beta=1.0, sigma=0.0)
        val = bound_overlay("one_point_convex", m, 10_000, R=1.0, C=1.0)
        assert val == pytest.approx(25 * (2 / 1e4) ** 0.25 * 2)
        assert val == pytest.approx(5.95, abs=0.01)

    def test_convex_ratio(self):
        m = meta()
        for regime in ("beta2_refined_one_point_convex",):
            r = bound_overlay(regime, m, 4000, R=2.0) / bound_overlay(regime, m, 1000, R=2.0)
            assert r == pytest.approx(4 ** (-1 / 3), rel=1e-12)

    def test_two_point_convex_reduces(self):
        # sigma = 0 and x0 = x*: only the M_beta / M_2 terms remain
        m = meta(sigma=0.0, M_beta=2.0, M_2=1.0)
        N = 1000
        val = bound_overlay("two_point_convex", m, N, x0=m.optimum_point)
        inner = 2.0 ** (4 / 3) + 2 / N**0.5 * 2.0 ** (-2 / 3)
        assert val == pytest.approx((4 / N) ** 0.25 * inner**2, rel=1e-12)

    def test_strongly_convex_one_point(self):
        m = meta(beta=4, M_beta=1.5)
        val = bound_overlay("one_point_strongly_convex", m, 10_000)
        expect = 15 * 16 * 1.5 ** (8 / 5) * (4 / (0.5 * 1e4)) ** (3 / 5) * (1.0 + 0.01 + 1)
        assert val == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("regime", [r for r in REGIMES if r != "constant"])
    @pytest.mark.parametrize("online", [False, True])
    def test_monotone_decreasing(self, regime, online):
        m = meta(beta=4 if not regime.startswith("beta2") else 2)
        kw = dict(R=2.0, x0=[0.0, 0.0], online=online, mode="one_point")
        try:
            vals = [bound_overlay(regime, m, N, **kw) for N in (10**3, 10**4, 10**5, 10**6)]
        except BoundError:
            assert online  # only some regimes have online bounds
            return
        assert all(v > 0 and math.isfinite(v) for v in vals)
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_missing_constants(self):
        with pytest.raises(BoundError, match="R"):
            bound_overlay("one_point_convex", meta(), 100)
        with pytest.raises(BoundError, match="C_delta"):
            bound_overlay("one_point_convex", meta(C_delta_hint=None), 100, R=1.0)
        with pytest.raises(BoundError, match="mu"):
            bound_overlay("one_point_strongly_convex", meta(mu=0.0), 100)
        with pytest.raises(BoundError, match="optimum"):
            bound_overlay("two_point_convex", meta(optimum_point=None), 100)
        with pytest.raises(BoundError):
            bound_overlay("constant", meta(), 100)
        with pytest.raises(BoundError):
            bound_overlay("one_point_convex", meta(), 0, R=1.0)


class TestFit:
    def test_exact_power_law(self):
        N = [10**3, 3 * 10**3, 10**4, 3 * 10**4, 10**5]
        rf = fit_rate({n: [n ** (-1 / 3)] * 5 for n in N}, 1 / 3)
        assert abs(rf.slope + 1 / 3) <= 1e-12
        assert rf.passed

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(0.05, 2.0), c=st.floats(1e-3, 1e3))
    def test_recovers_exponent(self, a, c):
        N = np.array([100, 1000, 10_000, 100_000])
        rf = fit_rate({int(n): [c * n**-a] for n in N}, a)
        assert abs(rf.slope + a) <= 1e-12
        assert rf.intercept == pytest.approx(math.log(c), abs=1e-9)

    def test_medians_and_iqr(self):
        groups = {100: [1.0, 2.0, 3.0], 1000: [0.5, 0.4, 0.6], 10_000: [0.1] * 3, 100_000: [0.01] * 3}
        rf = fit_rate(groups)
        assert rf.medians[:2] == [2.0, 0.5]
        assert rf.iqr[0] == [1.5, 2.5]
        assert rf.passed is None

    def test_tolerance(self):
        N = [10, 100, 1000, 10_000]
        rf = fit_rate({n: [n**-0.5] for n in N}, 0.3, tolerance=0.15)
        assert not rf.passed
        assert fit_rate({n: [n**-0.5] for n in N}, 0.4, tolerance=0.15).passed

    def test_nonpositive_excluded(self, caplog):
        N = [10, 100, 1000, 10_000, 100_000]
        groups = {n: [n**-0.5] for n in N}
        groups[100_000] = [-1e-9]
        rf = fit_rate(groups, 0.5)
        assert rf.excluded == [100_000]
        assert abs(rf.slope + 0.5) < 1e-12
        assert "excluded" in caplog.text

    def test_too_few_points(self):
        with pytest.raises(FitError, match="at least 4"):
            fit_rate({10: [1.0], 100: [0.5], 1000: [0.1]})
        groups = {10: [1.0], 100: [0.5], 1000: [0.1], 10_000: [0.0]}
        with pytest.raises(FitError):
            fit_rate(groups)

    def test_span(self):
        with pytest.raises(FitError, match="decades"):
            fit_rate({100: [1.0], 200: [0.9], 300: [0.8], 400: [0.7]})

    def test_cell_list_input(self):
        cells = [{"N": n, "gap": n**-0.25} for n in (10, 100, 1000, 10_000) for _ in range(3)]
        assert fit_rate(cells, metric="gap").slope == pytest.approx(-0.25, abs=1e-12)

    def test_loglog_slope(self):
        s, b = loglog_slope([1, 10, 100], [5, 0.5, 0.05])
        assert s == pytest.approx(-1.0) and b == pytest.approx(math.log(5))

    def test_to_dict(self):
        rf = fit_rate({n: [n**-0.5] for n in (10, 100, 1000, 10_000)}, 0.5)
        d = rf.to_dict()
        assert d["passed"] is True and d["expected_exponent"] == 0.5
