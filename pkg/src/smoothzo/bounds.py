"""Theoretical upper-bound overlays and expected rate exponents for each regime.

Bounds are reported next to empirical medians; their constants are loose by
design and are never used as pass/fail targets.
"""

from __future__ import annotations

import math

import numpy as np

from .oracles import ProblemMeta


class BoundError(ValueError):
    pass


def expected_exponent(regime: str, beta: int) -> float | None:
    """Exponent ``a`` of the rate ``N^{-a}`` attained by the regime's schedule."""
    if regime in ("two_point_convex", "anytime_two_point_convex", "one_point_convex",
                  "mbeta_unknown_one_point"):
        return (beta - 1) / (2 * beta)
    if regime in ("two_point_strongly_convex", "one_point_strongly_convex"):
        return (beta - 1) / (beta + 1)
    if regime in ("beta2_refined_two_point_convex", "beta2_refined_one_point_convex"):
        return 1.0 / 3.0
    if regime in ("beta2_refined_two_point_strongly_convex",
                  "beta2_refined_one_point_strongly_convex", "two_point_mbeta_zero"):
        return 0.5
    if regime == "asymptotic_strongly_convex":
        return beta / (beta + 1)
    return None


def _need(meta: ProblemMeta, *names):
    for name in names:
        v = getattr(meta, name)
        if v is None or (isinstance(v, float) and not math.isfinite(v)):
            raise BoundError(f"bound needs {name}, which is not available")


def _pos(meta: ProblemMeta, *names):
    _need(meta, *names)
    for name in names:
        if not getattr(meta, name) > 0:
            raise BoundError(f"bound needs a positive {name}")


def _dist0(meta: ProblemMeta, x0) -> float:
    if meta.optimum_point is None:
        raise BoundError("bound needs the optimum point")
    x0 = np.zeros(meta.dim) if x0 is None else np.asarray(x0, dtype=float)
    return float(np.linalg.norm(x0 - meta.optimum_point))


def _two_point_convex(meta, N, x0):
    _pos(meta, "M_beta", "M_2")
    b, d = meta.beta, meta.dim
    ratio = meta.M_beta / meta.M_2
    inner = (7 * b * meta.M_2 * _dist0(meta, x0) + 3 * meta.sigma
             + ratio ** (2 * b / (b + 1)) + b / N ** (1 / b) * ratio ** (-b / (b + 1)))
    return (d * d / N) ** ((b - 1) / (2 * b)) * inner**2


def _two_point_strong(meta, N, x0, flip=False):
    _pos(meta, "M_beta", "M_2", "mu")
    b, d, M, mu = meta.beta, meta.dim, meta.M_beta, meta.mu
    ratio = (M / meta.M_2) if flip else (meta.M_2 / M)
    inner = (8 * b * M * _dist0(meta, x0) + 4 * meta.sigma + 2
             + b * ratio**2 * (M * M / (N * mu)) ** (2 / (b + 1)))
    return (d * d * M * M / (N * mu)) ** ((b - 1) / (b + 1)) * inner**2


def _C(meta, C):
    C = meta.C_delta_hint if C is None else C
    if C is None:
        raise BoundError("bound needs C_delta, a uniform bound of |f| near K")
    return C


def _one_point_convex(meta, N, R, C, power=1):
    _pos(meta, "M_beta")
    if R is None:
        raise BoundError("bound needs the diameter R of K")
    b, d = meta.beta, meta.dim
    return (25 * R * meta.M_beta**power * (d * d * b / N) ** ((b - 1) / (2 * b))
            * (_C(meta, C) + meta.sigma**2 + 1))


def bound_overlay(regime: str, meta: ProblemMeta, N: int, *, R: float | None = None,
                  x0=None, C: float | None = None, online: bool = False,
                  gamma0: float | None = None, delta0: float | None = None,
                  mode: str | None = None) -> float:
    """Value of the regime's upper bound at horizon ``N``.

    Convex and strongly convex regimes bound the gap of the averaged iterate
    (online: the average regret); the asymptotic regime bounds ``|x_N - x*|``.
    """
    if N < 1:
        raise BoundError("N must be >= 1")
    b, d, s = meta.beta, meta.dim, meta.sigma
    if online:
        if regime in ("two_point_convex", "anytime_two_point_convex"):
            return _two_point_convex(meta, N, x0)
        if regime == "two_point_strongly_convex":
            _pos(meta, "M_beta", "mu")
            _need(meta, "M_1")
            return (2 * b * b * (d * d * meta.M_beta**2 / (N * meta.mu)) ** (b / (b + 2)) * (s * s + 6)
                    + 4 * b * b * d * d * meta.M_1**2 * math.log(N + 1) / (N * meta.mu))
        if regime == "one_point_convex":
            return _one_point_convex(meta, N, R, C)
        if regime == "one_point_strongly_convex":
            return _two_point_strong(meta, N, x0, flip=True)
        raise BoundError(f"no online bound for regime {regime}")

    if regime == "two_point_convex":
        return _two_point_convex(meta, N, x0)
    if regime == "anytime_two_point_convex":
        return math.log(N + 1) * _two_point_convex(meta, N, x0)
    if regime == "two_point_strongly_convex":
        return _two_point_strong(meta, N, x0)
    if regime == "one_point_convex":
        return _one_point_convex(meta, N, R, C)
    if regime == "mbeta_unknown_one_point":
        return _one_point_convex(meta, N, R, C, power=b)
    if regime == "one_point_strongly_convex":
        _pos(meta, "M_beta", "mu")
        return (15 * b * b * meta.M_beta ** (2 * b / (b + 1)) * (d * d / (meta.mu * N)) ** ((b - 1) / (b + 1))
                * (_C(meta, C) + s * s + 1))
    if regime == "beta2_refined_two_point_convex":
        _pos(meta, "M_2")
        dist = _dist0(meta, x0)
        return 2 * (d * d / N) ** (1 / 3) * (96 * meta.M_2**2 * dist**2 + s * s / 10 + 18) + 2 * d * d / N
    if regime == "beta2_refined_two_point_strongly_convex":
        _pos(meta, "M_2", "mu")
        t = d * d * meta.M_2**2 * math.log(N) / (N * meta.mu)
        return 4 * (2 * s * s + 27) * math.sqrt(t) + (21 * t) ** 1.5
    if regime == "beta2_refined_one_point_convex":
        _pos(meta, "M_2")
        if R is None:
            raise BoundError("bound needs the diameter R of K")
        return 44 * (d * d * meta.M_2**2 * R * R / N) ** (1 / 3) * (_C(meta, C) + s * s + 1)
    if regime == "beta2_refined_one_point_strongly_convex":
        _pos(meta, "M_2", "mu")
        return 66 * math.sqrt(d * d * meta.M_2**2 / (meta.mu * N)) * (_C(meta, C) ** 2 + s * s + 1)
    if regime == "asymptotic_strongly_convex":
        _pos(meta, "M_beta", "M_2", "mu")
        mu, M, M2 = meta.mu, meta.M_beta, meta.M_2
        if mode == "one_point":
            return (16 * b * (d * d / N) ** ((b - 1) / b) * (2 * math.e * M * M2 / mu) ** 2
                    * (3 * _C(meta, C) ** 2 + 3 * s * s + 1))
        t = d * d * math.log(N + 1) / N
        return (16 * M * M / mu**2 * (2 * s * s + 16) * t ** ((b - 1) / b)
                + 48 * b**3 * M2**4 / (mu**2 * M * M) * t ** ((b + 1) / b))
    if regime == "two_point_mbeta_zero":
        # constant delta, gamma = gamma0 / sqrt(N): the smoothing bias term vanishes
        _pos(meta, "M_2")
        g0 = gamma0 if gamma0 is not None else 1.0 / (24 * d * meta.M_2**2 * b * b)
        dl = 1.0 if delta0 is None else delta0
        gamma = g0 / math.sqrt(N)
        Cterm = 3 * gamma * d * d * s * s * b**3 / dl**2 + 8 * gamma * d * d * b * b * meta.M_2**4 * dl**2
        return 2 * _dist0(meta, x0) ** 2 / (gamma * N) + 2 * Cterm
    raise BoundError(f"no bound for regime {regime}")
