"""Kernel-smoothed gradient estimates from function values, and Monte Carlo diagnostics.

The one-point estimate at ``x`` is

    g = (d / delta) [f(x + delta r u) + eps] k(r) u

and the two-point estimate is

    g = (d / (2 delta)) [f(x + delta r u) - f(x - delta r u) + eps] k(r) u

with ``r`` uniform on ``[-1, 1]`` and ``u`` uniform on the unit sphere.  Both are
unbiased for the gradient of the smoothed surrogate
``f_delta(x) = E_r E_{|v| <= 1} f(x + r delta v) r k(r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import RandomSource, ball_batch, sphere_batch
from .kernels import Kernel, abs_moment, eval_kernel
from .oracles import Oracle


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    query_points: tuple[np.ndarray, ...]
    round: int
    delta: float
    k_value: float
    u: np.ndarray
    r: float


def _horner_odd(odd_coeffs: tuple[float, ...], r: float) -> float:
    r2 = r * r
    acc = 0.0
    for c in reversed(odd_coeffs):
        acc = acc * r2 + c
    return acc * r


def one_point_estimate(oracle: Oracle, n: int, x: np.ndarray, delta: float,
                       kernel: Kernel, rng: RandomSource) -> GradientEstimate:
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = x.shape[0]
    r, u = rng.draw_pair(d)
    y = x + (delta * r) * u
    fb = oracle.query(n, y)
    kr = _horner_odd(kernel.odd_coeffs, r)
    g = (d / delta * fb.value * kr) * u
    return GradientEstimate(g, (y,), n, delta, kr, u, r)


def two_point_estimate(oracle: Oracle, n: int, x: np.ndarray, delta: float,
                       kernel: Kernel, rng: RandomSource) -> GradientEstimate:
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = x.shape[0]
    r, u = rng.draw_pair(d)
    h = (delta * r) * u
    y_plus, y_minus = x + h, x - h
    f_plus = oracle.query(n, y_plus).value
    f_minus = oracle.query(n, y_minus).value
    kr = _horner_odd(kernel.odd_coeffs, r)
    g = (d / (2.0 * delta) * (f_plus - f_minus) * kr) * u
    return GradientEstimate(g, (y_plus, y_minus), n, delta, kr, u, r)


# --------------------------------------------------------------------------
# vectorised Monte Carlo (noiseless f accepting an (n, d) array)

VecFn = Callable[[np.ndarray], np.ndarray]

_CHUNK = 1 << 17


@dataclass(frozen=True)
class MeanEstimate:
    mean: np.ndarray | float
    se: np.ndarray | float
    second_moment: float
    samples: int


def _accumulate(sample_fn, total: int, gen: np.random.Generator) -> MeanEstimate:
    s1 = s2 = None
    sq = 0.0
    done = 0
    while done < total:
        m = min(_CHUNK, total - done)
        vals = sample_fn(gen, m)
        s1 = vals.sum(axis=0) if s1 is None else s1 + vals.sum(axis=0)
        s2 = (vals**2).sum(axis=0) if s2 is None else s2 + (vals**2).sum(axis=0)
        sq += float(np.sum(vals**2))
        done += m
    mean = s1 / total
    var = np.maximum(s2 / total - mean**2, 0.0) * total / max(total - 1, 1)
    return MeanEstimate(mean, np.sqrt(var / total), sq / total, total)


def estimate_samples(f: VecFn, x, delta: float, kernel: Kernel, gen: np.random.Generator,
                     count: int, mode: str = "one_point") -> np.ndarray:
    """``count`` independent noiseless estimator draws at ``x``, shape ``(count, d)``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    r = gen.uniform(-1.0, 1.0, count)
    u = sphere_batch(gen, count, d)
    h = (delta * r)[:, None] * u
    kr = eval_kernel(kernel, r)
    if mode == "one_point":
        scal = d / delta * f(x + h) * kr
    elif mode == "two_point":
        scal = d / (2.0 * delta) * (f(x + h) - f(x - h)) * kr
    else:
        raise ValueError(f"unknown estimator mode {mode!r}")
    return scal[:, None] * u


def estimator_mean(f: VecFn, x, delta: float, kernel: Kernel, samples: int,
                   gen: np.random.Generator, mode: str = "one_point") -> MeanEstimate:
    """Monte Carlo mean, standard error and second moment ``E|g|^2`` of an estimator."""
    return _accumulate(
        lambda g, m: estimate_samples(f, x, delta, kernel, g, m, mode), samples, gen
    )


@dataclass(frozen=True)
class SmoothingDiagnostics:
    value: float
    value_se: float
    samples: int
    gradient: np.ndarray | None = None
    gradient_se: np.ndarray | None = None
    bias: np.ndarray | None = None
    second_moment: float | None = None


def smoothed_value(f: VecFn, x, delta: float, kernel: Kernel, mc_samples: int,
                   gen: np.random.Generator) -> SmoothingDiagnostics:
    """Monte Carlo ``E_r E_{|v|<=1} f(x + r delta v) r k(r)`` with its standard error."""
    if mc_samples < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=float)
    d = x.size

    def draw(g, m):
        r = g.uniform(-1.0, 1.0, m)
        v = ball_batch(g, m, d)
        return f(x + (delta * r)[:, None] * v) * r * eval_kernel(kernel, r)

    est = _accumulate(draw, mc_samples, gen)
    return SmoothingDiagnostics(float(est.mean), float(est.se), mc_samples)


def smoothed_gradient_fd(f: VecFn, x, delta: float, kernel: Kernel, mc_samples: int,
                         gen: np.random.Generator, h: float | None = None) -> MeanEstimate:
    """Central differences of the Monte Carlo smoothed value, common random numbers per sample."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = delta * 1e-3 if h is None else h
    eye = np.eye(d)

    def draw(g, m):
        r = g.uniform(-1.0, 1.0, m)
        pts = x + (delta * r)[:, None] * ball_batch(g, m, d)
        w = r * eval_kernel(kernel, r)
        cols = [(f(pts + h * e) - f(pts - h * e)) / (2.0 * h) * w for e in eye]
        return np.stack(cols, axis=1)

    return _accumulate(draw, mc_samples, gen)


def gradient_bias_bound(kernel: Kernel, M_beta_pow: float, delta: float) -> float:
    """``M_beta^beta / (beta-1)! * delta^(beta-1) * E|k(r) r^beta|``."""
    b = kernel.beta
    return M_beta_pow / math.factorial(b - 1) * delta ** (b - 1) * abs_moment(kernel, b)


def value_bias_bound(kernel: Kernel, M_beta_pow: float, delta: float) -> float:
    b = kernel.beta
    return M_beta_pow / math.factorial(b) * delta**b * abs_moment(kernel, b + 1)


@dataclass(frozen=True)
class GradientCheck:
    sphere: MeanEstimate
    finite_difference: MeanEstimate
    analytic: np.ndarray | None
    bias_bound: float | None

    def gap(self, a: str, b: str) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise gap between two routes and its combined standard error."""
        vals = {"sphere": self.sphere, "fd": self.finite_difference}
        ma, sa = (vals[a].mean, vals[a].se) if a in vals else (self.analytic, 0.0)
        mb, sb = (vals[b].mean, vals[b].se) if b in vals else (self.analytic, 0.0)
        return np.abs(np.asarray(ma) - np.asarray(mb)), np.sqrt(np.square(sa) + np.square(sb))

    def to_dict(self) -> dict:
        out = {
            "sphere_mean": np.atleast_1d(self.sphere.mean).tolist(),
            "sphere_se": np.atleast_1d(self.sphere.se).tolist(),
            "fd_mean": np.atleast_1d(self.finite_difference.mean).tolist(),
            "fd_se": np.atleast_1d(self.finite_difference.se).tolist(),
            "samples": self.sphere.samples,
            "bias_bound": self.bias_bound,
        }
        gap, se = self.gap("sphere", "fd")
        out["gap_sphere_fd"], out["se_sphere_fd"] = gap.tolist(), se.tolist()
        if self.analytic is not None:
            out["analytic"] = np.atleast_1d(self.analytic).tolist()
            gap, se = self.gap("sphere", "analytic")
            out["gap_sphere_analytic"], out["se_sphere_analytic"] = gap.tolist(), se.tolist()
        return out


def smoothed_gradient_check(f: VecFn, x, delta: float, kernel: Kernel, mc_samples: int,
                            gen: np.random.Generator, grad: Callable | None = None,
                            M_beta_pow: float | None = None) -> GradientCheck:
    """Cross-check the sphere formula against finite differences and, if given, ``grad``."""
    sphere = estimator_mean(f, x, delta, kernel, mc_samples, gen, "one_point")
    fd = smoothed_gradient_fd(f, x, delta, kernel, mc_samples, gen)
    analytic = None if grad is None else np.atleast_1d(np.asarray(grad(np.asarray(x, float)), float))
    bound = None if M_beta_pow is None else gradient_bias_bound(kernel, M_beta_pow, delta)
    return GradientCheck(sphere, fd, analytic, bound)


def exact_one_point_mean_1d(f: VecFn, x: float, delta: float, kernel: Kernel,
                            nodes: int = 200) -> float:
    """Exact ``E[g]`` of the one-point estimator in one dimension.

    The sphere is ``{-1, +1}`` and the ``r`` integral is done by Gauss-Legendre.
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    kr = eval_kernel(kernel, t)
    pts_plus = (x + delta * t)[:, None]
    pts_minus = (x - delta * t)[:, None]
    odd_part = 0.5 * (np.asarray(f(pts_plus)) - np.asarray(f(pts_minus)))
    return float(0.5 * np.sum(w * odd_part * kr) / delta)
