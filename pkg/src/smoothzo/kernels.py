"""Odd polynomial smoothing kernels built from Legendre polynomials.

A kernel of order ``beta`` is an odd polynomial ``k`` on ``[-1, 1]`` with

    E_r[r k(r)] = 1,    E_r[r^s k(r)] = 0   for odd 3 <= s <= beta,

where ``E_r`` averages uniformly over ``[-1, 1]``.  It is obtained as
``sum_m p_m'(0) p_m(r)`` over the orthonormal Legendre polynomials
``p_m = sqrt(2m + 1) L_m``.  Coefficients are built in exact rational
arithmetic and converted to floats once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MAX_DEGREE = 32

Poly = tuple[Fraction, ...]  # monomial coefficients, lowest degree first


@dataclass(frozen=True)
class LegendreBasis:
    max_degree: int
    coefficients: tuple[Poly, ...]

    def __getitem__(self, m: int) -> Poly:
        return self.coefficients[m]

    def derivative_at_zero(self, m: int) -> Fraction:
        poly = self.coefficients[m]
        return poly[1] if len(poly) > 1 else Fraction(0)

    def orthonormal(self, m: int) -> np.ndarray:
        """Float coefficients of ``p_m = sqrt(2m+1) L_m``."""
        return math.sqrt(2 * m + 1) * np.array([float(c) for c in self.coefficients[m]])


def legendre_basis(max_degree: int) -> LegendreBasis:
    """Exact Legendre polynomials ``L_0 .. L_max_degree`` via the three-term recursion."""
    if not 0 <= max_degree <= MAX_DEGREE:
        raise ValueError(f"max_degree must lie in [0, {MAX_DEGREE}], got {max_degree}")
    polys: list[Poly] = [(Fraction(1),)]
    if max_degree >= 1:
        polys.append((Fraction(0), Fraction(1)))
    for m in range(1, max_degree):
        # (m+1) L_{m+1} = (2m+1) r L_m - m L_{m-1}
        shifted = (Fraction(0),) + polys[m]
        prev = polys[m - 1] + (Fraction(0),) * (len(shifted) - len(polys[m - 1]))
        polys.append(
            tuple(((2 * m + 1) * a - m * b) / (m + 1) for a, b in zip(shifted, prev))
        )
    return LegendreBasis(max_degree, tuple(polys))


def uniform_moment(poly: Poly, s: int = 0) -> Fraction:
    """Exact ``(1/2) int_{-1}^{1} r^s poly(r) dr``."""
    total = Fraction(0)
    for j, c in enumerate(poly):
        if c and (j + s) % 2 == 0:
            total += c / (j + s + 1)
    return total


def poly_mul(a: Poly, b: Poly) -> Poly:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return tuple(out)


@dataclass(frozen=True)
class Kernel:
    beta: int
    exact_coeffs: Poly
    coeffs: np.ndarray = field(repr=False, compare=False)

    def __call__(self, r):
        return eval_kernel(self, r)

    @property
    def odd_coeffs(self) -> tuple[float, ...]:
        """Float coefficients of ``r, r^3, r^5, ...``, used for fast scalar Horner."""
        return tuple(float(c) for c in self.exact_coeffs[1::2])


class KernelCertificationError(ArithmeticError):
    pass


def build_kernel(beta: int) -> Kernel:
    """The order-``beta`` kernel ``sum_{odd m <= beta} (2m+1) L_m'(0) L_m(r)``.

    Moment conditions are certified exactly before returning; order ``2s``
    and ``2s - 1`` give the same polynomial.
    """
    if not 1 <= beta <= MAX_DEGREE:
        raise ValueError(f"beta must lie in [1, {MAX_DEGREE}], got {beta}")
    basis = legendre_basis(beta)
    coeffs = [Fraction(0)] * (beta + 1)
    for m in range(1, beta + 1, 2):
        weight = (2 * m + 1) * basis.derivative_at_zero(m)
        for j, c in enumerate(basis[m]):
            coeffs[j] += weight * c
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    exact = tuple(coeffs)
    kernel = Kernel(beta, exact, np.array([float(c) for c in exact]))
    _certify(kernel)
    return kernel


def _certify(k: Kernel) -> None:
    if any(c != 0 for c in k.exact_coeffs[0::2]):
        raise KernelCertificationError(f"kernel of order {k.beta} is not odd")
    if kernel_moment(k, 1) != 1:
        raise KernelCertificationError(f"E[r k(r)] != 1 for order {k.beta}")
    for s in range(3, k.beta + 1, 2):
        if kernel_moment(k, s) != 0:
            raise KernelCertificationError(f"E[r^{s} k(r)] != 0 for order {k.beta}")


def kernel_moment(k: Kernel, s: int) -> Fraction:
    """Exact ``E_r[r^s k(r)]`` for ``r`` uniform on ``[-1, 1]``."""
    if s < 0:
        raise ValueError("moment order must be nonnegative")
    return uniform_moment(k.exact_coeffs, s)


def eval_kernel(k: Kernel, r):
    """Horner evaluation of ``k`` at ``r`` (scalar or array) with ``|r| <= 1``."""
    arr = np.asarray(r, dtype=float)
    if np.any(np.abs(arr) > 1.0):
        raise ValueError("kernel argument outside [-1, 1]")
    out = np.zeros_like(arr)
    for c in k.coeffs[::-1]:
        out = out * arr + c
    return float(out) if out.ndim == 0 else out


def _half_interval_quadrature(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre on [-1, 0] and [0, 1] separately; weights include the 1/2 of E_r.
    x, w = np.polynomial.legendre.leggauss(nodes)
    right = 0.5 * (x + 1.0)
    pts = np.concatenate([-right[::-1], right])
    wts = np.concatenate([w[::-1], w]) * 0.25
    return pts, wts


@dataclass(frozen=True)
class NormBoundReport:
    beta: int
    second_moment: float  # E|k|^2
    weighted_second_moment: float  # E|k|^2 r^2
    tail_moment: float  # E|k r^{beta+1}|
    bounds: tuple[float, float, float]
    slack: float = 1e-8

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        vals = (self.second_moment, self.weighted_second_moment, self.tail_moment)
        return tuple(v <= b + self.slack for v, b in zip(vals, self.bounds))

    @property
    def passed(self) -> bool:
        return all(self.flags)

    def as_dict(self) -> dict:
        names = ("E|k|^2", "E|k|^2 r^2", "E|k r^(beta+1)|")
        vals = (self.second_moment, self.weighted_second_moment, self.tail_moment)
        return {
            name: {"value": v, "bound": b, "pass": ok}
            for name, v, b, ok in zip(names, vals, self.bounds, self.flags)
        }


def abs_moment(k: Kernel, power: int) -> float:
    """``E_r |k(r) r^power|`` by Gauss quadrature, split at the kink ``r = 0``."""
    pts, wts = _half_interval_quadrature(4 * k.beta + 8 + power // 2)
    return float(np.sum(wts * np.abs(eval_kernel(k, pts) * pts**power)))


def kernel_norm_bounds(k: Kernel, slack: float = 1e-8) -> NormBoundReport:
    pts, wts = _half_interval_quadrature(4 * k.beta + 8)
    vals = eval_kernel(k, pts)
    b = k.beta
    return NormBoundReport(
        beta=b,
        second_moment=float(np.sum(wts * vals**2)),
        weighted_second_moment=float(np.sum(wts * vals**2 * pts**2)),
        tail_moment=abs_moment(k, b + 1),
        bounds=(3.0 * b**3, 8.0 * b**2, 2.0 * math.sqrt(2.0) * b),
        slack=slack,
    )


# As printed in the literature; kept only so callers can report the mismatch.
_PRINTED_FORMS = {
    3: "(15r/4)(5 - 7r^3)",
    4: "(15r/4)(5 - 7r^3)",
    5: "(195r/64)(99r^4 - 126r^2 + 35)",
    6: "(195r/64)(99r^4 - 126r^2 + 35)",
}


def discrepancy_note(beta: int) -> str | None:
    printed = _PRINTED_FORMS.get(beta)
    if printed is None:
        return None
    if beta in (3, 4):
        actual = "(15r/4)(5 - 7r^2)"
        why = "the printed r^3 term breaks oddness"
    else:
        actual = "(105r/64)(99r^4 - 126r^2 + 35)"
        why = "the printed 195/64 factor gives E[r k(r)] = 13/7, not 1"
    return f"commonly printed as {printed}; the construction gives {actual} ({why})"
