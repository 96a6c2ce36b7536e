"""Noisy zeroth-order oracles and the synthetic problem catalog.

A *problem* is a noiseless objective (or a sequence ``f_n`` for online runs)
together with its smoothness constants.  An :class:`Oracle` wraps a problem
with a noise model and enforces the query protocol: one query per round for
one-point methods, two per round for two-point methods.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import ConstraintSet, RandomSource, contains, contains_dilated, project


class ProtocolError(RuntimeError):
    """A round was queried more often than the protocol allows, or out of order."""


class DomainError(ValueError):
    """A query point falls outside the oracle's declared domain."""


@dataclass(frozen=True)
class ProblemMeta:
    dim: int
    beta: int
    M_beta: float
    M_2: float
    mu: float = 0.0
    sigma: float = 0.0
    M_1: float | None = None
    M_3: float | None = None
    optimum_value: float | None = None
    optimum_point: np.ndarray | None = field(default=None, repr=False, compare=False)
    C_delta_hint: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("M_beta", "M_2", "mu", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def M_beta_pow(self) -> float:
        """``M_beta ** beta``, the bound on the beta-th derivative."""
        return self.M_beta**self.beta

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "beta": self.beta,
            "M_beta": self.M_beta,
            "M_2": self.M_2,
            "mu": self.mu,
            "sigma": self.sigma,
            "M_1": self.M_1,
            "M_3": self.M_3,
            "optimum_value": self.optimum_value,
            "optimum_point": None if self.optimum_point is None else self.optimum_point.tolist(),
            "C_delta_hint": self.C_delta_hint,
        }
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "gaussian"  # gaussian | uniform | data | none
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "data", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def draw(self, rng: RandomSource) -> float:
        if self.sigma == 0.0 or self.kind in ("none", "data"):
            return 0.0
        if self.kind == "gaussian":
            return self.sigma * rng.normal()
        # uniform on [-a, a] with variance sigma^2
        return self.sigma * math.sqrt(3.0) * (2.0 * rng.uniform() - 1.0)


@dataclass(frozen=True)
class Feedback:
    value: float
    point: np.ndarray
    round: int


# --------------------------------------------------------------------------
# problems


class Problem:
    """Noiseless objective; online problems override :meth:`value_at`."""

    dim: int
    online = False

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def value_at(self, n, x):
        """``f_n(x)``; rows of ``x`` pair with entries of ``n`` when both are arrays."""
        return self.value(x)

    def noisy_value(self, n: int, y: np.ndarray, rng: RandomSource) -> float | None:
        """Data-driven feedback for round ``n``, or ``None`` when noise is purely additive."""
        return None

    def average(self, N: int) -> "Problem":
        """The Cesaro average ``(1/N) sum_{n<=N} f_n``."""
        return self

    def smoothness(self, beta: int) -> float:
        """``M_beta`` (not raised to the power ``beta``)."""
        raise NotImplementedError

    def sup_abs(self, radius: float) -> float:
        """Upper bound of ``|f|`` over the origin-centred ball of the given radius."""
        raise NotImplementedError


class Quadratic(Problem):
    """``f(x) = 1/2 x^T A x - b^T x``."""

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape != (b.size, b.size):
            raise ValueError("A must be d x d with d = len(b)")
        if not np.allclose(A, A.T):
            raise ValueError("A must be symmetric")
        self.A, self.b, self.dim = A, b, b.size
        eig = np.linalg.eigvalsh(A)
        self.eig_min, self.eig_max = float(eig[0]), float(eig[-1])

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return 0.5 * float(x @ self.A @ x) - float(self.b @ x)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.A, x) - x @ self.b

    def gradient(self, x):
        return np.asarray(x, dtype=float) @ self.A - self.b

    def hessian(self, x):
        return self.A

    def smoothness(self, beta: int) -> float:
        if beta == 2:
            return math.sqrt(max(abs(self.eig_min), abs(self.eig_max)))
        return 0.0 if beta >= 3 else math.inf

    def sup_abs(self, radius: float) -> float:
        return 0.5 * max(abs(self.eig_min), abs(self.eig_max)) * radius**2 + float(
            np.linalg.norm(self.b)
        ) * radius


class Logistic(Problem):
    """``f(x) = mean_i log(1 + exp(-a_i^T x)) + (l2/2) |x|^2``."""

    def __init__(self, samples, l2: float = 0.0):
        a = np.atleast_2d(np.asarray(samples, dtype=float))
        if a.shape[0] == 0:
            raise ValueError("logistic problem needs at least one sample")
        if l2 < 0:
            raise ValueError("l2 must be nonnegative")
        self.samples, self.l2 = a, float(l2)
        self.dim = a.shape[1]
        self.R_data = float(np.max(np.linalg.norm(a, axis=1)))
        if not self.R_data > 0:
            raise ValueError("samples must not all vanish")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        margins = x @ self.samples.T
        out = np.logaddexp(0.0, -margins).mean(axis=-1)
        if self.l2:
            out = out + 0.5 * self.l2 * np.sum(x * x, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        s = -_sigmoid(-(x @ self.samples.T))
        return s @ self.samples / self.samples.shape[0] + self.l2 * x

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        p = _sigmoid(x @ self.samples.T)
        w = p * (1.0 - p) / self.samples.shape[0]
        return (self.samples.T * w) @ self.samples + self.l2 * np.eye(self.dim)

    def sample_loss(self, i: int, y: np.ndarray) -> float:
        m = float(self.samples[i] @ y)
        return float(np.logaddexp(0.0, -m)) + 0.5 * self.l2 * float(y @ y)

    def smoothness(self, beta: int) -> float:
        # M_beta^beta = (beta-1)! R^beta / 4 for the log-loss; l2 only touches beta = 2
        pw = 0.25 * math.factorial(beta - 1) * self.R_data**beta
        if beta == 2:
            pw += self.l2
        return pw ** (1.0 / beta)

    def lipschitz(self, radius: float) -> float:
        return self.R_data + self.l2 * radius

    def sup_abs(self, radius: float) -> float:
        norms = np.linalg.norm(self.samples, axis=1)
        return float(np.logaddexp(0.0, norms * radius).mean()) + 0.5 * self.l2 * radius**2


class StochasticLogistic(Logistic):
    """Logistic objective whose feedback comes from one freshly resampled data point."""

    def noisy_value(self, n, y, rng):
        return self.sample_loss(rng.integers(self.samples.shape[0]), y)


class LogisticSequence(Logistic):
    """Online logistic losses ``f_n(x) = log(1 + exp(-a_{i_n}^T x))`` with revealed indices."""

    online = True

    def __init__(self, samples, indices, l2: float = 0.0):
        super().__init__(samples, l2)
        self.indices = np.asarray(indices, dtype=int)

    @classmethod
    def random(cls, samples, N: int, rng: RandomSource, l2: float = 0.0):
        m = np.atleast_2d(samples).shape[0]
        return cls(samples, [rng.integers(m) for _ in range(N)], l2)

    def value_at(self, n, x):
        x = np.asarray(x, dtype=float)
        a = self.samples[self.indices[np.asarray(n) - 1]]
        out = np.logaddexp(0.0, -np.sum(a * x, axis=-1)) + 0.5 * self.l2 * np.sum(x * x, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def average(self, N: int) -> Logistic:
        return Logistic(self.samples[self.indices[:N]], self.l2)


class LinearSequence(Problem):
    """Online linear losses ``f_n(x) = s_n c^T x`` for a sign sequence ``s_n``."""

    online = True

    def __init__(self, c, signs):
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.signs = np.asarray(signs, dtype=float)
        self.dim = self.c.size

    @classmethod
    def alternating(cls, c, N: int):
        return cls(c, [(-1.0) ** n for n in range(1, N + 1)])

    def value_at(self, n, x):
        x = np.asarray(x, dtype=float)
        out = self.signs[np.asarray(n) - 1] * (x @ self.c)
        return float(out) if np.ndim(out) == 0 else out

    def value(self, x):
        return self.value_at(1, x)

    def average(self, N: int) -> "Quadratic":
        mean_sign = float(self.signs[:N].mean())
        return Quadratic(np.zeros((self.dim, self.dim)), -mean_sign * self.c)

    def smoothness(self, beta: int) -> float:
        return 0.0 if beta >= 2 else float(np.linalg.norm(self.c))

    def sup_abs(self, radius: float) -> float:
        return float(np.linalg.norm(self.c)) * radius


class RepeatedProblem(Problem):
    """Online view of a fixed objective: ``f_n = f`` for every round."""

    online = True

    def __init__(self, base: Problem):
        self.base, self.dim = base, base.dim

    def value_at(self, n, x):
        return self.base.value(x)

    def value(self, x):
        return self.base.value(x)

    def gradient(self, x):
        return self.base.gradient(x)

    def hessian(self, x):
        return self.base.hessian(x)

    def noisy_value(self, n, y, rng):
        return self.base.noisy_value(n, y, rng)

    def average(self, N):
        return self.base

    def smoothness(self, beta):
        return self.base.smoothness(beta)

    def sup_abs(self, radius):
        return self.base.sup_abs(radius)


class Scalar1D(Problem):
    """A one-dimensional objective given by value/derivative callables."""

    dim = 1

    def __init__(self, f, df=None, d2f=None, name: str = ""):
        self._f, self._df, self._d2f, self.name = f, df, d2f, name

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = self._f(x[..., 0])
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self._df(x[..., 0]))[..., None]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self._d2f(x[..., 0])).reshape(x.shape[:-1] + (1, 1))


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


# --------------------------------------------------------------------------
# the oracle


class Oracle:
    """Zeroth-order oracle: ``query(n, y)`` returns ``f_n(y) + eps`` with fresh noise."""

    def __init__(
        self,
        problem: Problem,
        noise: NoiseModel | None = None,
        rng: RandomSource | None = None,
        queries_per_round: int = 1,
        domain: tuple[ConstraintSet, float] | None = None,
    ):
        self.problem = problem
        self.noise = noise or NoiseModel("none")
        self.rng = rng or RandomSource(0, 1)
        self.queries_per_round = queries_per_round
        self.domain = domain
        self.count = 0
        self._round = 0
        self._in_round = 0

    def clone(self, rng: RandomSource) -> "Oracle":
        return Oracle(self.problem, self.noise, rng, self.queries_per_round, self.domain)

    def configure(self, queries_per_round: int, domain=None) -> None:
        self.queries_per_round = queries_per_round
        self.domain = domain

    def reset(self) -> None:
        """Forget the round state and query count (the noise stream is not rewound)."""
        self.count = self._round = self._in_round = 0

    def query(self, n: int, y) -> Feedback:
        if n < self._round:
            raise ProtocolError(f"round {n} queried after round {self._round}")
        if n == self._round:
            if self._in_round >= self.queries_per_round:
                raise ProtocolError(
                    f"round {n} already queried {self._in_round} time(s); "
                    f"protocol allows {self.queries_per_round}"
                )
        else:
            self._round, self._in_round = n, 0
        y = np.asarray(y, dtype=float)
        if self.domain is not None:
            K, delta = self.domain
            if not contains_dilated(K, y, delta):
                raise DomainError(f"query {y} outside the {delta:g}-neighbourhood of K")
        value = self.problem.noisy_value(n, y, self.rng) if self.noise.kind == "data" else None
        if value is None:
            value = self.problem.value_at(n, y) + self.noise.draw(self.rng)
        self._in_round += 1
        self.count += 1
        return Feedback(float(value), y, n)


def query(oracle: Oracle, n: int, y) -> Feedback:
    return oracle.query(n, y)


# --------------------------------------------------------------------------
# offline minimisation (comparators and optima)


def minimize_offline(problem: Problem, K: ConstraintSet, x0=None, tol: float = 1e-10,
                     max_iter: int = 200_000) -> tuple[np.ndarray, float]:
    """High-accuracy deterministic minimiser of a smooth convex ``problem`` over ``K``.

    Damped Newton first; if its solution is infeasible (or Newton stalls) fall
    back to projected gradient with backtracking.
    """
    d = problem.dim
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    if K.bounded:
        x = project(K, x)
    x_newton = _newton(problem, x, tol)
    if x_newton is not None and (not K.bounded or contains(K, x_newton)):
        return x_newton, float(problem.value(x_newton))
    if not K.bounded:
        raise RuntimeError("Newton's method did not converge on an unconstrained problem")
    return _projected_gradient(problem, K, x, tol, max_iter)


def _newton(problem, x, tol, max_iter=100):
    for _ in range(max_iter):
        g = problem.gradient(x)
        if np.linalg.norm(g) <= tol:
            return x
        H = problem.hessian(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        fx, t = problem.value(x), 1.0
        while problem.value(x - t * step) > fx - 0.25 * t * float(g @ step) and t > 1e-12:
            t *= 0.5
        if t <= 1e-12:
            return x if np.linalg.norm(g) <= 1e3 * tol else None
        x = x - t * step
        if np.linalg.norm(x) > 1e8:
            return None
    return None


def _projected_gradient(problem, K, x, tol, max_iter):
    fx = problem.value(x)
    L = 1.0
    for _ in range(max_iter):
        g = problem.gradient(x)
        while True:
            x_new = project(K, x - g / L)
            step = x_new - x
            f_new = problem.value(x_new)
            if f_new <= fx + float(g @ step) + 0.5 * L * float(step @ step) + 1e-15:
                break
            L *= 2.0
        x, fx = x_new, f_new
        # gradient mapping L (x - P(x - g/L)) measures stationarity on K
        if L * np.linalg.norm(step) <= tol:
            break
        L = max(L / 1.5, 1e-8)
    return x, float(fx)


# --------------------------------------------------------------------------
# catalog


def _outer_radius(K: ConstraintSet) -> float:
    c, rho = K.enclosing_ball()
    return float(np.linalg.norm(c)) + rho


def uniform_bound(problem: Problem, K: ConstraintSet | None, delta: float) -> float | None:
    if K is None or not K.bounded:
        return None
    return problem.sup_abs(_outer_radius(K) + delta)


def make_quadratic(d: int, A=1.0, b=None, beta: int = 2, noise: NoiseModel | None = None,
                   K: ConstraintSet | None = None, delta1: float = 0.0,
                   rng: RandomSource | None = None, require_pd: bool = False):
    """Quadratic oracle ``1/2 x^T A x - b^T x``; ``A`` is a matrix or a scalar multiple of I."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = float(A) * np.eye(d)
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float)
    prob = Quadratic(A, b)
    if prob.eig_min < -1e-12 * max(1.0, abs(prob.eig_max)):
        raise ValueError("A must be positive semidefinite")
    if require_pd and prob.eig_min <= 0:
        raise ValueError("strongly convex configuration needs a positive definite A")
    noise = noise or NoiseModel("none")
    K = K or ConstraintSet.whole_space(d)
    if K.bounded or prob.eig_min > 0:
        x_opt, f_opt = minimize_offline(prob, K)
    else:
        x_opt, f_opt = None, None
    meta = ProblemMeta(
        dim=d, beta=beta, M_beta=prob.smoothness(beta), M_2=prob.smoothness(2),
        mu=max(prob.eig_min, 0.0), sigma=noise.sigma, M_3=0.0,
        M_1=prob.eig_max * (_outer_radius(K) + delta1) + float(np.linalg.norm(b))
        if K.bounded else None,
        optimum_value=f_opt, optimum_point=x_opt, C_delta_hint=uniform_bound(prob, K, delta1),
    )
    return Oracle(prob, noise, rng or RandomSource(0, 1)), meta


def make_logistic(samples, mode: str = "stochastic", beta: int = 2, l2: float = 0.0,
                  noise: NoiseModel | None = None, K: ConstraintSet | None = None,
                  delta1: float = 0.0, N: int | None = None,
                  rng: RandomSource | None = None):
    """Logistic-regression oracle over a fixed sample matrix (rows are data points).

    ``mode="stochastic"``: the objective is the sample mean; with ``noise.kind ==
    "data"`` each feedback uses one resampled row.  ``mode="online"``: round ``n``
    reveals ``f_n`` built from a row drawn for that round (needs ``N``).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise ValueError("empty sample set")
    rng = rng or RandomSource(0, 1)
    noise = noise or NoiseModel("data")
    d = samples.shape[1]
    K = K or ConstraintSet.whole_space(d)
    if mode == "stochastic":
        prob = StochasticLogistic(samples, l2)
        target = prob
    elif mode == "online":
        if N is None:
            raise ValueError("online logistic needs the horizon N")
        prob = LogisticSequence.random(samples, N, rng.spawn(rng.stream ^ 0x5EED), l2)
        target = prob.average(N)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    try:
        x_opt, f_opt = minimize_offline(target, K)
    except RuntimeError:
        x_opt, f_opt = None, None
    radius = _outer_radius(K) if K.bounded else None
    meta = ProblemMeta(
        dim=d, beta=beta, M_beta=prob.smoothness(beta), M_2=prob.smoothness(2), mu=l2,
        sigma=noise.sigma, M_3=prob.smoothness(3),
        M_1=prob.lipschitz(radius + delta1) if radius is not None else None,
        optimum_value=f_opt, optimum_point=x_opt, C_delta_hint=uniform_bound(prob, K, delta1),
        extra={"R_data": prob.R_data},
    )
    return Oracle(prob, noise, rng), meta


def make_linear_sequence(c, N: int, K: ConstraintSet, rng: RandomSource | None = None):
    """Alternating online linear losses ``(-1)^n c^T x`` (zero-mean adversary)."""
    prob = LinearSequence.alternating(c, N)
    x_opt, f_opt = minimize_offline(prob.average(N), K)
    meta = ProblemMeta(
        dim=prob.dim, beta=2, M_beta=0.0, M_2=0.0, M_1=float(np.linalg.norm(prob.c)),
        M_3=0.0, optimum_value=f_opt, optimum_point=x_opt,
        C_delta_hint=uniform_bound(prob, K, 0.0),
    )
    return Oracle(prob, NoiseModel("none"), rng or RandomSource(0, 1)), meta


def load_samples_csv(path: str | Path) -> np.ndarray:
    """Rows of plain decimal numbers, one sample per row."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and row[0].strip()]
    if not rows:
        raise ValueError(f"{path}: no samples")
    return np.array(rows)


# --------------------------------------------------------------------------
# lower-bound pair


def bump(y):
    """``g(y) = y / (1 + y^2)``."""
    y = np.asarray(y, dtype=float)
    return y / (1.0 + y * y)


@dataclass(frozen=True)
class LowerBoundPair:
    mu: float
    M: float
    beta: int
    T: float
    alpha: float
    theta: float
    f1: Scalar1D = field(repr=False)
    f2: Scalar1D = field(repr=False)

    @property
    def separation(self) -> float:
        """Guaranteed excess ``f_i(0) - f_i^*``: ``alpha / (16 mu theta^2)``."""
        return self.alpha / (16.0 * self.mu * self.theta**2)


def lower_bound_threshold(mu: float, M: float, beta: int) -> float:
    c = 2.0 * beta / M
    return (2.0 * mu * c * c) ** (-2.0 * beta / (beta - 2))


def make_lower_bound_pair(mu: float, M: float, beta: int, T: float) -> LowerBoundPair:
    """Two 1-d objectives ``2 mu x^2 +/- alpha g(x / theta)`` that ``T`` queries cannot tell apart."""
    if beta <= 2:
        raise ValueError("the lower-bound construction needs beta > 2")
    if mu <= 0 or M <= 0:
        raise ValueError("mu and M must be positive")
    t_min = lower_bound_threshold(mu, M, beta)
    if T < t_min:
        raise ValueError(f"T = {T:g} is below the required minimum T >= {t_min:.6g}")
    c = 2.0 * beta / M
    alpha = T**-0.5
    theta = c * T ** (-1.0 / (2 * beta))

    def make(sign):
        def f(x):
            return 2.0 * mu * x * x + sign * alpha * bump(x / theta)

        def df(x):
            y = x / theta
            return 4.0 * mu * x + sign * alpha / theta * (1.0 - y * y) / (1.0 + y * y) ** 2

        def d2f(x):
            y = x / theta
            return 4.0 * mu + sign * alpha / theta**2 * 2.0 * y * (y * y - 3.0) / (1.0 + y * y) ** 3

        return Scalar1D(f, df, d2f, name=f"f{1 if sign > 0 else 2}")

    return LowerBoundPair(mu, M, beta, T, alpha, theta, make(1.0), make(-1.0))


def with_sigma(meta: ProblemMeta, sigma: float) -> ProblemMeta:
    return replace(meta, sigma=sigma)
