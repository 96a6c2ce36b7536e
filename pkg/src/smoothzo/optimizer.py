"""Projected stochastic-gradient loops driven by zeroth-order gradient estimates.

Each round ``n = 1..N`` draws ``(r, u)``, forms an estimate ``g_n`` at
``x_{n-1}`` and steps ``x_n = proj_K(x_{n-1} - gamma_n g_n)``.  Loss values
used for gaps and regret come from a noiseless side channel after the run,
so measurement never consumes oracle queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimator import one_point_estimate, two_point_estimate
from .geometry import ConstraintSet, RandomSource, point_projector
from .kernels import Kernel
from .oracles import Oracle, minimize_offline
from .schedules import Schedule

DIVERGENCE_NORM = 1e12

ESTIMATORS = {"one_point": one_point_estimate, "two_point": two_point_estimate}
QUERIES = {"one_point": 1, "two_point": 2}


class RunDivergence(RuntimeError):
    def __init__(self, n: int, norm: float, stability_violated: bool):
        self.n, self.norm, self.stability_violated = n, norm, stability_violated
        hint = " (step size above the stability threshold)" if stability_violated else ""
        super().__init__(f"iterate norm {norm:.3g} exceeded {DIVERGENCE_NORM:g} at round {n}{hint}")


@dataclass
class RunTrace:
    """Iterates ``x_0..x_N`` with running averages and noiseless accounting."""

    iterates: np.ndarray  # (N+1, d)
    xbar: np.ndarray  # xbar[n] = uniform mean of x_0..x_n
    xhat: np.ndarray  # xhat[n] = (k+1)-weighted mean of x_0..x_n
    gammas: np.ndarray
    deltas: np.ndarray
    queries: np.ndarray  # cumulative oracle queries after round n
    losses: np.ndarray  # f_n(x_{n-1}), noiseless
    comparator_losses: np.ndarray  # f_n(x_cmp)
    f_star: float
    x_star: np.ndarray | None
    mode: str
    regime: str
    averaging: str
    online: bool
    stability: dict = field(default_factory=dict)
    objective: Callable | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.gammas.size

    def averages(self) -> tuple[np.ndarray, np.ndarray]:
        return averages(self)

    def average_at(self, n: int) -> np.ndarray:
        """The regime's averaged iterate over ``x_0..x_{n-1}``."""
        src = self.xhat if self.averaging == "triangular" else self.xbar
        return src[n - 1]

    @property
    def gap_uniform(self) -> float:
        return float(self.objective(self.xbar[-2])) - self.f_star

    @property
    def gap_triangular(self) -> float:
        return float(self.objective(self.xhat[-2])) - self.f_star

    @property
    def gap(self) -> float:
        return self.gap_triangular if self.averaging == "triangular" else self.gap_uniform

    @property
    def dist2(self) -> float | None:
        if self.x_star is None:
            return None
        e = self.iterates[-1] - self.x_star
        return float(e @ e)

    def regret_partial(self) -> np.ndarray:
        """``(1/n) sum_{k<=n} [f_k(x_{k-1}) - f_k(x_cmp)]`` for every ``n``."""
        n = np.arange(1, self.N + 1)
        return np.cumsum(self.losses - self.comparator_losses) / n

    @property
    def avg_regret(self) -> float:
        return float(np.mean(self.losses - self.comparator_losses))

    def gap_series(self, rows: np.ndarray | None = None) -> np.ndarray:
        rows = np.arange(1, self.N + 1) if rows is None else np.asarray(rows)
        src = self.xhat if self.averaging == "triangular" else self.xbar
        return np.asarray(self.objective(src[rows - 1]), dtype=float) - self.f_star

    def summary(self) -> dict:
        return {
            "N": self.N,
            "mode": self.mode,
            "regime": self.regime,
            "averaging": self.averaging,
            "online": self.online,
            "gap": self.gap,
            "gap_uniform": self.gap_uniform,
            "gap_triangular": self.gap_triangular,
            "dist2": self.dist2,
            "avg_regret": self.avg_regret,
            "queries": int(self.queries[-1]),
            "x_final": self.iterates[-1].tolist(),
            "stability": dict(self.stability),
        }


def averages(trace: RunTrace) -> tuple[np.ndarray, np.ndarray]:
    """``(xbar_{N-1}, xhat_{N-1})`` recomputed from the stored iterates ``x_0..x_{N-1}``."""
    X = trace.iterates[:-1]
    if X.shape[0] == 0:
        raise ValueError("empty trace")
    return uniform_average(X), triangular_average(X)


def uniform_average(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.mean(axis=0)


def triangular_weights(n: int) -> np.ndarray:
    """Weights ``2(k+1) / (n(n+1))``, ``k = 0..n-1``."""
    k = np.arange(1, n + 1, dtype=float)
    return 2.0 * k / (n * (n + 1.0))


def triangular_average(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return triangular_weights(X.shape[0]) @ X


def _check_mode(mode: str, K: ConstraintSet, schedule: Schedule):
    if mode not in ESTIMATORS:
        raise ValueError(f"unknown mode {mode!r}")
    if schedule.mode != mode:
        raise ValueError(f"schedule {schedule.regime} is for {schedule.mode}, not {mode}")
    if mode == "two_point" and K.bounded:
        raise ValueError("the two-point method runs unconstrained; use a whole-space K")
    if mode == "one_point" and not K.bounded:
        raise ValueError("the one-point method needs a compact K")


def _run(oracle: Oracle, K: ConstraintSet, schedule: Schedule, kernel: Kernel, N: int,
         rng: RandomSource, mode: str, x0, estimator, online: bool,
         f_star: float | None, x_star) -> RunTrace:
    _check_mode(mode, K, schedule)
    if N < 1:
        raise ValueError("N must be >= 1")
    if kernel.beta != schedule.beta:
        raise ValueError(f"kernel order {kernel.beta} does not match schedule beta {schedule.beta}")
    problem = oracle.problem
    d = problem.dim
    if K.dim != d:
        raise ValueError(f"K has dimension {K.dim}, problem has {d}")
    gammas, deltas = schedule.arrays(N)
    if not (np.all(gammas > 0) and np.all(deltas > 0)):
        raise ValueError("schedule produced a nonpositive step or radius")
    q = QUERIES[mode]
    oracle.reset()
    oracle.configure(q, (K, float(deltas.max())) if K.bounded else None)
    est_fn = estimator or ESTIMATORS[mode]
    proj = point_projector(K)

    thr = schedule.stability_threshold
    violated = np.zeros(N, bool) if thr is None else gammas > thr
    stability = {
        "threshold": thr,
        "violated": bool(violated.any()),
        "violated_rounds": int(violated.sum()),
        "last_violated_round": int(np.nonzero(violated)[0][-1] + 1) if violated.any() else None,
    }

    if x0 is None:
        x0 = K.enclosing_ball()[0] if K.bounded else np.zeros(d)
    x = proj(np.array(x0, dtype=float).reshape(d))
    X = np.empty((N + 1, d))
    Xbar = np.empty((N + 1, d))
    Xhat = np.empty((N + 1, d))
    queries = np.empty(N, dtype=np.int64)
    X[0] = Xbar[0] = Xhat[0] = x
    xbar, xhat = x.copy(), x.copy()
    gam_list, del_list = gammas.tolist(), deltas.tolist()
    for n in range(1, N + 1):
        g = est_fn(oracle, n, x, del_list[n - 1], kernel, rng).g
        x = proj(x - gam_list[n - 1] * g)
        nrm = math.sqrt(float(x @ x))
        if not nrm <= DIVERGENCE_NORM:
            stability["diverged_at"] = n
            raise RunDivergence(n, nrm, stability["violated"])
        X[n] = x
        xbar = xbar + (x - xbar) / (n + 1)
        xhat = xhat + (2.0 / (n + 2)) * (x - xhat)
        Xbar[n], Xhat[n] = xbar, xhat
        queries[n - 1] = oracle.count
    if oracle.count != q * N:
        raise RuntimeError(f"query accounting mismatch: {oracle.count} != {q * N}")

    rounds = np.arange(1, N + 1)
    losses = np.asarray(problem.value_at(rounds, X[:-1]), dtype=float)
    target = problem.average(N) if online else problem
    if x_star is None or f_star is None:
        x_star, f_star = minimize_offline(target, K)
    if online:
        cmp_losses = np.asarray(problem.value_at(rounds, np.broadcast_to(x_star, (N, d))), float)
    else:
        cmp_losses = np.full(N, float(f_star))
    return RunTrace(
        iterates=X, xbar=Xbar, xhat=Xhat, gammas=gammas, deltas=deltas, queries=queries,
        losses=losses, comparator_losses=cmp_losses, f_star=float(f_star),
        x_star=None if x_star is None else np.asarray(x_star, float),
        mode=mode, regime=schedule.regime, averaging=schedule.averaging, online=online,
        stability=stability, objective=target.value,
    )


def run_stochastic(oracle: Oracle, K: ConstraintSet, schedule: Schedule, kernel: Kernel, N: int,
                   rng: RandomSource, mode: str | None = None, x0=None, estimator=None,
                   f_star: float | None = None, x_star=None) -> RunTrace:
    """Zeroth-order projected SGD on a fixed objective ``f_n = f``."""
    if oracle.problem.online:
        raise ValueError("run_stochastic needs a fixed objective; use run_online")
    return _run(oracle, K, schedule, kernel, N, rng, mode or schedule.mode, x0, estimator,
                False, f_star, x_star)


def run_online(oracle: Oracle, K: ConstraintSet, schedule: Schedule, kernel: Kernel, N: int,
               rng: RandomSource, mode: str | None = None, x0=None, estimator=None) -> RunTrace:
    """Same loop against a loss sequence ``f_n``; regret is measured against the
    minimiser of ``(1/N) sum f_n`` over ``K``."""
    if not oracle.problem.online:
        raise ValueError("run_online needs an online problem (a loss sequence)")
    return _run(oracle, K, schedule, kernel, N, rng, mode or schedule.mode, x0, estimator,
                True, None, None)
