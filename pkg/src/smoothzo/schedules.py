"""Step-size / smoothing-radius schedules ``(gamma_n, delta_n)`` for each regime."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .oracles import ProblemMeta

# regime -> (estimator mode, averaging, needs horizon, strongly convex, reconstructed)
REGIMES: dict[str, tuple[str, str, bool, bool, bool]] = {
    "two_point_convex": ("two_point", "uniform", True, False, False),
    "anytime_two_point_convex": ("two_point", "uniform", False, False, False),
    "two_point_strongly_convex": ("two_point", "triangular", False, True, False),
    "one_point_convex": ("one_point", "uniform", False, False, False),
    "mbeta_unknown_one_point": ("one_point", "uniform", False, False, False),
    "one_point_strongly_convex": ("one_point", "uniform", False, True, False),
    "beta2_refined_two_point_convex": ("two_point", "uniform", True, False, True),
    "beta2_refined_two_point_strongly_convex": ("two_point", "uniform", False, True, True),
    "beta2_refined_one_point_convex": ("one_point", "uniform", False, False, True),
    "beta2_refined_one_point_strongly_convex": ("one_point", "uniform", False, True, True),
    "asymptotic_strongly_convex": (None, "uniform", True, True, True),
    "two_point_mbeta_zero": ("two_point", "uniform", True, False, True),
    "constant": (None, "uniform", False, False, False),
}

# regimes whose analysis needs gamma <= 1 / (24 d M_2^2 beta^2)
_STABILITY_CHECKED = {"two_point_convex", "anytime_two_point_convex", "two_point_strongly_convex"}


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class StepSizes:
    gamma: float
    delta: float
    threshold: float | None = None

    @property
    def violated(self) -> bool:
        return self.threshold is not None and self.gamma > self.threshold

    def __iter__(self):
        yield self.gamma
        yield self.delta


@dataclass(frozen=True)
class Schedule:
    regime: str
    beta: int
    d: int
    N: int | None = None
    M_beta: float | None = None
    M_2: float | None = None
    mu: float = 0.0
    R: float | None = None
    M_3: float | None = None
    mode: str | None = None
    gamma0: float | None = None
    delta0: float | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ScheduleError(f"unknown regime {self.regime!r}")
        base_mode, _, needs_n, strong, _ = REGIMES[self.regime]
        mode = self.mode or base_mode
        if mode not in ("one_point", "two_point"):
            raise ScheduleError(f"regime {self.regime} needs mode one_point or two_point")
        object.__setattr__(self, "mode", mode)
        if base_mode is not None and mode != base_mode:
            raise ScheduleError(f"regime {self.regime} is a {base_mode} method, not {mode}")
        if needs_n and not (self.N and self.N >= 1):
            raise ScheduleError(f"regime {self.regime} needs a horizon N")
        if strong and not self.mu > 0:
            raise ScheduleError(f"regime {self.regime} is for strongly convex f and needs mu > 0")
        if self.regime.startswith("beta2_refined") and self.beta != 2:
            raise ScheduleError("beta2_refined regimes are defined for beta = 2 only")
        self._check_constants()

    def _need(self, *names):
        for name in names:
            v = getattr(self, name)
            if v is None or not v > 0:
                raise ScheduleError(f"regime {self.regime} needs a positive {name}")

    def _check_constants(self):
        r = self.regime
        if r in ("two_point_convex", "anytime_two_point_convex"):
            self._need("M_beta", "M_2")
        elif r == "two_point_strongly_convex" or r == "one_point_strongly_convex":
            self._need("M_beta")
        elif r == "one_point_convex":
            self._need("M_beta", "R")
        elif r == "mbeta_unknown_one_point":
            self._need("R")
        elif r.startswith("beta2_refined"):
            self._need("M_2")
            if r == "beta2_refined_one_point_convex":
                self._need("R")
        elif r == "asymptotic_strongly_convex":
            self._need("M_beta")
        elif r == "constant":
            self._need("gamma0", "delta0")
        elif r == "two_point_mbeta_zero":
            if self.gamma0 is None:
                self._need("M_2")

    @classmethod
    def from_meta(cls, regime: str, meta: ProblemMeta, N: int | None = None,
                  R: float | None = None, **kw) -> "Schedule":
        return cls(regime, meta.beta, meta.dim, N=N, M_beta=meta.M_beta, M_2=meta.M_2,
                   mu=meta.mu, R=R, M_3=meta.M_3, **kw)

    @property
    def averaging(self) -> str:
        return REGIMES[self.regime][1]

    @property
    def anytime(self) -> bool:
        return not REGIMES[self.regime][2]

    @property
    def strongly_convex(self) -> bool:
        return REGIMES[self.regime][3]

    @property
    def reconstructed(self) -> bool:
        return REGIMES[self.regime][4]

    @property
    def stability_threshold(self) -> float | None:
        if self.regime not in _STABILITY_CHECKED:
            return None
        return 1.0 / (24.0 * self.d * self.M_2**2 * self.beta**2)

    def with_horizon(self, N: int) -> "Schedule":
        return replace(self, N=N)

    def at(self, n: int) -> StepSizes:
        return schedule_at(self, n)

    def arrays(self, N: int) -> tuple[np.ndarray, np.ndarray]:
        """``gamma_n`` and ``delta_n`` for ``n = 1..N``."""
        n = np.arange(1, N + 1, dtype=float)
        gam, dlt = _formula(self, n)
        return np.broadcast_to(gam, n.shape).copy(), np.broadcast_to(dlt, n.shape).copy()


def schedule_at(s: Schedule, n: int) -> StepSizes:
    if n < 1:
        raise ScheduleError("rounds are numbered from 1")
    if not s.anytime and s.N is not None and n > s.N:
        raise ScheduleError(f"round {n} beyond the horizon N = {s.N}")
    gam, dlt = _formula(s, float(n))
    return StepSizes(float(gam), float(dlt), s.stability_threshold)


def _formula(s: Schedule, n):
    b, d, r = s.beta, s.d, s.regime
    fact = math.factorial
    if r == "two_point_convex":
        N = float(s.N)
        gamma = 1.0 / (24.0 * d ** ((b - 1) / b) * s.M_2**2 * b**2 * N ** ((b + 1) / (2 * b)))
        delta = b * d ** (1.0 / b) / N ** (1.0 / (2 * b)) * (s.M_beta**b * s.M_2) ** (-1.0 / (b + 1))
        return gamma, delta
    if r == "anytime_two_point_convex":
        gamma = 1.0 / (24.0 * d * s.M_2**2 * b**2 * n ** ((b + 1) / (2 * b)))
        delta = b / n ** (1.0 / (2 * b)) * (s.M_beta**b * s.M_2) ** (-1.0 / (b + 1))
        return gamma, delta
    if r == "two_point_strongly_convex":
        return 1.0 / (s.mu * n), (d * d * fact(b) / (s.M_beta**b * s.mu * n)) ** (1.0 / (b + 1))
    if r == "one_point_convex":
        delta = (d * math.sqrt(b) * fact(b - 1) / (np.sqrt(n) * s.M_beta**b)) ** (1.0 / b)
        return s.R * delta / (b**1.5 * d * np.sqrt(n)), delta
    if r == "mbeta_unknown_one_point":
        delta = (d * s.R * math.sqrt(b) * fact(b - 1) / np.sqrt(n)) ** (1.0 / b)
        return s.R * delta / (b**1.5 * d * np.sqrt(n)), delta
    if r == "one_point_strongly_convex":
        return 1.0 / (n * s.mu), (d * d * b * fact(b) / (n * s.mu * s.M_beta**b)) ** (1.0 / (b + 1))
    if r == "beta2_refined_two_point_convex":
        N = float(s.N)
        gamma = 1.0 / (96.0 * d ** (2.0 / 3.0) * s.M_2**2 * N ** (2.0 / 3.0))
        return gamma, (d * d / N) ** (1.0 / 6.0) / s.M_2
    if r in ("beta2_refined_two_point_strongly_convex", "beta2_refined_one_point_strongly_convex"):
        return 1.0 / (s.mu * n), (4.0 * d * d / (n * s.mu * s.M_2**2)) ** 0.25
    if r == "beta2_refined_one_point_convex":
        delta = (d * s.R / (s.M_2**2 * np.sqrt(n))) ** (1.0 / 3.0)
        return s.R * delta / (2.0**1.5 * d * np.sqrt(n)), delta
    if r == "asymptotic_strongly_convex":
        N = float(s.N)
        if s.mode == "one_point":
            base = (d * d * b * fact(b) / (N * s.mu * s.M_beta**b)) ** (1.0 / (b + 1))
        else:
            base = (d * d * fact(b) / (s.M_beta**b * s.mu * N)) ** (1.0 / (b + 1))
        cap = math.inf
        if s.M_3:
            cap = 16.0 * s.mu / (d * b * b * s.M_3**3)
        return 1.0 / (s.mu * n), min(base, cap)
    if r == "two_point_mbeta_zero":
        gamma0 = s.gamma0 if s.gamma0 is not None else 1.0 / (24.0 * d * s.M_2**2 * b**2)
        return gamma0 / math.sqrt(s.N), (s.delta0 if s.delta0 is not None else 1.0)
    if r == "constant":
        return s.gamma0, s.delta0
    raise ScheduleError(f"no formula for {r}")  # pragma: no cover
