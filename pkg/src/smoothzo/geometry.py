"""Constraint sets, Euclidean projection and the random draws used by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_BLOCK = 4096
_TINY = 2.0**-60


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Whole space, a Euclidean ball, or an axis-aligned box in R^d."""

    kind: str
    dim: int
    center: np.ndarray | None = None
    radius: float | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @classmethod
    def whole_space(cls, dim: int) -> "ConstraintSet":
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        return cls("whole", dim)

    @classmethod
    def ball(cls, center, radius: float) -> "ConstraintSet":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        c.setflags(write=False)
        return cls("ball", c.size, center=c, radius=float(radius))

    @classmethod
    def box(cls, lower, upper) -> "ConstraintSet":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs matching bounds with lower < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        return cls("box", lo.size, lower=lo, upper=hi)

    @property
    def bounded(self) -> bool:
        return self.kind != "whole"

    @property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        return math.inf

    def enclosing_ball(self) -> tuple[np.ndarray, float]:
        if self.kind == "ball":
            return self.center, self.radius
        if self.kind == "box":
            return 0.5 * (self.lower + self.upper), 0.5 * self.diameter
        raise ValueError("whole space has no enclosing ball")

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        if self.kind == "box":
            return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        return {"kind": "whole", "dim": self.dim}

    @classmethod
    def from_dict(cls, spec: dict, dim: int | None = None) -> "ConstraintSet":
        kind = spec.get("kind", "whole")
        if kind == "ball":
            center = spec.get("center")
            if center is None:
                center = np.zeros(dim if dim is not None else spec["dim"])
            return cls.ball(center, spec["radius"])
        if kind == "box":
            return cls.box(spec["lower"], spec["upper"])
        if kind == "whole":
            return cls.whole_space(spec.get("dim", dim))
        raise ValueError(f"unknown constraint set kind {kind!r}")


def project(K: ConstraintSet, x) -> np.ndarray:
    """Euclidean projection onto ``K``; identity on points already inside."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != K.dim:
        raise ValueError(f"point has dimension {x.shape[-1]}, set has {K.dim}")
    if K.kind == "ball":
        offset = x - K.center
        norm = np.linalg.norm(offset, axis=-1, keepdims=True)
        outside = norm > K.radius
        scaled = K.center + offset * (K.radius / np.where(outside, norm, 1.0))
        return np.where(outside, scaled, x)
    if K.kind == "box":
        return np.clip(x, K.lower, K.upper)
    return x


def point_projector(K: ConstraintSet):
    """Projection of a single 1-d point, specialised once for the inner loop."""
    if K.kind == "ball":
        c, rad = np.array(K.center), K.radius

        def proj(x):
            off = x - c
            nrm = math.sqrt(float(off @ off))
            return x if nrm <= rad else c + off * (rad / nrm)

        return proj
    if K.kind == "box":
        lo, hi = np.array(K.lower), np.array(K.upper)
        return lambda x: np.minimum(np.maximum(x, lo), hi)
    return lambda x: x


def contains(K: ConstraintSet, x, rtol: float = 1e-12) -> bool:
    return contains_dilated(K, x, 0.0, rtol)


def contains_dilated(K: ConstraintSet, x, delta: float, rtol: float = 1e-12) -> bool:
    """Whether ``x`` lies within distance ``delta`` of ``K``."""
    x = np.asarray(x, dtype=float)
    if K.kind == "whole":
        return True
    if K.kind == "ball":
        dist = float(np.linalg.norm(x - K.center)) - K.radius
        scale = K.radius
    else:
        dist = float(np.linalg.norm(x - np.clip(x, K.lower, K.upper)))
        scale = K.diameter
    return dist <= delta + rtol * max(1.0, scale)


class RandomSource:
    """Reproducible stream keyed by ``(seed, stream)`` on the counter-based Philox generator.

    Direction/radius draws come from one buffered block of uniforms so that
    each ``draw_pair`` consumes exactly ``1 + d`` uniforms, ``r`` first.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.Philox(key=[self.seed, self.stream]))
        self._buf = np.empty(0)
        self._gauss = np.empty(0)
        self._pos = 0

    def spawn(self, stream: int) -> "RandomSource":
        return RandomSource(self.seed, stream)

    def _take(self, count: int) -> int:
        # uniforms in (0, 1), drawn in fixed blocks; normal scores computed per block
        if self._pos + count > self._buf.size:
            block = self.generator.random(max(_BLOCK, count))
            block[block == 0.0] = _TINY
            self._buf = np.concatenate([self._buf[self._pos:], block])
            self._gauss = ndtri(self._buf)
            self._pos = 0
        start = self._pos
        self._pos += count
        return start

    def _uniforms(self, count: int) -> np.ndarray:
        start = self._take(count)
        return self._buf[start:start + count]

    def uniform(self) -> float:
        i = self._take(1)
        return float(self._buf[i])

    def sample_r(self) -> float:
        return 2.0 * self.uniform() - 1.0

    def sample_sphere(self, d: int) -> np.ndarray:
        while True:
            start = self._take(d)
            g = self._gauss[start:start + d]
            norm = math.sqrt(float(g @ g))
            if norm > 0.0:
                return g / norm

    def draw_pair(self, d: int) -> tuple[float, np.ndarray]:
        """One ``(r, u)`` draw: ``r`` uniform on [-1, 1], ``u`` uniform on the sphere."""
        r = self.sample_r()
        return r, self.sample_sphere(d)

    def normal(self) -> float:
        i = self._take(1)
        return float(self._gauss[i])

    def integers(self, high: int) -> int:
        return min(int(self.uniform() * high), high - 1)


def sample_sphere(rng: RandomSource, d: int) -> np.ndarray:
    return rng.sample_sphere(d)


def sample_r(rng: RandomSource) -> float:
    return rng.sample_r()


def sphere_batch(gen: np.random.Generator, n: int, d: int) -> np.ndarray:
    """``n`` independent uniform directions (vectorised, for Monte Carlo diagnostics)."""
    g = gen.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        g[bad] = gen.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / norms


def ball_batch(gen: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform points in the unit ball: direction times ``U^(1/d)``."""
    return sphere_batch(gen, n, d) * gen.random((n, 1)) ** (1.0 / d)
