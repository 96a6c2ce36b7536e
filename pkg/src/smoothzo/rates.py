"""Log-log slope fits of median gap against horizon."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.15
MIN_POINTS = 4
MIN_DECADES = 1.5


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    N: list
    medians: list
    iqr: list  # (q25, q75) per grid point
    expected_exponent: float | None
    tolerance: float
    excluded: list

    @property
    def passed(self) -> bool | None:
        if self.expected_exponent is None:
            return None
        return abs(self.slope + self.expected_exponent) <= self.tolerance

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def loglog_slope(N, values) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` of ``log values`` on ``log N``."""
    x = np.log(np.asarray(N, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return slope, float(ym - slope * xm)


def fit_rate(summaries, expected_exponent: float | None = None,
             tolerance: float = DEFAULT_TOLERANCE, metric: str = "gap") -> RateFit:
    """Fit ``log(median metric)`` against ``log N``.

    ``summaries`` maps each horizon ``N`` to the per-seed values of the metric,
    either as a dict ``{N: [values]}`` or as a list of run-summary dicts with
    keys ``N`` and ``metric``.
    """
    groups = _group(summaries, metric)
    Ns, meds, iqrs, excluded = [], [], [], []
    for N in sorted(groups):
        vals = np.asarray(groups[N], dtype=float)
        med = float(np.median(vals))
        if not (med > 0 and math.isfinite(med)):
            log.warning("N=%d: median %s is not positive, excluded from the fit", N, med)
            excluded.append(N)
            continue
        q25, q75 = np.percentile(vals, [25, 75])
        Ns.append(int(N))
        meds.append(med)
        iqrs.append([float(q25), float(q75)])
    if len(Ns) < MIN_POINTS:
        raise FitError(f"need at least {MIN_POINTS} grid points with positive median, have {len(Ns)}")
    span = math.log10(Ns[-1] / Ns[0])
    if span < MIN_DECADES - 1e-12:
        raise FitError(f"grid spans {span:.2f} decades, need at least {MIN_DECADES}")
    slope, intercept = loglog_slope(Ns, meds)
    if not math.isfinite(slope):
        raise FitError("slope is not finite")
    return RateFit(slope, intercept, Ns, meds, iqrs, expected_exponent, tolerance, excluded)


def _group(summaries, metric: str) -> dict:
    if isinstance(summaries, dict):
        return {int(k): list(np.atleast_1d(v)) for k, v in summaries.items()}
    groups: dict = {}
    for s in summaries:
        groups.setdefault(int(s["N"]), []).append(s[metric])
    return groups
