"""Zeroth-order convex optimization with kernel-smoothed gradient estimates."""

__version__ = "0.1.0"

from .kernels import Kernel, build_kernel, kernel_moment, kernel_norm_bounds
from .geometry import ConstraintSet, RandomSource, project, sample_r, sample_sphere
from .oracles import NoiseModel, Oracle, ProblemMeta, make_logistic, make_quadratic, query
from .estimator import one_point_estimate, smoothed_value, two_point_estimate
from .schedules import Schedule, schedule_at
from .optimizer import RunTrace, averages, run_online, run_stochastic
from .bounds import bound_overlay
from .rates import RateFit, fit_rate
from .harness import ExperimentConfig, run_experiment
