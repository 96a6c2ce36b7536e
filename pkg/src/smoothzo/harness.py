"""Experiment runner: config ingestion, replicate orchestration and CSV/JSON output."""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .bounds import BoundError, bound_overlay, expected_exponent
from .geometry import ConstraintSet, RandomSource
from .kernels import build_kernel
from .optimizer import RunDivergence, RunTrace, run_online, run_stochastic
from .oracles import (
    LogisticSequence, NoiseModel, Oracle, ProblemMeta, RepeatedProblem, load_samples_csv,
    make_linear_sequence, make_logistic, make_quadratic, uniform_bound,
)
from .rates import DEFAULT_TOLERANCE, FitError, fit_rate
from .schedules import REGIMES, Schedule, ScheduleError

log = logging.getLogger(__name__)

SCHEMA = "smoothzo.summary/1"
OUTPUT_ENV = "SMOOTHZO_OUTPUT_DIR"
MIN_FIT_SEEDS = 5
TRACE_COLUMNS = ("n", "x", "gap", "regret_partial", "gamma", "delta", "queries")

# algorithm, oracle noise and loss-sequence streams for one seed
_ALG, _NOISE, _SEQ = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    problem: dict
    regime: str
    beta: int
    N_grid: list
    seeds: int
    base_seed: int = 0
    constraint: dict = field(default_factory=lambda: {"kind": "whole"})
    noise: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    mode: str | None = None
    x0: list | None = None
    metric: str | None = None
    fit: dict | None = None
    output_dir: str = "out"
    trace_stride: int = 1
    write_traces: bool = True
    reuse_prefix: bool = True
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        raw = copy.deepcopy(raw)
        try:
            seeds = raw.pop("seeds")
            out = raw.pop("output", {}) or {}
            cfg = cls(
                name=str(raw.pop("name", "experiment")),
                problem=raw.pop("problem"),
                regime=raw.pop("regime"),
                beta=int(raw.pop("beta")),
                N_grid=[int(n) for n in raw.pop("N_grid")],
                seeds=int(seeds["count"]) if isinstance(seeds, dict) else int(seeds),
                base_seed=int(seeds.get("base", 0)) if isinstance(seeds, dict) else 0,
                constraint=raw.pop("constraint", {"kind": "whole"}),
                noise=raw.pop("noise", {}) or {},
                schedule=raw.pop("schedule", {}) or {},
                mode=raw.pop("mode", None),
                x0=raw.pop("x0", None),
                metric=raw.pop("metric", None),
                fit=raw.pop("fit", None),
                output_dir=str(out.get("dir", "out")),
                trace_stride=int(out.get("trace_stride", 1)),
                write_traces=bool(out.get("traces", True)),
                reuse_prefix=bool(raw.pop("reuse_prefix", True)),
                workers=int(raw.pop("workers", 1)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = cls.from_dict(raw)
        base = Path(path).resolve().parent
        samples = cfg.problem.get("samples")
        if isinstance(samples, dict) and "file" in samples:
            samples["file"] = str(base / samples["file"])
        return cfg

    def validate(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}; choose from {sorted(REGIMES)}")
        if not self.N_grid or any(n < 1 for n in self.N_grid):
            raise ConfigError("N_grid must be a nonempty list of positive horizons")
        if any(b <= a for a, b in zip(self.N_grid, self.N_grid[1:])):
            raise ConfigError("N_grid must be strictly increasing")
        if self.seeds < 1:
            raise ConfigError("need at least one seed")
        if self.fit_enabled and self.seeds < MIN_FIT_SEEDS:
            raise ConfigError(f"slope fits need at least {MIN_FIT_SEEDS} seeds, got {self.seeds}")
        if self.trace_stride < 1 or self.workers < 1:
            raise ConfigError("trace_stride and workers must be >= 1")
        if self.metric not in (None, "gap", "gap_uniform", "gap_triangular", "avg_regret", "dist2"):
            raise ConfigError(f"unknown metric {self.metric!r}")

    @property
    def fit_enabled(self) -> bool:
        return self.fit is not None and self.fit is not False

    @property
    def online(self) -> bool:
        return self.problem.get("name") in ("logistic_online", "linear_online", "repeated")

    @property
    def default_metric(self) -> str:
        if self.metric:
            return self.metric
        if self.online or self.regime == "two_point_mbeta_zero":
            return "avg_regret"
        if self.regime == "asymptotic_strongly_convex":
            return "dist2"
        return "gap"

    def to_dict(self) -> dict:
        return {
            "name": self.name, "problem": self.problem, "regime": self.regime, "beta": self.beta,
            "N_grid": self.N_grid, "seeds": {"count": self.seeds, "base": self.base_seed},
            "constraint": self.constraint, "noise": self.noise, "schedule": self.schedule,
            "mode": self.mode, "x0": self.x0, "metric": self.default_metric, "fit": self.fit,
            "reuse_prefix": self.reuse_prefix,
            "output": {"trace_stride": self.trace_stride, "traces": self.write_traces},
        }


# --------------------------------------------------------------------------
# problem construction


def generate_samples(spec: dict, dim: int) -> np.ndarray:
    """Gaussian rows, optionally shifted, rescaled so the largest norm is ``max_norm``."""
    gen = np.random.default_rng(int(spec.get("seed", 0)))
    m = int(spec["generate"])
    a = gen.normal(size=(m, dim)) * float(spec.get("scale", 1.0))
    a = a + np.asarray(spec.get("shift", np.zeros(dim)), dtype=float)
    if "max_norm" in spec:
        a *= float(spec["max_norm"]) / np.linalg.norm(a, axis=1).max()
    return a


def resolve_samples(problem: dict) -> np.ndarray:
    spec = problem.get("samples")
    if spec is None:
        raise ConfigError("logistic problems need 'samples'")
    if isinstance(spec, dict):
        if "file" in spec:
            return load_samples_csv(spec["file"])
        if "generate" in spec:
            return generate_samples(spec, int(problem["dim"]))
        raise ConfigError("samples must be a list of rows, {file: ...} or {generate: ...}")
    return np.atleast_2d(np.asarray(spec, dtype=float))


def _noise(spec: dict, default: str) -> NoiseModel:
    try:
        return NoiseModel(spec.get("kind", default), float(spec.get("sigma", 0.0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_constraint(cfg: ExperimentConfig, dim: int) -> ConstraintSet:
    spec = dict(cfg.constraint or {"kind": "whole"})
    spec.setdefault("dim", dim)
    try:
        K = ConstraintSet.from_dict(spec, dim)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad constraint set: {exc}") from None
    if K.dim != dim:
        raise ConfigError(f"constraint set has dimension {K.dim}, problem has {dim}")
    return K


def build_problem(cfg: ExperimentConfig, seed: int, N: int) -> tuple[Oracle, ProblemMeta, ConstraintSet]:
    p = cfg.problem
    name = p.get("name")
    noise_rng = RandomSource(seed, _NOISE)
    try:
        dim = int(p["dim"]) if "dim" in p else None
        if name == "quadratic":
            K = build_constraint(cfg, dim)
            oracle, meta = make_quadratic(
                dim, p.get("A", 1.0), p.get("b"), cfg.beta, _noise(cfg.noise, "gaussian"), K,
                rng=noise_rng,
            )
        elif name in ("logistic", "logistic_online", "repeated"):
            samples = resolve_samples(p)
            K = build_constraint(cfg, samples.shape[1])
            oracle, meta = make_logistic(
                samples, "online" if name == "logistic_online" else "stochastic", cfg.beta,
                float(p.get("l2", 0.0)), _noise(cfg.noise, "data"), K, N=N, rng=noise_rng,
            )
            if name == "logistic_online":
                # per-seed loss sequence
                prob = LogisticSequence.random(samples, N, RandomSource(seed, _SEQ), float(p.get("l2", 0.0)))
                oracle = Oracle(prob, oracle.noise, noise_rng)
            elif name == "repeated":
                oracle = Oracle(RepeatedProblem(oracle.problem), oracle.noise, noise_rng)
        elif name == "linear_online":
            c = np.asarray(p["c"], dtype=float)
            K = build_constraint(cfg, c.size)
            oracle, meta = make_linear_sequence(c, N, K, noise_rng)
        else:
            raise ConfigError(f"unknown problem {name!r}")
    except KeyError as exc:
        raise ConfigError(f"problem spec is missing {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"problem {name}: {exc}") from None
    return oracle, meta, K


def build_schedule(cfg: ExperimentConfig, meta: ProblemMeta, K: ConstraintSet, N: int) -> Schedule:
    sch = cfg.schedule
    R = sch.get("R", K.diameter if K.bounded else None)
    strong = REGIMES[cfg.regime][3]
    if strong and not meta.mu > 0:
        raise ConfigError(
            f"regime {cfg.regime} requires a strongly convex objective (mu > 0); "
            f"this problem has mu = {meta.mu:g}"
        )
    mode = REGIMES[cfg.regime][0] or cfg.mode
    if mode == "two_point" and K.bounded:
        raise ConfigError(f"regime {cfg.regime} is a two-point method and requires K = R^d")
    if mode == "one_point" and not K.bounded:
        raise ConfigError(f"regime {cfg.regime} is a one-point method and requires a compact K")
    try:
        return Schedule(
            cfg.regime, cfg.beta, meta.dim, N=N, M_beta=meta.M_beta, M_2=meta.M_2, mu=meta.mu,
            R=R, M_3=meta.M_3, mode=cfg.mode, gamma0=sch.get("gamma0"), delta0=sch.get("delta0"),
        )
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# cells


def _cell_summary(trace: RunTrace) -> dict:
    s = trace.summary()
    s.pop("x_final")
    return s


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trace_csv(path: Path, trace: RunTrace, stride: int = 1) -> None:
    N = trace.N
    rows = np.arange(stride, N + 1, stride)
    if rows.size == 0 or rows[-1] != N:
        rows = np.append(rows, N)
    gaps = trace.gap_series(rows)
    regret = trace.regret_partial()[rows - 1]
    lines = [",".join(TRACE_COLUMNS)]
    for i, n in enumerate(rows):
        x = ";".join(_fmt(v) for v in trace.iterates[n])
        lines.append(",".join([
            str(int(n)), x, _fmt(gaps[i]), _fmt(regret[i]), _fmt(trace.gammas[n - 1]),
            _fmt(trace.deltas[n - 1]), str(int(trace.queries[n - 1])),
        ]))
    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prefix_trace(trace: RunTrace, N: int) -> RunTrace:
    """The trace a horizon-``N`` run would have produced (anytime schedules, fixed objective)."""
    return RunTrace(
        iterates=trace.iterates[:N + 1], xbar=trace.xbar[:N + 1], xhat=trace.xhat[:N + 1],
        gammas=trace.gammas[:N], deltas=trace.deltas[:N], queries=trace.queries[:N],
        losses=trace.losses[:N], comparator_losses=trace.comparator_losses[:N],
        f_star=trace.f_star, x_star=trace.x_star, mode=trace.mode, regime=trace.regime,
        averaging=trace.averaging, online=trace.online,
        stability=_prefix_stability(trace, N), objective=trace.objective,
    )


def _prefix_stability(trace: RunTrace, N: int) -> dict:
    thr = trace.stability.get("threshold")
    viol = np.zeros(N, bool) if thr is None else trace.gammas[:N] > thr
    return {
        "threshold": thr,
        "violated": bool(viol.any()),
        "violated_rounds": int(viol.sum()),
        "last_violated_round": int(np.nonzero(viol)[0][-1] + 1) if viol.any() else None,
    }


def _run_seed(cfg: ExperimentConfig, seed: int, horizons: list, out_dir: str | None):
    """Run one seed for the given horizons; returns ``[(N, cell_dict)]``."""
    results = []
    kernel = build_kernel(cfg.beta)
    shared = None
    for N in sorted(horizons, reverse=True):
        if shared is not None:
            trace = prefix_trace(shared, N)
        else:
            oracle, meta, K = build_problem(cfg, seed, N)
            sched = build_schedule(cfg, meta, K, N)
            x0 = None if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
            rng = RandomSource(seed, _ALG)
            try:
                if cfg.online:
                    trace = run_online(oracle, K, sched, kernel, N, rng, x0=x0)
                else:
                    trace = run_stochastic(oracle, K, sched, kernel, N, rng, x0=x0,
                                           f_star=meta.optimum_value, x_star=meta.optimum_point)
            except RunDivergence as exc:
                results.append((N, {"N": N, "seed": seed, "diverged": True, "diverged_at": exc.n,
                                    "stability_violated": exc.stability_violated}))
                continue
            if cfg.reuse_prefix and sched.anytime and not cfg.online:
                shared = trace
        cell = _cell_summary(trace)
        cell.update({"seed": seed, "diverged": False})
        if out_dir is not None and cfg.write_traces:
            write_trace_csv(Path(out_dir) / "traces" / f"N{N}_seed{seed}.csv", trace, cfg.trace_stride)
        results.append((N, cell))
    return results


def _seed_job(args):
    cfg_dict, seed, horizons, out_dir = args
    return _run_seed(ExperimentConfig.from_dict(cfg_dict), seed, horizons, out_dir)


# --------------------------------------------------------------------------
# experiment


@dataclass
class ExperimentResult:
    summary: dict
    summary_path: Path | None
    trace_paths: list
    diverged: bool

    @property
    def fit(self) -> dict | None:
        return self.summary.get("fit")


def _raw_config(cfg: ExperimentConfig) -> dict:
    raw = cfg.to_dict()
    raw["output"] = {"dir": cfg.output_dir, "trace_stride": cfg.trace_stride, "traces": cfg.write_traces}
    raw["workers"] = 1
    raw["metric"] = cfg.metric
    return raw


def run_experiment(cfg: ExperimentConfig | dict, output_dir: str | None = None,
                   write: bool = True) -> ExperimentResult:
    """Run every ``(N, seed)`` cell, reduce medians per ``N`` and write the summary JSON."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    out = output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir
    out_dir = str(Path(out) / cfg.name) if write else None
    seeds = [cfg.base_seed + i for i in range(cfg.seeds)]

    # reject incompatible configs before any work
    oracle, meta, K = build_problem(cfg, seeds[0], cfg.N_grid[-1])
    build_schedule(cfg, meta, K, cfg.N_grid[-1])

    jobs = [(_raw_config(cfg), s, list(cfg.N_grid), out_dir) for s in seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_seed_job, jobs))
    else:
        chunks = [_seed_job(j) for j in jobs]
    cells = sorted((c for chunk in chunks for _, c in chunk), key=lambda c: (c["N"], c["seed"]))

    metric = cfg.default_metric
    per_N = []
    for N in cfg.N_grid:
        group = [c for c in cells if c["N"] == N]
        ok = [c[metric] for c in group if not c["diverged"] and c.get(metric) is not None]
        entry = {
            "N": N,
            "seeds": len(group),
            "diverged": sum(c["diverged"] for c in group),
            "median": float(np.median(ok)) if ok else None,
            "q25": float(np.percentile(ok, 25)) if ok else None,
            "q75": float(np.percentile(ok, 75)) if ok else None,
            "stability_violated": any(c.get("stability", {}).get("violated", False) for c in group),
            "bound": _bound(cfg, meta, K, N, oracle.problem),
        }
        if metric != "avg_regret":
            regrets = [c["avg_regret"] for c in group if not c["diverged"]]
            entry["median_avg_regret"] = float(np.median(regrets)) if regrets else None
        per_N.append(entry)

    summary = {
        "schema": SCHEMA,
        "config": cfg.to_dict(),
        "meta": _jsonable(meta.to_dict()),
        "metric": metric,
        "expected_exponent": _expected(cfg),
        "reconstructed_schedule": REGIMES[cfg.regime][4],
        "per_N": per_N,
        "cells": cells,
        "fit": None,
    }
    if cfg.fit_enabled:
        summary["fit"] = _fit(cfg, cells, metric)
    diverged = any(c["diverged"] for c in cells)

    summary_path, trace_paths = None, []
    if write:
        summary_path = Path(out_dir) / "summary.json"
        _atomic_write(summary_path, dumps(summary))
        if cfg.write_traces:
            trace_paths = sorted((Path(out_dir) / "traces").glob("*.csv"))
    return ExperimentResult(summary, summary_path, trace_paths, diverged)


def _expected(cfg: ExperimentConfig) -> float | None:
    fit = cfg.fit if isinstance(cfg.fit, dict) else {}
    if fit.get("expected_exponent") is not None:
        return float(fit["expected_exponent"])
    return expected_exponent(cfg.regime, cfg.beta)


def _fit(cfg: ExperimentConfig, cells: list, metric: str) -> dict:
    fit_cfg = cfg.fit if isinstance(cfg.fit, dict) else {}
    groups = {}
    for c in cells:
        if not c["diverged"]:
            groups.setdefault(c["N"], []).append(c[metric])
    try:
        rf = fit_rate(groups, _expected(cfg), float(fit_cfg.get("tolerance", DEFAULT_TOLERANCE)))
    except FitError as exc:
        return {"error": str(exc), "passed": False}
    return rf.to_dict()


def _bound(cfg: ExperimentConfig, meta: ProblemMeta, K: ConstraintSet, N: int,
           problem) -> float | None:
    try:
        sched = build_schedule(cfg, meta, K, N)
        delta1 = float(sched.arrays(1 if sched.anytime else N)[1].max())
        C = uniform_bound(problem, K, delta1) if K.bounded else None
        x0 = cfg.x0 if cfg.x0 is not None else (K.enclosing_ball()[0] if K.bounded else None)
        return float(bound_overlay(
            cfg.regime, meta, N, R=sched.R, x0=x0, C=C, online=cfg.online,
            gamma0=sched.gamma0, delta0=sched.delta0, mode=sched.mode,
        ))
    except (BoundError, ConfigError, ValueError) as exc:
        log.debug("no bound for %s at N=%d: %s", cfg.regime, N, exc)
        return None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def dumps(summary: dict) -> str:
    return json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n"


def load_summary(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: unsupported summary schema {data.get('schema')!r}")
    return data
