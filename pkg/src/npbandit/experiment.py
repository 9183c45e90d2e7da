"""Experiment configuration, orchestration and reporting.

A run trains one method on one world for each seed and writes CSV reports
plus a JSON manifest. Every random stream derives from the seed, so two
methods run with the same seed see the same contexts and noise.
"""

from __future__ import annotations

import json
import logging
import math
import os
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from .core import BanditConfig, ValidationError
from .environments import (
    SCENARIOS,
    Scenario,
    find_mnist,
    linear_environment,
    load_idx_dataset,
)
from .metrics import (
    cumulative_regret,
    epsilon_optimality_gap,
    regret_exponent,
    test_regret,
    top_arm_error,
    write_metric_rows,
)
from .policy import (
    RidgePolicy,
    fit_ridge_policy,
    simulate_knn_ucb,
    simulate_linucb,
    uniform_sampling_run,
)
from .topology import hausdorff_distance, match_components, recover_regions

log = logging.getLogger(__name__)

METHODS = ("knn-uniform", "knn-ucb", "ridge-uniform", "linucb")
WORLDS = SCENARIOS + ("linear",)
OUTPUT_ENV = "NPBANDIT_OUTPUT_DIR"


class DataError(RuntimeError):
    """Dataset missing or unreadable, or output directory unwritable."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run's outputs.

    Exactly one of ``scenario`` (a simulated world) and ``dataset`` (a
    directory holding IDX image/label files) is set.
    """

    scenario: Optional[str] = None
    dataset: Optional[str] = None
    method: str = "knn-ucb"
    T: int = 10000
    warmup: int = 25
    width_scale: float = 1.0
    delta: float = 0.1
    intrinsic_dim: Optional[int] = None
    k: Optional[int] = None
    R: Optional[float] = None
    l2_alpha: float = 1.0
    confidence: float = 0.1
    noise_sigma: float = 0.5
    ambient_dim: int = 10
    subset: int = 10000
    test_size: int = 10000
    seeds: tuple = (0,)
    out_dir: str = ""
    workers: int = 1

    def __post_init__(self):
        if (self.scenario is None) == (self.dataset is None):
            raise ValidationError("set exactly one of scenario and dataset")
        if self.scenario is not None and self.scenario not in WORLDS:
            raise ValidationError(f"unknown scenario {self.scenario!r}; choose from {', '.join(WORLDS)}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValidationError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be distinct")
        if self.k is not None and self.k < 1:
            raise ValidationError("k must be positive")
        if self.R is not None and not self.R > 0:
            raise ValidationError("R must be positive")
        if self.test_size < 1 or self.subset < 1 or self.workers < 1:
            raise ValidationError("test_size, subset and workers must be positive")
        if not self.out_dir:
            object.__setattr__(self, "out_dir", os.environ.get(OUTPUT_ENV, "runs"))
        if self.intrinsic_dim is None and self.scenario is not None:
            object.__setattr__(self, "intrinsic_dim", self.context_dim)
        # Surface BanditConfig errors at parse time (dims are checked per run).
        self.bandit_config(0, 1, self.intrinsic_dim or 1)

    @property
    def context_dim(self) -> Optional[int]:
        """Ambient dimension of the selected scenario (``None`` for datasets)."""
        if self.scenario is None:
            return None
        return self.ambient_dim if self.scenario == "manifold-curve" else 2

    @property
    def world(self) -> str:
        return self.scenario if self.scenario is not None else f"dataset:{Path(self.dataset).name}"

    def bandit_config(self, seed: int, num_arms: int, dim: int) -> BanditConfig:
        return BanditConfig(
            num_arms=num_arms,
            context_dim=dim,
            horizon=self.T,
            intrinsic_dim=self.intrinsic_dim,
            warmup=self.warmup,
            width_scale=self.width_scale,
            delta=self.delta,
            rng_seed=seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


# -- config parsing ------------------------------------------------------------


def _coerce(name: str, text: str):
    """Parse a config-file string into the type of field ``name``."""
    text = text.strip()
    if name == "seeds":
        return tuple(int(s) for s in text.replace(",", " ").split())
    if text.lower() in ("", "none"):
        return None
    if name in ("T", "warmup", "intrinsic_dim", "k", "ambient_dim", "subset", "test_size", "workers"):
        return int(text)
    if name in ("width_scale", "delta", "R", "l2_alpha", "confidence", "noise_sigma"):
        return float(text)
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def build_config(file_values: Optional[dict] = None, **flags) -> ExperimentConfig:
    """Defaults, then config-file values, then flags (``None`` flags are unset)."""
    values = dict(file_values or {})
    values.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig.from_dict(values)


# -- worlds --------------------------------------------------------------------

_DATASETS: dict = {}


def make_world(config: ExperimentConfig, seed: int):
    if config.scenario == "linear":
        return linear_environment(config.noise_sigma, seed)
    if config.scenario is not None:
        return Scenario(config.scenario, config.noise_sigma, seed, ambient_dim=config.ambient_dim)
    key = str(Path(config.dataset).resolve())
    if key not in _DATASETS:
        found = find_mnist(config.dataset)
        if found is None:
            raise DataError(
                f"no train-images-idx3-ubyte[.gz]/train-labels-idx1-ubyte[.gz] pair in {config.dataset}; "
                "run `npbandit dataset fetch` first"
            )
        _DATASETS[key] = load_idx_dataset(*found)
    return _DATASETS[key].subset(config.subset, seed)


# -- single runs ---------------------------------------------------------------


@dataclass
class RunResult:
    seed: int
    trace: object
    policy: object
    env: object
    metrics: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)


def _train(config: ExperimentConfig, env, seed: int):
    bc = config.bandit_config(seed, env.num_arms, env.dim)
    if config.method in ("knn-uniform", "ridge-uniform"):
        state, policy = uniform_sampling_run(env, bc, config.k)
        if config.method == "ridge-uniform":
            policy = fit_ridge_policy(state, config.l2_alpha)
        trace = state.trace
        trace.meta["method"] = config.method
    elif config.method == "knn-ucb":
        trace, state = simulate_knn_ucb(env, bc, config.k)
        policy = state.knn_policy()
    else:
        trace, models = simulate_linucb(env, bc, config.l2_alpha, config.confidence)
        policy = RidgePolicy(models)
    return trace, policy


def exponent_checkpoints(T: int) -> list[int]:
    return [T // 8, T // 4, T // 2, T] if T >= 8 else [T]


def run_single(config: ExperimentConfig, seed: int) -> RunResult:
    env = make_world(config, seed)
    trace, policy = _train(config, env, seed)
    # Test contexts come from their own stream; drawing them after training
    # leaves the training streams untouched.
    X_test = env.sample_test_contexts(config.test_size)
    curve = cumulative_regret(trace)
    m = {
        "regret": curve.final,
        "average_regret": curve.final / len(trace),
        "top_arm_error": top_arm_error(policy, env, X_test),
        "epsilon_gap": epsilon_optimality_gap(policy, env, X_test),
        "test_regret": test_regret(policy, env, X_test),
    }
    if config.method in ("knn-ucb", "linucb"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            m["regret_exponent"] = regret_exponent(curve, exponent_checkpoints(len(trace)))
    result = RunResult(seed, trace, policy, env, m)
    if config.R is not None:
        _topology(config, result)
    return result


def _topology(config: ExperimentConfig, result: RunResult) -> None:
    env, R = result.env, config.R
    X = result.trace.contexts
    has_truth = isinstance(env, Scenario)
    for arm in range(env.num_arms):
        est = recover_regions(result.policy, X, arm, R)
        result.regions[arm] = est
        result.metrics[f"components_arm{arm}"] = len(est)
        if not has_truth:
            continue
        truth = env.component_samples(arm, R / 4)
        comps = est.component_points()
        matched = match_components(comps, [env.component_of(c, arm) for c in comps])
        worst = max(
            (hausdorff_distance(comps[q], truth[p]) for q, p in matched.items()), default=math.inf
        )
        result.metrics[f"true_components_arm{arm}"] = env.component_count(arm)
        result.metrics[f"hausdorff_arm{arm}"] = worst


def topology_recovered(result: RunResult, R: float) -> Optional[bool]:
    """Counts match truth for every arm and each matched Hausdorff distance is at most 2R.

    ``None`` when the world has no analytic regions.
    """
    m, arms = result.metrics, range(result.env.num_arms)
    if not all(f"true_components_arm{a}" in m for a in arms):
        return None
    return all(
        m[f"components_arm{a}"] == m[f"true_components_arm{a}"] and m[f"hausdorff_arm{a}"] <= 2 * R
        for a in arms
    )


def _run_seed(args) -> RunResult:
    config, seed = args
    return run_single(config, seed)


def run_seeds(config: ExperimentConfig) -> list[RunResult]:
    """One run per seed, in a process pool when ``workers > 1``; ordered by seed list."""
    jobs = [(config, s) for s in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(config.workers, len(jobs))) as pool:
            return list(pool.map(_run_seed, jobs))
    return [_run_seed(j) for j in jobs]


# -- reports -------------------------------------------------------------------


def versions() -> dict:
    def ver(name):
        try:
            return metadata.version(name)
        except metadata.PackageNotFoundError:
            return "unknown"

    return {
        "artifact": ver("artifact"),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _prepare_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"output directory {out} is not writable: {exc}") from None
    return out


def _suffix(config: ExperimentConfig, seed: int) -> str:
    return "" if len(config.seeds) == 1 else f"_seed{seed}"


def metric_rows(config: ExperimentConfig, results: list[RunResult], method: Optional[str] = None):
    method = method or config.method
    for r in results:
        for name, value in r.metrics.items():
            yield (name, config.world, method, len(r.trace), value, r.seed)


def write_manifest(path, config: ExperimentConfig, extra: Optional[dict] = None) -> None:
    doc = {"config": config.to_dict(), "seeds": list(config.seeds), "versions": versions()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from None
    if "config" not in doc:
        raise ValidationError(f"{path} has no config section")
    return ExperimentConfig.from_dict(doc["config"])


def run(config: ExperimentConfig) -> list[RunResult]:
    """Run every seed and write the reports into ``config.out_dir``.

    Files: ``trace.csv``, ``regret_curve.csv`` (one per seed, suffixed
    ``_seed<s>`` when there are several), ``metrics.csv``,
    ``manifest.json`` and, when ``R`` is set, ``regions_arm<i>.csv``.
    """
    out = _prepare_dir(config.out_dir)
    results = run_seeds(config)
    for r in results:
        sfx = _suffix(config, r.seed)
        r.trace.write_csv(out / f"trace{sfx}.csv")
        cumulative_regret(r.trace).write_csv(out / f"regret_curve{sfx}.csv")
        for arm, est in r.regions.items():
            est.write_csv(out / f"regions_arm{arm}{sfx}.csv")
    write_metric_rows(out / "metrics.csv", metric_rows(config, results))
    write_manifest(out / "manifest.json", config)
    return results


# -- comparisons ---------------------------------------------------------------


@dataclass
class Comparison:
    config_a: ExperimentConfig
    config_b: ExperimentConfig
    results_a: list
    results_b: list

    def per_seed(self, metric: str = "regret") -> list[tuple[int, float, float, str]]:
        """``(seed, a, b, outcome)`` with outcome win/loss/tie from A's side (lower is better)."""
        rows = []
        for ra, rb in zip(self.results_a, self.results_b):
            a, b = ra.metrics[metric], rb.metrics[metric]
            outcome = "win" if a < b else "loss" if a > b else "tie"
            rows.append((ra.seed, a, b, outcome))
        return rows

    def tally(self, metric: str = "regret") -> dict:
        outcomes = [o for *_, o in self.per_seed(metric)]
        return {k: outcomes.count(k) for k in ("win", "loss", "tie")}


def _check_comparable(a: ExperimentConfig, b: ExperimentConfig) -> None:
    for name in ("scenario", "dataset", "T", "seeds", "noise_sigma", "ambient_dim", "subset", "test_size"):
        if getattr(a, name) != getattr(b, name):
            raise ValidationError(
                f"configs differ in {name}: {getattr(a, name)!r} vs {getattr(b, name)!r}"
            )


def compare(config_a: ExperimentConfig, config_b: ExperimentConfig, write: bool = True) -> Comparison:
    """Run both configs on identical context and noise streams.

    Writes ``comparison.csv`` (metric rows for both methods plus per-seed
    outcomes on regret) and ``manifest.json`` into ``config_a.out_dir``.
    """
    _check_comparable(config_a, config_b)
    cmp = Comparison(config_a, config_b, run_seeds(config_a), run_seeds(config_b))
    if write:
        out = _prepare_dir(config_a.out_dir)
        label_a, label_b = f"A:{config_a.method}", f"B:{config_b.method}"
        rows = list(metric_rows(config_a, cmp.results_a, label_a))
        rows += list(metric_rows(config_b, cmp.results_b, label_b))
        for seed, a, b, outcome in cmp.per_seed():
            rows.append((f"regret_{outcome}", config_a.world, f"{label_a} vs {label_b}", config_a.T, a - b, seed))
        write_metric_rows(out / "comparison.csv", rows)
        write_manifest(out / "manifest.json", config_a, {"compare_with": config_b.to_dict()})
    return cmp


def topology_config(config: ExperimentConfig) -> ExperimentConfig:
    """Topology runs always train by uniform sampling and need ``R``."""
    if config.R is None:
        raise ValidationError("topology needs R")
    return replace(config, method="knn-uniform")
