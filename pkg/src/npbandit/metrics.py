"""Regret, top-arm error and epsilon-optimality."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ExperimentTrace, ValidationError, as_contexts

METRIC_HEADER = ("metric", "scenario", "method", "T", "value", "seed")


@dataclass(frozen=True)
class RegretCurve:
    t: np.ndarray
    regret: np.ndarray

    def __post_init__(self):
        if len(self.t) != len(self.regret):
            raise ValidationError("t and regret differ in length")
        if np.any(np.diff(self.regret) < 0):
            raise ValidationError("cumulative regret must be nondecreasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final(self) -> float:
        return float(self.regret[-1]) if len(self.regret) else 0.0

    def at(self, t: int) -> float:
        """Cumulative regret after step ``t`` (0 for ``t == 0``)."""
        if t == 0:
            return 0.0
        i = np.searchsorted(self.t, t)
        if i == len(self.t) or self.t[i] != t:
            raise KeyError(t)
        return float(self.regret[i])

    def checkpoints(self, ts: Iterable[int]) -> "RegretCurve":
        ts = np.asarray(list(ts), dtype=np.int64)
        return RegretCurve(ts, np.array([self.at(int(t)) for t in ts]))

    def write_csv(self, path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "cumulative_regret"])
            for i in range(len(self.t)):
                if (i + 1) % every == 0 or i == len(self.t) - 1:
                    w.writerow([int(self.t[i]), repr(float(self.regret[i]))])


def cumulative_regret(trace: ExperimentTrace) -> RegretCurve:
    """Running sum of ``mean_best - mean_chosen``; realized rewards are ignored."""
    if trace.mean_best is None or trace.mean_chosen is None:
        raise ValidationError("trace lacks true mean rewards")
    return RegretCurve(np.arange(1, len(trace) + 1), np.cumsum(trace.mean_best - trace.mean_chosen))


def _gaps(policy, scenario, test_contexts) -> np.ndarray:
    X = as_contexts(test_contexts)
    if len(X) == 0:
        raise ValidationError("test set is empty")
    M = scenario.mean_rewards(X)
    chosen = np.asarray(policy.choose(X), dtype=np.int64)
    return M.max(axis=1) - M[np.arange(len(X)), chosen]


def top_arm_error(policy, scenario, test_contexts) -> float:
    """Fraction of test contexts where the policy's arm is not a true top arm."""
    return float(np.mean(_gaps(policy, scenario, test_contexts) > 0))


def epsilon_optimality_gap(policy, scenario, test_contexts) -> float:
    """Largest true-mean shortfall of the policy's arm over the test contexts."""
    return float(_gaps(policy, scenario, test_contexts).max())


def test_regret(policy, scenario, test_contexts) -> float:
    """Average per-step regret of a frozen policy over held-out contexts."""
    return float(np.mean(_gaps(policy, scenario, test_contexts)))


test_regret.__test__ = False  # not a pytest test


def regret_exponent(curve: RegretCurve, checkpoints: Optional[Sequence[int]] = None) -> float:
    """Least-squares slope of log regret against log t.

    Checkpoints with zero regret are dropped; if none remain the slope is 0
    and a ``RuntimeWarning`` flags the fit as degenerate.
    """
    if checkpoints is not None:
        curve = curve.checkpoints(checkpoints)
    t = np.asarray(curve.t, dtype=np.float64)
    r = np.asarray(curve.regret, dtype=np.float64)
    keep = r > 0
    if keep.sum() < 2:
        warnings.warn("regret_exponent: fewer than two positive checkpoints; degenerate fit",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    if keep.sum() < 3:
        warnings.warn("regret_exponent: fewer than three positive checkpoints", RuntimeWarning, stacklevel=2)
    return float(np.polyfit(np.log(t[keep]), np.log(r[keep]), 1)[0])


def write_metric_rows(path, rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_HEADER)
        for metric, scenario, method, T, value, seed in rows:
            w.writerow([metric, scenario, method, int(T), repr(float(value)), int(seed)])


def read_metric_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
