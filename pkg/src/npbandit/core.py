"""Domain types shared by every other module: contexts, observations,
per-arm histories, bandit configuration and experiment traces."""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


class ValidationError(ValueError):
    """Raised when a value violates a domain invariant."""


def as_context(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate ``x`` as a context point and return it as a float64 vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"context must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ValidationError(f"context has dimension {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("context coordinates must be finite")
    return arr


def as_contexts(X, dim: Optional[int] = None) -> np.ndarray:
    """Validate a batch of contexts, returning an (n, D) float64 array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValidationError(f"contexts must be a 2-d array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValidationError(f"contexts have dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("context coordinates must be finite")
    return arr


@dataclass(frozen=True)
class Observation:
    context: np.ndarray
    reward: float
    time: int

    def __post_init__(self):
        object.__setattr__(self, "context", as_context(self.context))
        if not math.isfinite(self.reward):
            raise ValidationError("reward must be finite")
        if self.time < 0:
            raise ValidationError("time must be nonnegative")

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (
            self.reward == other.reward
            and self.time == other.time
            and np.array_equal(self.context, other.context)
        )

    def to_dict(self) -> dict:
        return {"context": self.context.tolist(), "reward": self.reward, "time": self.time}

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(np.asarray(d["context"], dtype=np.float64), float(d["reward"]), int(d["time"]))


class ArmHistory:
    """Append-only log of (context, reward, time) for one arm.

    Storage is a pair of growable arrays so the k-NN index can view the
    contexts without copying. ``len(history)`` is the arm's pull count.
    """

    def __init__(self, arm: int, dim: Optional[int] = None):
        if arm < 0:
            raise ValidationError("arm index must be nonnegative")
        self.arm = int(arm)
        self.dim = dim
        self._n = 0
        self._contexts = np.empty((0, dim or 0))
        self._rewards = np.empty(0)
        self._times = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return self._n

    @property
    def contexts(self) -> np.ndarray:
        return self._contexts[: self._n]

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards[: self._n]

    @property
    def times(self) -> np.ndarray:
        return self._times[: self._n]

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(self._contexts[i].copy(), float(self._rewards[i]), int(self._times[i]))
            for i in range(self._n)
        ]

    def _grow(self, need: int) -> None:
        cap = self._rewards.shape[0]
        if need <= cap:
            return
        new_cap = max(need, 2 * cap, 16)
        contexts = np.empty((new_cap, self.dim))
        contexts[: self._n] = self._contexts[: self._n]
        rewards = np.empty(new_cap)
        rewards[: self._n] = self._rewards[: self._n]
        times = np.empty(new_cap, dtype=np.int64)
        times[: self._n] = self._times[: self._n]
        self._contexts, self._rewards, self._times = contexts, rewards, times

    def append(self, obs: Observation) -> "ArmHistory":
        ctx = obs.context
        if self.dim is None:
            self.dim = ctx.size
            self._contexts = np.empty((0, self.dim))
        elif ctx.size != self.dim:
            raise ValidationError(
                f"observation context has dimension {ctx.size}, history has {self.dim}"
            )
        if self._n and obs.time <= self._times[self._n - 1]:
            raise ValidationError("observation times must be strictly increasing")
        self._grow(self._n + 1)
        self._contexts[self._n] = ctx
        self._rewards[self._n] = obs.reward
        self._times[self._n] = obs.time
        self._n += 1
        return self

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "dim": self.dim,
            "observations": [o.to_dict() for o in self.observations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmHistory":
        h = cls(d["arm"], d.get("dim"))
        for o in d["observations"]:
            h.append(Observation.from_dict(o))
        return h

    def __eq__(self, other):
        if not isinstance(other, ArmHistory):
            return NotImplemented
        return (
            self.arm == other.arm
            and self.dim == other.dim
            and np.array_equal(self.contexts, other.contexts)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.times, other.times)
        )


def append_observation(history: ArmHistory, obs: Observation) -> ArmHistory:
    return history.append(obs)


@dataclass(frozen=True)
class BanditConfig:
    num_arms: int
    context_dim: int
    horizon: int
    intrinsic_dim: Optional[int] = None
    warmup: int = 25
    width_scale: float = 1.0
    delta: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_arms < 1:
            raise ValidationError("num_arms must be positive")
        if self.context_dim < 1:
            raise ValidationError("context_dim must be positive")
        if self.intrinsic_dim is None:
            object.__setattr__(self, "intrinsic_dim", self.context_dim)
        if not 1 <= self.intrinsic_dim <= self.context_dim:
            raise ValidationError("intrinsic_dim must lie in [1, context_dim]")
        if self.warmup < 1:
            raise ValidationError("warmup must be positive")
        if self.horizon < 1:
            raise ValidationError("horizon must be positive")
        if self.warmup * self.num_arms > self.horizon:
            raise ValidationError(
                f"warmup*num_arms = {self.warmup * self.num_arms} exceeds horizon {self.horizon}"
            )
        if not self.width_scale > 0:
            raise ValidationError("width_scale must be positive")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if not -(2**63) <= self.rng_seed < 2**64:
            raise ValidationError("rng_seed must fit in 64 bits")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BanditConfig":
        return cls(**d)


@dataclass
class ExperimentTrace:
    """Time-ordered record of one run. Row ``i`` is step ``t = i + 1``."""

    contexts: np.ndarray
    arms: np.ndarray
    rewards: np.ndarray
    mean_chosen: np.ndarray
    mean_best: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.contexts = np.asarray(self.contexts, dtype=np.float64)
        if self.contexts.ndim == 1:
            self.contexts = self.contexts.reshape(-1, 1)
        self.arms = np.asarray(self.arms)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.mean_chosen = np.asarray(self.mean_chosen, dtype=np.float64)
        self.mean_best = np.asarray(self.mean_best, dtype=np.float64)
        n = len(self.rewards)
        for name in ("contexts", "arms", "mean_chosen", "mean_best"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"trace field {name!r} has length {len(getattr(self, name))}, expected {n}")
        if np.any(self.mean_best < self.mean_chosen):
            raise ValidationError("mean_best must dominate mean_chosen at every step")

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    def instantaneous_regret(self) -> np.ndarray:
        return self.mean_best - self.mean_chosen

    def pull_counts(self, num_arms: int) -> np.ndarray:
        return np.bincount(self.arms.astype(np.int64), minlength=num_arms)

    def slice(self, start: int, stop: int) -> "ExperimentTrace":
        return ExperimentTrace(
            self.contexts[start:stop],
            self.arms[start:stop],
            self.rewards[start:stop],
            self.mean_chosen[start:stop],
            self.mean_best[start:stop],
            dict(self.meta),
        )

    @classmethod
    def concatenate(cls, traces: Iterable["ExperimentTrace"]) -> "ExperimentTrace":
        traces = list(traces)
        return cls(
            np.concatenate([t.contexts for t in traces]),
            np.concatenate([t.arms for t in traces]),
            np.concatenate([t.rewards for t in traces]),
            np.concatenate([t.mean_chosen for t in traces]),
            np.concatenate([t.mean_best for t in traces]),
        )

    def __eq__(self, other):
        if not isinstance(other, ExperimentTrace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("contexts", "arms", "rewards", "mean_chosen", "mean_best")
        )

    def to_dict(self) -> dict:
        return {
            "contexts": self.contexts.tolist(),
            "arms": self.arms.tolist(),
            "rewards": self.rewards.tolist(),
            "mean_chosen": self.mean_chosen.tolist(),
            "mean_best": self.mean_best.tolist(),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentTrace":
        contexts = np.asarray(d["contexts"], dtype=np.float64)
        arms = d["arms"]
        return cls(
            contexts.reshape(len(arms), -1) if len(arms) else contexts.reshape(0, 1),
            np.asarray(arms),
            d["rewards"],
            d["mean_chosen"],
            d["mean_best"],
            dict(d.get("meta", {})),
        )

    # CSV: t,context_0..context_{D-1},arm,reward,mean_chosen,mean_best
    def header(self) -> list[str]:
        return ["t", *(f"context_{j}" for j in range(self.dim)), "arm", "reward", "mean_chosen", "mean_best"]

    def write_csv(self, path) -> None:
        arm_fmt = repr if self.arms.dtype.kind == "f" else str
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for i in range(len(self)):
                w.writerow(
                    [
                        i + 1,
                        *(repr(float(v)) for v in self.contexts[i]),
                        arm_fmt(self.arms[i].item()),
                        repr(float(self.rewards[i])),
                        repr(float(self.mean_chosen[i])),
                        repr(float(self.mean_best[i])),
                    ]
                )

    @classmethod
    def read_csv(cls, path) -> "ExperimentTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[0] != "t" or header[-4:] != ["arm", "reward", "mean_chosen", "mean_best"]:
            raise ValidationError(f"{Path(path).name}: not a trace file (header {header[:3]}...)")
        missing = {"mean_chosen", "mean_best"} - set(header)
        if missing:
            raise ValidationError(f"trace is missing mean fields {sorted(missing)}")
        dim = len(header) - 5
        data = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, dim + 5))
        arms = data[:, 1 + dim]
        if np.all(arms == np.round(arms)):
            arms = arms.astype(np.int64)
        return cls(data[:, 1 : 1 + dim], arms, data[:, 2 + dim], data[:, 3 + dim], data[:, 4 + dim])


def derive_rng(seed: int, component: str) -> np.random.Generator:
    """Independent stream for one component (contexts, noise, ...) of a run.

    Streams are keyed by ``(seed, component)`` through ``SeedSequence``
    spawn keys, so two methods run with the same seed see the same
    contexts and noise no matter how many draws each makes elsewhere.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(zlib.crc32(component.encode()),))
    return np.random.Generator(np.random.PCG64(ss))
