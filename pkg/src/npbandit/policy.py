"""Sampling strategies: block-uniform sampling, kNN-UCB, LinUCB and the
infinite-armed uniform and UCB variants.

All argmax operations break ties toward the lowest arm index or the first
candidate action.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .baselines import RidgeModel, linucb_scores, ridge_fit
from .core import ArmHistory, BanditConfig, ExperimentTrace, Observation, ValidationError, as_context, as_contexts
from .knn import SpatialIndex, default_k

log = logging.getLogger(__name__)


class WarmupIncompleteError(RuntimeError):
    pass


# -- frozen policies ---------------------------------------------------------


class KnnPolicy:
    """Context-to-arm map ``x -> argmax_i f_i(x)`` from per-arm k-NN estimates."""

    def __init__(self, indexes: Sequence[SpatialIndex], ks: Sequence[int]):
        self.indexes = list(indexes)
        self.ks = [int(k) for k in ks]
        for index in self.indexes:
            index.build()

    @property
    def num_arms(self) -> int:
        return len(self.indexes)

    def estimates(self, X) -> np.ndarray:
        X = as_contexts(X, self.indexes[0].dim)
        return np.column_stack([ix.regress_many(X, k) for ix, k in zip(self.indexes, self.ks)])

    def choose(self, X) -> np.ndarray:
        return np.argmax(self.estimates(X), axis=1)

    def __call__(self, x) -> int:
        return int(self.choose(as_context(x)[None, :])[0])


class RidgePolicy:
    def __init__(self, models: Sequence[RidgeModel]):
        self.models = list(models)

    @property
    def num_arms(self) -> int:
        return len(self.models)

    def estimates(self, X) -> np.ndarray:
        return np.column_stack([m.predict(X) for m in self.models])

    def choose(self, X) -> np.ndarray:
        return np.argmax(self.estimates(X), axis=1)

    def __call__(self, x) -> int:
        return int(self.choose(as_context(x)[None, :])[0])


# -- finite-armed state ------------------------------------------------------


@dataclass
class PolicyState:
    """Per-arm histories and k-NN indexes of a running policy."""

    config: BanditConfig
    histories: list = field(default_factory=list)
    indexes: list = field(default_factory=list)
    step: int = 0
    k_override: Optional[int] = None
    cumulative_regret: float = 0.0
    trace: Optional[ExperimentTrace] = None

    def __post_init__(self):
        K, D = self.config.num_arms, self.config.context_dim
        if not self.histories:
            self.histories = [ArmHistory(i, D) for i in range(K)]
        if not self.indexes:
            self.indexes = [SpatialIndex(D) for _ in range(K)]

    def record(self, arm: int, x, reward: float) -> None:
        self.step += 1
        self.histories[arm].append(Observation(x, float(reward), self.step))
        self.indexes[arm].append(x, reward)

    def pull_counts(self) -> np.ndarray:
        return np.array([len(h) for h in self.histories])

    def k_for(self, n: int) -> int:
        if self.k_override is not None:
            return min(self.k_override, n)
        return default_k(n, self.config.intrinsic_dim)

    def knn_policy(self) -> KnnPolicy:
        """Freeze the current histories into a greedy (zero-width) policy."""
        return KnnPolicy(self.indexes, [self.k_for(len(ix)) for ix in self.indexes])


def _empty_trace_arrays(T: int, D: int):
    return np.empty((T, D)), np.empty(T, dtype=np.int64), np.empty(T), np.empty(T), np.empty(T)


def uniform_sampling_run(env, config: BanditConfig, k: Optional[int] = None):
    """Pull arm ``i`` for the ``i``-th block of ``floor(T/K)`` consecutive steps.

    Returns ``(state, policy)``; ``state.trace`` holds every step and
    ``policy`` maps contexts to the arm with the largest k-NN estimate.
    """
    K, T = config.num_arms, config.horizon
    if T < K:
        raise ValidationError(f"horizon {T} is smaller than the number of arms {K}")
    per_arm = T // K
    if per_arm * K != T:
        log.warning("horizon %d is not divisible by %d arms; using %d steps", T, K, per_arm * K)
    T = per_arm * K
    X, M = env.draw(T)
    noise = np.asarray(env.noise(T), dtype=np.float64)
    arms = np.repeat(np.arange(K), per_arm)
    rows = np.arange(T)
    mean_chosen = M[rows, arms]
    rewards = mean_chosen + noise
    state = PolicyState(config, k_override=k)
    for i in range(K):
        block = slice(i * per_arm, (i + 1) * per_arm)
        h = state.histories[i]
        for t in range(block.start, block.stop):
            h.append(Observation(X[t], float(rewards[t]), t + 1))
        state.indexes[i].extend(X[block], rewards[block])
    state.step = T
    mean_best = M.max(axis=1)
    state.trace = ExperimentTrace(X, arms, rewards, mean_chosen, mean_best,
                                  {"method": "knn-uniform", "seed": config.rng_seed})
    state.cumulative_regret = float(np.cumsum(mean_best - mean_chosen)[-1])
    return state, state.knn_policy()


def fit_ridge_policy(state: PolicyState, l2_alpha: float = 1.0) -> RidgePolicy:
    return RidgePolicy([ridge_fit(h.contexts, h.rewards, l2_alpha) for h in state.histories])


def ucb_width(n: int, config: BanditConfig) -> float:
    """Exploration bonus after ``n`` pulls of an arm.

    ``M1 * sqrt(ln n' * ln(n' K / delta)) * n ** (-1 / (2 + d))`` with
    ``n' = max(n, 2)`` inside the logarithms only.
    """
    if n < 1:
        raise ValueError("n must be positive")
    m = max(n, 2)
    return (
        config.width_scale
        * math.sqrt(math.log(m) * math.log(m * config.num_arms / config.delta))
        * n ** (-1.0 / (2 + config.intrinsic_dim))
    )


def knn_ucb_scores(state: PolicyState, x) -> np.ndarray:
    cfg = state.config
    counts = state.pull_counts()
    if counts.min() < cfg.warmup:
        raise WarmupIncompleteError(
            f"every arm needs {cfg.warmup} warmup pulls before UCB steps (counts {counts.tolist()}); "
            "run the round-robin warmup first"
        )
    x = as_context(x, cfg.context_dim)
    return np.array(
        [
            state.indexes[i].regress(x, state.k_for(int(n))).value + ucb_width(int(n), cfg)
            for i, n in enumerate(counts)
        ]
    )


def knn_ucb_step(state: PolicyState, x) -> int:
    """Arm maximizing k-NN estimate plus width at ``x``; does not modify ``state``."""
    return int(np.argmax(knn_ucb_scores(state, x)))


def _run_loop(env, config: BanditConfig, choose, record, method: str):
    K, T, M0 = config.num_arms, config.horizon, config.warmup
    X, M = env.draw(T)
    noise = np.broadcast_to(np.asarray(env.noise(T), dtype=np.float64), (T,))
    contexts, arms, rewards, chosen, best = _empty_trace_arrays(T, X.shape[1])
    regret = 0.0
    for t in range(T):
        x = X[t]
        arm = t % K if t < M0 * K else choose(x)
        r = M[t, arm] + noise[t]
        record(arm, x, r)
        contexts[t], arms[t], rewards[t] = x, arm, r
        chosen[t], best[t] = M[t, arm], M[t].max()
        regret += best[t] - chosen[t]
    trace = ExperimentTrace(contexts, arms, rewards, chosen, best, {"method": method, "seed": config.rng_seed})
    return trace, regret


def simulate_knn_ucb(env, config: BanditConfig, k: Optional[int] = None):
    """Round-robin warmup of ``M0`` pulls per arm, then kNN-UCB. Returns ``(trace, state)``."""
    _check_env(env, config)
    state = PolicyState(config, k_override=k)
    trace, regret = _run_loop(env, config, lambda x: knn_ucb_step(state, x), state.record, "knn-ucb")
    state.trace, state.cumulative_regret = trace, regret
    return trace, state


def run_knn_ucb(env, config: BanditConfig, k: Optional[int] = None) -> ExperimentTrace:
    return simulate_knn_ucb(env, config, k)[0]


def simulate_linucb(env, config: BanditConfig, l2_alpha: float = 1.0, confidence: float = 0.1):
    """Disjoint LinUCB behind the same round-robin warmup as kNN-UCB.

    The warmup guarantees every arm's gram matrix is invertible even when
    ``l2_alpha`` is 0. Returns ``(trace, models)``.
    """
    _check_env(env, config)
    models = [RidgeModel(config.context_dim, l2_alpha) for _ in range(config.num_arms)]

    def choose(x):
        return int(np.argmax(linucb_scores(models, x[None, :], confidence)[0]))

    def record(arm, x, r):
        models[arm].update(x, r)

    trace, _ = _run_loop(env, config, choose, record, "linucb")
    return trace, models


def run_linucb(env, config: BanditConfig, l2_alpha: float = 1.0, confidence: float = 0.1) -> ExperimentTrace:
    return simulate_linucb(env, config, l2_alpha, confidence)[0]


def run_uniform_random(env, config: BanditConfig) -> ExperimentTrace:
    """Arms drawn uniformly at random (from the ``policy`` stream); a linear-regret reference."""
    from .core import derive_rng

    rng = derive_rng(config.rng_seed, "policy")
    T, K = config.horizon, config.num_arms
    X, M = env.draw(T)
    noise = np.broadcast_to(np.asarray(env.noise(T), dtype=np.float64), (T,))
    arms = rng.integers(0, K, size=T)
    rows = np.arange(T)
    chosen = M[rows, arms]
    return ExperimentTrace(X, arms, chosen + noise, chosen, M.max(axis=1), {"method": "uniform-random"})


def _check_env(env, config: BanditConfig) -> None:
    if env.num_arms != config.num_arms or env.dim != config.context_dim:
        raise ValidationError(
            f"environment has {env.num_arms} arms in {env.dim} dims, config says "
            f"{config.num_arms} arms in {config.context_dim} dims"
        )


# -- infinite-armed ----------------------------------------------------------


@dataclass(frozen=True)
class ActionSpace:
    """Box ``[lo, hi]^dim`` of actions, searched over a fixed candidate set.

    With ``dim == 1`` (or a ``candidate_count`` that is a perfect
    ``dim``-th power) the candidates are the cell centers of a uniform
    grid; otherwise a scrambled Sobol set with a fixed seed is used.
    """

    dim: int = 1
    lo: float = 0.0
    hi: float = 1.0
    candidate_count: int = 101

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("action dim must be positive")
        if not self.lo < self.hi:
            raise ValidationError("need lo < hi")
        if self.candidate_count < 1:
            raise ValidationError("candidate_count must be positive")

    def candidates(self) -> np.ndarray:
        m = round(self.candidate_count ** (1.0 / self.dim))
        if m**self.dim == self.candidate_count:
            g = (np.arange(m) + 0.5) / m
            grid = np.stack(np.meshgrid(*([g] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        else:
            grid = qmc.Sobol(self.dim, scramble=True, seed=0).random(self.candidate_count)
        return self.lo + (self.hi - self.lo) * grid

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))


class JointPolicy:
    """``x -> argmax_a f(x, a)`` over the candidate set, from one k-NN
    regressor on concatenated ``(x, a)`` points."""

    def __init__(self, index: SpatialIndex, k: int, action_space: ActionSpace, context_dim: int):
        self.index = index
        self.k = k
        self.action_space = action_space
        self.context_dim = context_dim
        self._cands = action_space.candidates()

    def estimates(self, x) -> np.ndarray:
        x = as_context(x, self.context_dim)
        pairs = np.hstack([np.broadcast_to(x, (len(self._cands), len(x))), self._cands])
        return self.index.regress_many(pairs, self.k)

    def __call__(self, x) -> np.ndarray:
        return self._cands[int(np.argmax(self.estimates(x)))]


def infinite_uniform_run(env, action_space: ActionSpace, T: int) -> JointPolicy:
    """Uniform actions for ``T`` steps, then one k-NN fit with ``k = default_k(T, D + D')``."""
    if T < 1:
        raise ValidationError("T must be positive")
    D, Da = env.dim, action_space.dim
    X = env.sample_contexts(T)
    A = env.sample_actions(action_space, T)
    rewards = env.mean(X, A) + env.noise(T)
    index = SpatialIndex(D + Da, np.hstack([X, A]), rewards).build()
    return JointPolicy(index, default_k(T, D + Da), action_space, D)


@dataclass
class JointPolicyState:
    action_space: ActionSpace
    context_dim: int
    warmup: int = 100
    width_scale: float = 1.0
    index: Optional[SpatialIndex] = None
    t: int = 0

    def __post_init__(self):
        if self.index is None:
            self.index = SpatialIndex(self.context_dim + self.action_space.dim)
        self._cands = self.action_space.candidates()

    @property
    def joint_dim(self) -> int:
        return self.context_dim + self.action_space.dim

    def width(self, t: int) -> float:
        return self.width_scale * t ** (-1.0 / (2 + self.joint_dim))

    def record(self, x, a, reward: float) -> None:
        self.index.append(np.concatenate([x, np.atleast_1d(a)]), reward)
        self.t += 1


def infinite_ucb_step(state: JointPolicyState, x) -> np.ndarray:
    """Candidate maximizing ``f(x, a) + M1 * t ** (-1 / (2 + D + D'))`` at round ``t``.

    The width depends only on the global round, so it cannot change the
    argmax; it is kept to mirror the decision rule exactly.
    """
    if state.t < state.warmup:
        raise WarmupIncompleteError(f"{state.warmup} uniform warmup pulls needed, have {state.t}")
    x = as_context(x, state.context_dim)
    n = len(state.index)
    k = default_k(n, state.joint_dim)
    cands = state._cands
    pairs = np.hstack([np.broadcast_to(x, (len(cands), len(x))), cands])
    scores = state.index.regress_many(pairs, k) + state.width(state.t + 1)
    return cands[int(np.argmax(scores))]


def run_infinite_ucb(env, action_space: ActionSpace, T: int, warmup: int = 100,
                     width_scale: float = 1.0):
    """Returns ``(trace, state)``; trace ``arms`` hold the chosen actions."""
    if not 1 <= warmup <= T:
        raise ValidationError("need 1 <= warmup <= T")
    state = JointPolicyState(action_space, env.dim, warmup, width_scale)
    X = env.sample_contexts(T)
    noise = np.broadcast_to(np.asarray(env.noise(T), dtype=np.float64), (T,))
    best = env.best(X)
    A = np.empty((T, action_space.dim))
    A[:warmup] = env.sample_actions(action_space, warmup)
    for t in range(T):
        if t >= warmup:
            A[t] = infinite_ucb_step(state, X[t])
        r = env.mean(X[t : t + 1], A[t : t + 1])[0] + noise[t]
        state.record(X[t], A[t], r)
    chosen = env.mean(X, A)
    rewards = chosen + noise
    arms = A[:, 0] if action_space.dim == 1 else A
    trace = ExperimentTrace(X, arms, rewards, chosen, np.maximum(best, chosen),
                            {"method": "infinite-ucb", "warmup": warmup})
    return trace, state
