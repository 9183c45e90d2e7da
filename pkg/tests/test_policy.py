import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from npbandit.core import BanditConfig, Observation, ValidationError
from npbandit.environments import FunctionEnvironment, Scenario, quadratic_joint
from npbandit.knn import default_k
from npbandit.metrics import cumulative_regret, top_arm_error
from npbandit.policy import (
    ActionSpace,
    JointPolicyState,
    PolicyState,
    WarmupIncompleteError,
    infinite_ucb_step,
    infinite_uniform_run,
    knn_ucb_scores,
    knn_ucb_step,
    run_infinite_ucb,
    run_knn_ucb,
    run_linucb,
    simulate_knn_ucb,
    ucb_width,
    uniform_sampling_run,
)


def constant_env(means, noise=0.0, dim=2, seed=0):
    means = np.asarray(means, dtype=float)
    return FunctionEnvironment(lambda X: np.tile(means, (len(X), 1)), len(means), dim, noise, seed)


def test_uniform_block_schedule():
    env = constant_env([0.5, 0.5], noise=1.0)
    state, _ = uniform_sampling_run(env, BanditConfig(2, 2, 10, warmup=1))
    assert state.trace.arms.tolist() == [0] * 5 + [1] * 5
    assert state.pull_counts().tolist() == [5, 5]
    assert state.histories[1].times.tolist() == [6, 7, 8, 9, 10]


def test_uniform_truncates_and_logs(caplog):
    env = constant_env([0.5, 0.5, 0.5])
    with caplog.at_level("WARNING"):
        state, _ = uniform_sampling_run(env, BanditConfig(3, 2, 11, warmup=1))
    assert len(state.trace) == 9
    assert "not divisible" in caplog.text


def test_uniform_needs_one_pull_per_arm():
    # M0 >= 1 and M0 * K <= T already rule out T < K at configuration time
    with pytest.raises(ValidationError):
        uniform_sampling_run(constant_env([0.5] * 4), BanditConfig(4, 2, 3, warmup=1))


def test_uniform_noiseless_separation():
    env = constant_env([1.0, 0.0])
    _, policy = uniform_sampling_run(env, BanditConfig(2, 2, 20, warmup=1))
    assert np.all(policy.choose(np.random.default_rng(0).random((200, 2))) == 0)


def test_uniform_policy_uses_default_k():
    env = Scenario("quintic", rng_seed=1)
    state, policy = uniform_sampling_run(env, BanditConfig(2, 2, 2000))
    assert policy.ks == [default_k(1000, 2)] * 2


def test_uniform_bullseye_error():
    env = Scenario("bullseye", rng_seed=0)
    _, policy = uniform_sampling_run(env, BanditConfig(2, 2, 20000))
    assert top_arm_error(policy, env, env.sample_test_contexts(10000)) <= 0.05


def test_width_oracle():
    cfg = BanditConfig(2, 2, 100, delta=0.1)
    assert ucb_width(2, cfg) == pytest.approx(oracles.UCB_WIDTH_N2, rel=1e-14)


@given(st.integers(1, 10**6), st.integers(1, 5), st.floats(0.01, 0.99), st.integers(1, 4))
@settings(max_examples=60)
def test_width_against_high_precision(n, K, delta, d):
    cfg = BanditConfig(K, d, 10**7, delta=delta, warmup=1)
    m = mpmath.mpf(max(n, 2))
    mpmath.mp.dps = 30
    expect = mpmath.sqrt(mpmath.log(m) * mpmath.log(m * K / mpmath.mpf(delta))) * mpmath.mpf(n) ** (-mpmath.mpf(1) / (2 + d))
    assert ucb_width(n, cfg) == pytest.approx(float(expect), rel=1e-12)


def _log_slope_negative(n, K, delta, d):
    # d/dn log width = (1/(2n)) (1/ln n + 1/ln(nK/delta)) - 1/((2+d) n)
    return 0.5 * (1 / math.log(n) + 1 / math.log(n * K / delta)) < 1 / (2 + d)


@pytest.mark.parametrize("K,delta,d", [(2, 0.1, 2), (2, 0.01, 1), (10, 0.05, 3)])
def test_width_monotone_where_log_slope_negative(K, delta, d):
    cfg = BanditConfig(K, d, 100, delta=delta, warmup=1)
    n0 = next(n for n in range(2, 10**4) if _log_slope_negative(n, K, delta, d))
    ns = np.unique(np.concatenate([np.arange(n0, n0 + 200), np.geomspace(n0, 10**6, 2000).astype(int)]))
    w = np.array([ucb_width(int(n), cfg) for n in ns])
    assert np.all(np.diff(w) < 0)


def test_width_not_monotone_from_eight_at_defaults():
    # the log factor dominates for small n when d = 2, K = 2, delta = 0.1
    cfg = BanditConfig(2, 2, 100)
    assert ucb_width(20, cfg) > ucb_width(8, cfg)
    assert ucb_width(22, cfg) < ucb_width(21, cfg)


def test_width_decreasing_from_eight_for_d1():
    cfg = BanditConfig(2, 1, 100, delta=0.01)
    w = [ucb_width(n, cfg) for n in range(8, 5000)]
    assert np.all(np.diff(w) < 0)


def test_width_linear_in_scale():
    cfg = BanditConfig(2, 2, 100)
    cfg2 = BanditConfig(2, 2, 100, width_scale=2.0)
    ns = np.unique(np.geomspace(1, 10**6, 500).astype(int))
    assert all(ucb_width(int(n), cfg2) == 2 * ucb_width(int(n), cfg) for n in ns)
    assert ucb_width(1, cfg) > 0 and math.isfinite(ucb_width(1, cfg))


def _state(K, histories, warmup=1):
    state = PolicyState(BanditConfig(K, 2, 1000, warmup=warmup))
    t = 0
    for arm, pts in enumerate(histories):
        for x, r in pts:
            t += 1
            state.histories[arm].append(Observation(x, r, t))
            state.indexes[arm].append(x, r)
    state.step = t
    return state


def test_step_single_arm():
    state = _state(1, [[([0.5, 0.5], 0.2)]])
    assert knn_ucb_step(state, [0.1, 0.9]) == 0


def test_step_identical_histories_tie_break():
    rng = np.random.default_rng(0)
    pts = [(x, float(r)) for x, r in zip(rng.random((8, 2)), rng.normal(size=8))]
    assert knn_ucb_step(_state(2, [pts, pts]), [0.4, 0.4]) == 0


def test_step_prefers_higher_rewards():
    x = np.array([0.5, 0.5])
    near = x + np.random.default_rng(1).normal(0, 0.01, (10, 2))
    state = _state(2, [[(p, 0.0) for p in near], [(p, 1.0) for p in near]])
    s = knn_ucb_scores(state, x)
    assert s[1] - s[0] == pytest.approx(1.0)
    assert knn_ucb_step(state, x) == 1


def test_step_does_not_mutate():
    state = _state(2, [[([0.1, 0.1], 0.0)], [([0.9, 0.9], 1.0)]])
    before = state.pull_counts().tolist()
    knn_ucb_step(state, [0.5, 0.5])
    assert state.pull_counts().tolist() == before and state.step == 2


def test_step_requires_warmup():
    state = _state(2, [[([0.1, 0.1], 0.0)], []], warmup=1)
    with pytest.raises(WarmupIncompleteError, match="warmup"):
        knn_ucb_step(state, [0.5, 0.5])


def test_argmax_invariant_to_shift():
    env = Scenario("smiley", rng_seed=2)
    trace, state = simulate_knn_ucb(env, BanditConfig(2, 2, 400, warmup=10))
    shifted = _state(2, [[(x, r + 3.0) for x, r in zip(h.contexts, h.rewards)] for h in state.histories],
                     warmup=10)
    for x in env.sample_test_contexts(50):
        assert knn_ucb_step(state, x) == knn_ucb_step(shifted, x)


def test_pure_warmup_horizon():
    env = Scenario("quintic", rng_seed=0)
    trace = run_knn_ucb(env, BanditConfig(2, 2, 50, warmup=25))
    assert trace.pull_counts(2).tolist() == [25, 25]
    assert trace.arms[:4].tolist() == [0, 1, 0, 1]


@pytest.mark.parametrize("kind", ["quintic", "bullseye"])
def test_conservation_and_warmup(kind):
    env = Scenario(kind, rng_seed=4)
    cfg = BanditConfig(2, 2, 700, warmup=20)
    trace, state = simulate_knn_ucb(env, cfg)
    assert state.pull_counts().sum() == 700 == trace.pull_counts(2).sum()
    assert np.bincount(trace.arms[:40], minlength=2).tolist() == [20, 20]


def test_determinism():
    cfg = BanditConfig(2, 2, 500, warmup=10, rng_seed=9)
    a = run_knn_ucb(Scenario("smiley", rng_seed=9), cfg)
    b = run_knn_ucb(Scenario("smiley", rng_seed=9), cfg)
    assert a == b


def test_noiseless_gap_stops_regret():
    env = constant_env([1.0, 0.5])
    cfg = BanditConfig(2, 2, 3000, warmup=5, width_scale=0.3)
    trace = run_knn_ucb(env, cfg)
    # arm 1 scores 0.5 + w(n1) against 1 + w(n0) > 1; once w(n1) < 0.5 it never wins again
    n_star = next(n for n in range(1, 10**5) if ucb_width(n, cfg) < 0.5)
    assert trace.pull_counts(2)[1] <= max(n_star, cfg.warmup)
    inst = trace.instantaneous_regret()
    last = np.flatnonzero(inst)[-1]
    assert inst[last + 1 :].sum() == 0 and last < 1000


def test_linucb_shares_contexts_with_knn():
    cfg = BanditConfig(2, 2, 300, warmup=5, rng_seed=3)
    a = run_knn_ucb(Scenario("bullseye", rng_seed=3), cfg)
    b = run_linucb(Scenario("bullseye", rng_seed=3), cfg)
    assert np.array_equal(a.contexts, b.contexts)


def test_action_space_validation():
    with pytest.raises(ValidationError):
        ActionSpace(1, 1.0, 0.0)
    with pytest.raises(ValidationError):
        ActionSpace(1, 0.0, 1.0, 0)


def test_single_candidate():
    env = quadratic_joint(rng_seed=0)
    space = ActionSpace(1, 0.0, 1.0, 1)
    policy = infinite_uniform_run(env, space, 200)
    assert all(policy(x)[0] == 0.5 for x in env.sample_test_contexts(20))
    state = JointPolicyState(space, 1, warmup=5)
    for x, a in zip(env.sample_contexts(5), space.sample(np.random.default_rng(0), 5)):
        state.record(x, a, 0.0)
    assert infinite_ucb_step(state, [0.3])[0] == 0.5


def test_joint_k_rule():
    assert default_k(4096, 1 + 1) == 64


def test_infinite_uniform_quadratic():
    env = quadratic_joint(rng_seed=0)
    policy = infinite_uniform_run(env, ActionSpace(1, 0.0, 1.0, 101), 20000)
    actions = np.array([policy(x)[0] for x in env.sample_test_contexts(200)])
    assert np.all(np.abs(actions - 0.5) <= 0.05)


def test_infinite_width_does_not_change_argmax():
    env = quadratic_joint(rng_seed=1)
    space = ActionSpace(1, 0.0, 1.0, 21)
    rng = np.random.default_rng(1)
    states = [JointPolicyState(space, 1, warmup=50, width_scale=s) for s in (1.0, 1e-9)]
    X, A = env.sample_contexts(300), space.sample(rng, 300)
    R = env.mean(X, A) + env.noise(300)
    for st_ in states:
        for x, a, r in zip(X, A, R):
            st_.record(x, a, r)
    for x in env.sample_test_contexts(30):
        assert infinite_ucb_step(states[0], x)[0] == infinite_ucb_step(states[1], x)[0]


def test_infinite_ucb_warmup():
    state = JointPolicyState(ActionSpace(), 1, warmup=3)
    with pytest.raises(WarmupIncompleteError):
        infinite_ucb_step(state, [0.2])


def test_infinite_ucb_short_run():
    env = quadratic_joint(rng_seed=2)
    trace, state = run_infinite_ucb(env, ActionSpace(1, 0.0, 1.0, 101), 1500, warmup=100)
    assert len(state.index) == 1500
    assert np.mean(np.abs(trace.arms[100:] - 0.5) <= 0.05) > 0.8
    assert cumulative_regret(trace).final >= 0
