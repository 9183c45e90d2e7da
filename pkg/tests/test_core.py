import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npbandit.core import (
    ArmHistory,
    BanditConfig,
    ExperimentTrace,
    Observation,
    ValidationError,
    append_observation,
    as_context,
    derive_rng,
)
from npbandit.environments import Scenario
from npbandit.metrics import cumulative_regret
from npbandit.policy import simulate_knn_ucb

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_append_to_empty_history():
    h = ArmHistory(0)
    append_observation(h, Observation([0.1, 0.2], 1.0, 0))
    assert len(h) == 1


def test_append_keeps_order():
    h = ArmHistory(1, 2)
    for t in range(5):
        h.append(Observation([t, t], float(t), t))
    obs = Observation([9.0, 9.0], -1.0, 7)
    append_observation(h, obs)
    assert len(h) == 6
    assert h.observations[-1] == obs
    assert h.times.tolist() == [0, 1, 2, 3, 4, 7]


def test_append_dimension_mismatch():
    h = ArmHistory(0, 2)
    h.append(Observation([0.0, 0.0], 0.0, 1))
    with pytest.raises(ValidationError, match="dimension"):
        h.append(Observation([0.0, 0.0, 0.0], 0.0, 2))


def test_time_must_increase():
    h = ArmHistory(0, 1)
    h.append(Observation([0.0], 0.0, 3))
    with pytest.raises(ValidationError):
        h.append(Observation([0.0], 0.0, 3))


@pytest.mark.parametrize("bad", [[np.nan], [1.0, np.inf], [], [[1.0]]])
def test_context_validation(bad):
    with pytest.raises(ValidationError):
        as_context(bad)


def test_reward_must_be_finite():
    with pytest.raises(ValidationError):
        Observation([0.0], float("nan"), 0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_arms=2, context_dim=2, horizon=100, intrinsic_dim=3),
        dict(num_arms=2, context_dim=2, horizon=100, intrinsic_dim=0),
        dict(num_arms=2, context_dim=2, horizon=49, warmup=25),
        dict(num_arms=2, context_dim=2, horizon=100, delta=1.0),
        dict(num_arms=2, context_dim=2, horizon=100, delta=0.0),
        dict(num_arms=2, context_dim=2, horizon=100, width_scale=0.0),
        dict(num_arms=0, context_dim=2, horizon=100),
        dict(num_arms=2, context_dim=2, horizon=100, rng_seed=2**64),
    ],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValidationError):
        BanditConfig(**kwargs)


def test_config_defaults():
    c = BanditConfig(2, 3, 1000)
    assert c.intrinsic_dim == 3
    assert (c.warmup, c.width_scale, c.delta) == (25, 1.0, 0.1)
    assert BanditConfig(2, 2, 50, warmup=25).horizon == 50


def test_trace_rejects_best_below_chosen():
    with pytest.raises(ValidationError):
        ExperimentTrace(np.zeros((1, 1)), [0], [0.0], [1.0], [0.5])


@given(st.lists(st.tuples(st.lists(finite, min_size=2, max_size=2), finite), max_size=20))
def test_history_roundtrip(items):
    h = ArmHistory(3, 2)
    for t, (ctx, r) in enumerate(items):
        h.append(Observation(ctx, r, t))
    again = ArmHistory.from_dict(json.loads(json.dumps(h.to_dict())))
    assert again == h


@given(finite, st.integers(0, 10**9), st.lists(finite, min_size=1, max_size=5))
def test_observation_roundtrip(r, t, ctx):
    obs = Observation(ctx, r, t)
    assert Observation.from_dict(json.loads(json.dumps(obs.to_dict()))) == obs


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 50), st.data())
@settings(max_examples=30)
def test_config_roundtrip(K, D, M0, data):
    T = data.draw(st.integers(M0 * K, M0 * K + 100))
    c = BanditConfig(K, D, T, warmup=M0, rng_seed=data.draw(st.integers(0, 2**64 - 1)))
    assert BanditConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c


def _random_trace(rng, n=50, dim=2):
    chosen = rng.choice([0.5, 1.0], size=n)
    best = np.maximum(chosen, rng.choice([0.5, 1.0], size=n))
    return ExperimentTrace(rng.random((n, dim)), rng.integers(0, 2, n), rng.normal(size=n), chosen, best)


def test_trace_dict_roundtrip():
    tr = _random_trace(np.random.default_rng(0))
    assert ExperimentTrace.from_dict(json.loads(json.dumps(tr.to_dict()))) == tr


def test_trace_csv_roundtrip(tmp_path):
    tr = _random_trace(np.random.default_rng(1))
    tr.write_csv(tmp_path / "t.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header == "t,context_0,context_1,arm,reward,mean_chosen,mean_best"
    assert ExperimentTrace.read_csv(tmp_path / "t.csv") == tr


def test_trace_csv_rejects_other_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValidationError):
        ExperimentTrace.read_csv(p)


def test_regret_replay_matches_online():
    env = Scenario("bullseye", rng_seed=3)
    trace, state = simulate_knn_ucb(env, BanditConfig(2, 2, 600, warmup=10, rng_seed=3))
    assert cumulative_regret(trace).final == pytest.approx(state.cumulative_regret, abs=1e-9)


def test_derive_rng_streams():
    a = derive_rng(5, "contexts").random(4)
    assert np.array_equal(a, derive_rng(5, "contexts").random(4))
    assert not np.array_equal(a, derive_rng(5, "noise").random(4))
    assert not np.array_equal(a, derive_rng(6, "contexts").random(4))


def test_pull_counts_sum_to_length():
    tr = _random_trace(np.random.default_rng(2), n=37)
    assert tr.pull_counts(2).sum() == 37
