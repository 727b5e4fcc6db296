import numpy as np
import pytest

from jumpsyn.augmentation import build_augmented_generator
from jumpsyn.performance import occupation_statistics, stationary_distribution
from jumpsyn.sim.paths import (JumpPath, decode_augmented, joint_path, rng_streams, sample_ctmc_path,
                               sample_joint_path_augmented, sample_observation_path)

from oracles import PI_REF, S_TILDE


def test_path_invariants():
    with pytest.raises(ValueError):
        JumpPath(0, np.array([1.0, 0.5]), np.array([1, 0]), 2.0, 2)
    with pytest.raises(ValueError):
        JumpPath(0, np.array([1.0]), np.array([0]), 2.0, 2)
    p = JumpPath(0, np.array([1.0]), np.array([1]), 2.0, 2)
    np.testing.assert_array_equal(p.state_at([0.0, 0.99, 1.0, 2.0]), [0, 0, 1, 1])
    np.testing.assert_allclose(p.occupation_times(), [1.0, 1.0])


def test_mean_holding_time():
    p = sample_ctmc_path(PI_REF, 0, 5000.0, np.random.default_rng(1))
    states, dur = p.holding_times()
    d1 = dur[states == 0][:10000]
    assert d1.size >= 5000
    se = d1.std(ddof=1) / np.sqrt(d1.size)
    assert abs(d1.mean() - 0.2) <= 3 * se


def test_absorbing_chain():
    p = sample_ctmc_path([[0.0]], 0, 100.0, np.random.default_rng(0))
    assert p.n_events == 0


def test_occupation_two_thirds():
    p = sample_ctmc_path([[-1, 1], [2, -2]], 0, 20000.0, np.random.default_rng(2))
    frac, se = occupation_statistics(p, batches=40)
    assert abs(frac[0] - 2 / 3) <= 3 * se[0]


def test_destination_frequencies():
    Q = np.array([[-6.0, 1.0, 2.0, 3.0], [1, -1, 0, 0], [1, 0, -1, 0], [1, 0, 0, -1]])
    p = sample_ctmc_path(Q, 0, 20000.0, np.random.default_rng(3))
    full = np.concatenate([[p.init], p.states])
    dest = full[1:][full[:-1] == 0]
    assert dest.size >= 10000
    for j, prob in ((1, 1 / 6), (2, 2 / 6), (3, 3 / 6)):
        f = np.mean(dest == j)
        assert abs(f - prob) <= 3 * np.sqrt(prob * (1 - prob) / dest.size)


def test_observation_constant_mode():
    r = JumpPath(1, np.array([]), np.array([]), 10.0, 2)
    obs = sample_observation_path(r, 3 * np.ones((2, 2)), 1, np.random.default_rng(0))
    assert obs.n_events == 0


def test_observation_lag_mean():
    G = np.array([[0.0, 3.0], [1.0, 0.0]])
    r = JumpPath(0, np.array([1.0]), np.array([1]), 1e9, 2)
    lags = []
    for k in range(10000):
        obs = sample_observation_path(r, G, 0, np.random.default_rng(k))
        lags.append(obs.times[0] - 1.0)
    lags = np.array(lags)
    assert abs(lags.mean() - 1 / 3) <= 3 * lags.std(ddof=1) / np.sqrt(lags.size)


def test_observation_cancelled_by_earlier_switch():
    # r leaves mode 2 again after 1e-9: the observation of mode 2 cannot land in time
    r = JumpPath(0, np.array([1.0, 1.0 + 1e-9]), np.array([1, 0]), 5.0, 2)
    obs = sample_observation_path(r, np.full((2, 2), 1e-3), 0, np.random.default_rng(4))
    assert obs.n_events == 0


def test_initial_mismatch_resolves():
    r = JumpPath(1, np.array([]), np.array([]), 100.0, 2)
    obs = sample_observation_path(r, np.full((2, 2), 3.0), 0, np.random.default_rng(5))
    assert obs.n_events == 1 and obs.states[0] == 1


def test_augmented_holding_time_state_2():
    p = sample_joint_path_augmented(S_TILDE, 1, 40000.0, np.random.default_rng(6))
    states, dur = p.holding_times()
    d = dur[states == 1]
    assert d.size >= 10000
    assert abs(d.mean() - 1 / 8) <= 3 * d.std(ddof=1) / np.sqrt(d.size)


def test_decode_single_mode():
    p = sample_joint_path_augmented([[0.0]], 0, 10.0, np.random.default_rng(0))
    r, o = decode_augmented(p, 1)
    assert r.n_events == 0 and o.n_events == 0


def test_decode_round_trip():
    p = sample_joint_path_augmented(S_TILDE, 0, 200.0, np.random.default_rng(7))
    r, o = decode_augmented(p, 2)
    back = joint_path(r, o)
    np.testing.assert_array_equal(back.times, p.times)
    np.testing.assert_array_equal(back.states, p.states)


def test_true_mode_marginal_under_augmented_sampler():
    p = sample_joint_path_augmented(S_TILDE, 0, 10000.0, np.random.default_rng(8))
    r, _ = decode_augmented(p, 2)
    frac, se = occupation_statistics(r, batches=50)
    assert np.all(np.abs(frac - [3 / 8, 5 / 8]) <= 3 * se)


def test_streams_independent_of_run_order():
    a = rng_streams(5, 3)[0].random(4)
    rng_streams(5, 0)
    b = rng_streams(5, 3)[0].random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(rng_streams(5, 4)[0].random(4), a)


def test_longer_horizon_extends_path():
    short = sample_ctmc_path(PI_REF, 0, 10.0, np.random.default_rng(9))
    long = sample_ctmc_path(PI_REF, 0, 20.0, np.random.default_rng(9))
    np.testing.assert_array_equal(long.times[: short.n_events], short.times)


def test_stationary_distribution_reducible():
    from jumpsyn.errors import Reducible
    with pytest.raises(Reducible):
        stationary_distribution([[-1, 1], [0, 0]])
    np.testing.assert_allclose(stationary_distribution([[-1, 1], [2, -2]]), [2 / 3, 1 / 3])
    np.testing.assert_allclose(stationary_distribution([[0.0]]), [1.0])
    p = stationary_distribution(build_augmented_generator(PI_REF, 3 * (1 - np.eye(2))))
    np.testing.assert_allclose(p.reshape(2, 2).sum(axis=1), [3 / 8, 5 / 8], atol=1e-12)
