import numpy as np
import pytest
from hypothesis import given, strategies as st

from causal_transfer.causal_bounds import (CausalInterval, InconsistentDataError, Priors,
                                           ResponseMappings, TooManyMappingsError, bound_all,
                                           critical_pairs, do_effect_program, index_set,
                                           project_joint, reward_do_bounds, transition_do_bounds)
from causal_transfer.demonstrator import analytic_observational
from causal_transfer.environments import build_transition_gridworld
from causal_transfer.experiments import Pipeline, load_config
from causal_transfer.mdp import marginalize
from _models import confounded_joint


def natural_bounds(joint, values, a):
    """Manski bounds on E[v(o) | do(a)] from a joint P(o, a)."""
    values = np.asarray(values, float)
    known = values @ joint[:, a]
    rest = 1.0 - joint[:, a].sum()
    return known + rest * values.min(), known + rest * values.max()


def test_reward_mapping_table():
    maps = ResponseMappings(3, 2)
    rows = [tuple(maps.table[:, j] + 1) for j in range(maps.size)]
    assert rows == [(1, 1, 1), (1, 1, 2), (1, 2, 1), (1, 2, 2),
                    (2, 1, 1), (2, 1, 2), (2, 2, 1), (2, 2, 2)]
    assert maps.outcome(2, 6) + 1 == 1            # f(3, 7) = 1, one-based
    assert list(index_set(maps, 0, 1) + 1) == [1, 2, 5, 6]


def test_transition_mapping_table():
    maps = ResponseMappings(2, 2)
    assert [tuple(maps.table[:, j] + 1) for j in range(4)] == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert maps.outcome(0, 2) + 1 == 2            # f_s(1, 3) = 2, one-based


@given(seed=st.integers(0, 2**32 - 1), n_o=st.integers(1, 3), n_a=st.integers(1, 3))
def test_program_without_priors_gives_natural_bounds(seed, n_o, n_a):
    rng = np.random.default_rng(seed)
    joint, _ = confounded_joint(rng, n_o, n_a)
    values = rng.normal(size=n_o)
    a = int(rng.integers(n_a))
    iv = reward_do_bounds(joint, values, a)
    lo, hi = natural_bounds(joint, values, a)
    assert iv.lo == pytest.approx(lo, abs=1e-9)
    assert iv.hi == pytest.approx(hi, abs=1e-9)


@given(seed=st.integers(0, 2**32 - 1), n_o=st.integers(2, 3), n_a=st.integers(2, 3))
def test_priors_never_widen_and_keep_the_truth(seed, n_o, n_a):
    rng = np.random.default_rng(seed)
    joint, do = confounded_joint(rng, n_o, n_a)
    a = int(rng.integers(n_a))
    m = (a + 1) % n_a
    values = np.arange(n_o, dtype=float)
    with_prior = reward_do_bounds(joint, values, a, {m: dict(zip(values, do[m]))})
    lo, hi = natural_bounds(joint, values, a)
    assert with_prior.lo >= lo - 1e-9 and with_prior.hi <= hi + 1e-9
    assert with_prior.contains(values @ do[a], tol=1e-8)


def test_single_outcome_is_certain():
    iv = transition_do_bounds(np.array([[0.3, 0.7]]), 0, 0)
    assert iv.lo == pytest.approx(1.0) and iv.hi == pytest.approx(1.0)


@given(seed=st.integers(0, 2**32 - 1), n_o=st.integers(2, 3), n_a=st.integers(1, 3))
def test_transition_bounds_contain_truth(seed, n_o, n_a):
    rng = np.random.default_rng(seed)
    joint, do = confounded_joint(rng, n_o, n_a)
    a = int(rng.integers(n_a))
    for t in range(n_o):
        iv = transition_do_bounds(joint, a, t)
        assert 0.0 <= iv.lo <= iv.hi <= 1.0
        assert iv.contains(do[a, t], tol=1e-9)
        assert iv.lo == pytest.approx(joint[t, a], abs=1e-9)


def test_program_shape():
    joint = np.full((2, 3), 1 / 6)
    prog = do_effect_program(joint, np.array([0.0, 1.0]), 1, {0: np.array([0.5, 0.5])})
    assert prog.n_vars == 3 * 2 ** 3
    assert prog.A_eq.shape == (2 * 3 + 1 + 2, 24)


def test_inconsistent_prior_raises():
    # P(o=0, a=0) = 0.5 forces P(o=0 | do(0)) >= 0.5; a prior of 0.1 contradicts it.
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    with pytest.raises(InconsistentDataError):
        reward_do_bounds(joint, [0.0, 1.0], 1, {0: {0.0: 0.1, 1.0: 0.9}})
    with pytest.raises(ValueError):
        reward_do_bounds(joint, [0.0, 1.0], 1, {0: {7.0: 1.0}})


def test_mapping_cap():
    with pytest.raises(TooManyMappingsError):
        reward_do_bounds(np.full((4, 4), 1 / 16), np.arange(4.0), 0, max_mappings=100)


def test_projection_of_noisy_joints():
    p = project_joint(np.array([[0.5, -1e-12], [0.25, 0.25 + 1e-10]]))
    assert p.min() == 0.0 and p.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InconsistentDataError):
        project_joint(np.array([[0.5, -0.1], [0.3, 0.3]]))


def test_interval_validation():
    iv = CausalInterval(-0.1, 1.2, kind="transition")
    assert (iv.lo, iv.hi) == (0.0, 1.0)
    with pytest.raises(ValueError):
        CausalInterval(2.0, 1.0)


def test_heuristic_selects_the_context_sensitive_pairs():
    for name, want_r, want_t in (("reward", {(15, 0), (21, 3), (23, 1), (19, 0)}, set()),
                                 ("transition", set(), {(10, 0), (14, 0)})):
        obs = Pipeline(load_config(name)).observations()
        rp, tp = critical_pairs(obs)
        assert set(rp) == want_r and set(tp) == want_t


def test_bound_all_contains_the_true_model():
    for name in ("reward", "transition"):
        pipe = Pipeline(load_config(name))
        for pairs in ("heuristic", "all"):
            model = bound_all(pipe.observations(), 0.9, pipe.reward_range(), pairs=pairs,
                              priors=pipe.priors())
            assert model.contains(pipe.mdp, tol=1e-9)


def test_bound_all_vacuous_without_data_and_exact_when_unconfounded():
    env = build_transition_gridworld()
    pi = np.full((env.n_states, env.n_actions), 0.25)
    obs = analytic_observational(env, pi)
    m = marginalize(env)
    model = bound_all(obs, 0.9, (-1.0, 10.0), pairs="heuristic")
    # Heuristic pairs still get bounds; every other pair is pinned to the truth.
    np.testing.assert_allclose(model.r_lo, m.expected_reward, atol=1e-12)
    mask = np.ones((25, 4), bool)
    mask[10, 0] = mask[14, 0] = False
    np.testing.assert_allclose(model.p_lo[mask], m.transition[mask], atol=1e-12)

    rj = np.array(obs.reward_joint)
    tj = np.array(obs.transition_joint)
    rj[3] = 0.0
    tj[3] = 0.0
    sparse = type(obs)(obs.reward_values, rj, tj)
    model = bound_all(sparse, 0.9, (-1.0, 10.0))
    assert np.all(model.r_lo[3] == -1.0) and np.all(model.r_hi[3] == 10.0)
    assert np.all(model.p_lo[3] == 0.0) and np.all(model.p_hi[3] == 1.0)


def test_explicit_pair_list_and_bad_selector():
    pipe = Pipeline(load_config("reward"))
    obs = pipe.observations()
    model = bound_all(obs, 0.9, (-1.0, 10.0), pairs=[(21, 3)])
    assert model.r_lo[21, 3] == pytest.approx(0.012, abs=1e-9)
    assert model.r_lo[23, 1] == model.r_hi[23, 1]
    with pytest.raises(ValueError):
        bound_all(obs, 0.9, (-1.0, 10.0), pairs="some")
    with pytest.raises(ValueError):
        bound_all(obs, 0.9, (0.0, 5.0))


def test_priors_validation():
    with pytest.raises(ValueError):
        Priors(reward={(0, 1): {1.0: 0.5}})
