import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from causal_transfer.environments import build_reward_gridworld
from causal_transfer.learners import (LearnerConfig, LearningCurve, cbc_q_learning_step,
                                      evaluate_policy, q_learning_step, read_curves_csv,
                                      run_cb_ucb_q, run_cbc_q, run_q_learning, run_ucb_q,
                                      ucb_bonus, ucb_q_learning_step, write_curves_csv)
from causal_transfer.mdp import greedy_policy, marginalize, policy_value, q_from_v, value_iteration
from causal_transfer.value_bounds import QBoundTable
from _models import random_cmdp

q_tables = st.lists(st.floats(-10, 10), min_size=6, max_size=6).map(lambda x: np.reshape(x, (3, 2)))


@given(q_tables, st.integers(0, 2), st.integers(0, 1), st.integers(0, 2), st.floats(-5, 5),
       st.floats(0, 1))
def test_q_step_changes_only_the_visited_entry(q, s, a, s2, r, alpha):
    out = q_learning_step(q, (s, a, s2, r), alpha, 0.9)
    mask = np.ones_like(q, bool)
    mask[s, a] = False
    np.testing.assert_array_equal(out[mask], q[mask])
    assert out[s, a] == pytest.approx((1 - alpha) * q[s, a] + alpha * (r + 0.9 * q[s2].max()))


@given(q_tables, st.integers(0, 2), st.integers(0, 1), st.integers(0, 2), st.floats(-5, 5),
       st.floats(0, 1), st.floats(-3, 0), st.floats(0, 3))
def test_cbc_step_is_the_clipped_q_step(q, s, a, s2, r, alpha, lo, hi):
    bounds = QBoundTable(np.full((3, 2), lo), np.full((3, 2), hi))
    plain = q_learning_step(q, (s, a, s2, r), alpha, 0.9)
    out = cbc_q_learning_step(q, (s, a, s2, r), alpha, 0.9, bounds)
    assert out[s, a] == pytest.approx(min(max(plain[s, a], lo), hi))
    assert lo <= out[s, a] <= hi
    again = cbc_q_learning_step(q, (s, a, s2, r), alpha, 0.9, bounds)
    np.testing.assert_array_equal(out, again)


@given(q_tables, st.integers(1, 50), st.floats(0, 1), st.floats(-3, 3))
def test_ucb_step_respects_the_cap(q, k, alpha, cap):
    upper = np.full((3, 2), cap)
    out = ucb_q_learning_step(q, k, (0, 1, 2, -1.0), alpha, 0.9, 0.5, upper)
    assert out[0, 1] <= cap
    free = ucb_q_learning_step(q, k, (0, 1, 2, -1.0), alpha, 0.9, 0.5)
    assert out[0, 1] == min(free[0, 1], cap)


def test_ucb_bonus_formula():
    assert ucb_bonus(4, 25, 4, 100, 60, 2.0, 0.05) == pytest.approx(
        2.0 * math.sqrt(math.log(25 * 4 * 100 * 60 / 0.05) / 4))
    assert ucb_bonus(1, 2, 2, 1, 1) > ucb_bonus(2, 2, 2, 1, 1)
    with pytest.raises(ValueError):
        ucb_bonus(0, 2, 2, 1, 1)


def test_step_size_schedules():
    assert LearnerConfig(alpha="constant", alpha0=0.2).step_size(7) == 0.2
    assert LearnerConfig(alpha="visit").step_size(4) == 0.25
    cfg = LearnerConfig(alpha="ucb", horizon=9)
    assert cfg.step_size(1) == 1.0 and cfg.step_size(11) == pytest.approx(10 / 20)
    assert LearnerConfig(alpha="ucb", alpha_h=3.0).step_size(2) == pytest.approx(4 / 5)
    for bad in (dict(episodes=-1), dict(alpha="adam"), dict(epsilon=2.0), dict(context="never")):
        with pytest.raises(ValueError):
            LearnerConfig(**bad)


@pytest.fixture(scope="module")
def env():
    return build_reward_gridworld()


@pytest.mark.parametrize("runner", ["q", "cbc", "ucb", "cb_ucb"])
def test_runs_are_deterministic(env, runner):
    cfg = LearnerConfig(episodes=60, seed=5, checkpoint_every=20, context="step")
    bounds = QBoundTable(np.full((25, 4), -20.0), np.full((25, 4), 5.0))
    fn = {"q": lambda: run_q_learning(env, cfg), "cbc": lambda: run_cbc_q(env, cfg, bounds),
          "ucb": lambda: run_ucb_q(env, cfg), "cb_ucb": lambda: run_cb_ucb_q(env, cfg, bounds)}[runner]
    a, b = fn(), fn()
    np.testing.assert_array_equal(a.q, b.q)
    assert a.curve.episodes == [0, 20, 40, 60] and a.curve.metrics == b.curve.metrics


def test_loose_bounds_do_not_change_q_learning(env):
    cfg = LearnerConfig(episodes=50, seed=2)
    loose = QBoundTable.unbounded(25, 4)
    np.testing.assert_array_equal(run_q_learning(env, cfg).q, run_cbc_q(env, cfg, loose).q)
    np.testing.assert_array_equal(run_ucb_q(env, cfg).q, run_cb_ucb_q(env, cfg, loose).q)


def test_clipped_learners_stay_inside_bounds(env):
    rng = np.random.default_rng(0)
    lo = rng.uniform(-8, -2, (25, 4))
    hi = lo + rng.uniform(0.5, 4, (25, 4))
    bounds = QBoundTable(lo, hi)
    res = run_cbc_q(env, LearnerConfig(episodes=100, seed=1), bounds)
    visited = res.visits > 0
    assert np.all(res.q[visited] >= lo[visited]) and np.all(res.q[visited] <= hi[visited])
    res = run_cb_ucb_q(env, LearnerConfig(episodes=100, seed=1), bounds)
    visited = res.visits > 0
    assert np.all(res.q[visited] <= hi[visited]) and res.bound_violations == 0


def test_zero_episodes_give_empty_curves(env, tmp_path):
    res = run_q_learning(env, LearnerConfig(episodes=0))
    assert res.curve.episodes == [] and np.all(res.q == 0)
    write_curves_csv(tmp_path / "c.csv", [res.curve])
    assert (tmp_path / "c.csv").read_text() == "seed,episode,metric,value\n"


def test_q_learning_converges_on_a_small_problem():
    cmdp = random_cmdp(np.random.default_rng(3), U=2, S=3, A=2, gamma=0.5)
    m = marginalize(cmdp)
    v, _ = value_iteration(m)
    cfg = LearnerConfig(episodes=3000, horizon=20, epsilon=0.3, alpha="ucb", alpha_h=2.0,
                        context="step", seed=0, checkpoint_every=3000)
    res = run_q_learning(cmdp, cfg)
    assert res.curve.series("v_hat")[-1] == pytest.approx(v[0], abs=0.1)


def test_policy_evaluation_and_mc_metric(env):
    m = marginalize(env)
    v, _ = value_iteration(m)
    pi = greedy_policy(q_from_v(m, v))
    mean, se = evaluate_policy(env, pi, 4000, 60, np.random.default_rng(0), resample_context=True)
    assert abs(mean - policy_value(m, pi)[2]) < 5 * se
    res = run_q_learning(env, LearnerConfig(episodes=20, checkpoint_every=10, eval_episodes=50))
    assert len(res.curve.series("mc_return")) == 3


def test_curve_csv_round_trip(tmp_path):
    c1, c2 = LearningCurve(1), LearningCurve(2)
    c1.record(0, v_hat=0.5)
    c1.record(10, v_hat=-1.0 / 3)
    c2.record(0, v_hat=0.1, mc_return=2.0)
    write_curves_csv(tmp_path / "c.csv", [c1, c2])
    back = read_curves_csv(tmp_path / "c.csv")
    assert [c.seed for c in back] == [1, 2]
    assert back[0].metrics == c1.metrics and back[1].metrics == c2.metrics
    with pytest.raises(ValueError):
        c1.record(5, v_hat=0.0)
