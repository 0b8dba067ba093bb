import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from causal_transfer.cli import main
from causal_transfer.demonstrator import collect_observations, write_dataset_csv
from causal_transfer.experiments import (ALGORITHMS, Pipeline, episodes_to_tolerance, load_config,
                                         reference_values, run_learning)
from causal_transfer.value_bounds import BoundedMdpModel, QBoundTable


def preset_text(name):
    return resources.files("causal_transfer.presets").joinpath(f"{name}_experiment.toml").read_text()


def test_presets_load():
    for name in ("reward", "transition"):
        cfg = load_config(name)
        assert cfg.name == name and cfg.algorithms == ALGORITHMS and cfg.seeds == 10
        assert cfg.learner.context == "step" and len(cfg.table) == 4
        ucb = cfg.learner_config("ucb_q")
        assert ucb.alpha_h == 60.0 and ucb.checkpoint_every == 100
        assert cfg.learner_config("q").alpha_h == 10.0


def test_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text('[environment]\nlayout = "nowhere.toml"\n')
    with pytest.raises(FileNotFoundError):
        load_config(bad)
    bad.write_text('[learning]\nalgorithms = ["sarsa"]\n')
    with pytest.raises(ValueError):
        load_config(bad)
    bad.write_text('[learning.q]\nepsilon = 3.0\n')
    with pytest.raises(ValueError):
        load_config(bad)
    bad.write_text('[environment]\nkind = "maze"\n')
    with pytest.raises(ValueError):
        load_config(bad)


def test_custom_layout_relative_to_config(tmp_path):
    grid = resources.files("causal_transfer.presets").joinpath("reward_grid.toml").read_text()
    (tmp_path / "grid.toml").write_text(grid)
    cfg_path = tmp_path / "exp.toml"
    cfg_path.write_text(preset_text("reward").replace('kind = "reward"', 'layout = "grid.toml"'))
    cfg = load_config(cfg_path)
    assert cfg.grid == load_config("reward").grid


def test_episodes_to_tolerance():
    ep = np.array([0, 10, 20, 30])
    assert episodes_to_tolerance(ep, [5, 0.05, 3, 0.0], 0.0, 0.1) == 30
    assert episodes_to_tolerance(ep, [0, 0, 0, 0], 0.0, 0.1) == 0
    assert episodes_to_tolerance(ep, [0, 0, 0, 1], 0.0, 0.1) == np.inf


def test_reference_values_show_naive_over_optimism():
    for name in ("reward", "transition"):
        ref = reference_values(Pipeline(load_config(name)), episodes=2000)
        assert ref["naive_plan_value"] > ref["v_star"] > ref["naive_policy_value"]


def test_learning_is_worker_invariant():
    pipe = Pipeline(load_config("reward"))
    one = run_learning(pipe, 3, 1, algorithms=["q", "cb_ucb_q"], seeds=2, episodes=20)
    two = run_learning(pipe, 3, 2, algorithms=["q", "cb_ucb_q"], seeds=2, episodes=20)
    for alg in one:
        for a, b in zip(one[alg], two[alg]):
            np.testing.assert_array_equal(a.q, b.q)
            assert a.curve.metrics == b.curve.metrics
    assert [r.curve.seed for r in one["q"]] == [3, 4]


def test_empirical_bounds_close_to_analytic(tmp_path):
    cfg_path = tmp_path / "emp.toml"
    cfg_path.write_text(preset_text("reward").replace('source = "analytic"', 'source = "empirical"'))
    emp = Pipeline(load_config(cfg_path)).model()
    exact = Pipeline(load_config("reward")).model()
    for name in ("r_lo", "r_hi", "p_lo", "p_hi"):
        assert np.abs(getattr(emp, name) - getattr(exact, name)).max() <= 0.05


def _files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_reproduce_tables_exit_codes(tmp_path):
    assert main(["reproduce-tables", "--config", "reward", "--out", str(tmp_path)]) == 0
    # the printed Table IV naive column is rounded; see the decisions ledger
    assert main(["reproduce-tables", "--config", "transition", "--out", str(tmp_path)]) == 1
    text = (tmp_path / "reward_table.csv").read_text().splitlines()
    assert text[0].startswith("state,action,next_state,do_effect,naive,lo,hi")
    assert len(text) == 5


def test_compute_bounds_artifacts_are_sound(tmp_path):
    assert main(["compute-bounds", "--out", str(tmp_path)]) == 0
    for name in ("reward", "transition"):
        pipe = Pipeline(load_config(name))
        qb = QBoundTable.load_json(tmp_path / f"{name}_q_bounds.json")
        _, q_star = pipe.q_star()
        assert qb.contains(q_star)
        model = BoundedMdpModel.load_json(tmp_path / f"{name}_bounded_model.json")
        assert model.contains(pipe.mdp)


def test_compute_bounds_from_dataset(tmp_path):
    pipe = Pipeline(load_config("transition"))
    obs = collect_observations(pipe.env, pipe.behaviour_policy(), 200_000, 1,
                               np.random.default_rng(0), initial=np.full(25, 1 / 25), keep_raw=True)
    write_dataset_csv(tmp_path / "data.csv", obs.raw)
    out = tmp_path / "out"
    code = main(["compute-bounds", "--config", "transition", "--dataset", str(tmp_path / "data.csv"),
                 "--out", str(out)])
    assert code == 0
    model = BoundedMdpModel.load_json(out / "transition_bounded_model.json")
    assert abs(model.p_lo[10, 0, 15] - 0.102) < 0.01


def test_missing_dataset_leaves_no_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["compute-bounds", "--config", "reward", "--dataset", str(tmp_path / "nope.csv"),
                 "--out", str(out)])
    assert code == 2 and not out.exists()
    assert "does not exist" in capsys.readouterr().err


def test_run_learning_outputs_and_determinism(tmp_path):
    args = ["run-learning", "--config", "reward", "--episodes", "40", "--seeds", "2"]
    a, b = tmp_path / "a", tmp_path / "b"
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b), "--workers", "2"])
    fa, fb = _files(a), _files(b)
    assert set(fa) == {"reward_curves_q.csv", "reward_curves_cbc_q.csv", "reward_curves_ucb_q.csv",
                       "reward_curves_cb_ucb_q.csv", "reward_summary.csv", "reward_reference.csv",
                       "reward_checks.csv", "reward_learning.svg"}
    assert fa == fb
    assert fa["reward_curves_q.csv"].startswith(b"seed,episode,metric,value\n")


def test_zero_episode_run(tmp_path):
    code = main(["run-learning", "--config", "transition", "--episodes", "0", "--seeds", "2",
                 "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "transition_curves_q.csv").read_text() == "seed,episode,metric,value\n"
    assert (tmp_path / "transition_summary.csv").read_text().startswith("algorithm,episode,mean")


def test_evaluate_and_module_entry_point(tmp_path):
    assert main(["evaluate", "--config", "reward", "--episodes", "3000", "--out", str(tmp_path)]) == 0
    first = (tmp_path / "reward_evaluate.csv").read_bytes()
    proc = subprocess.run([sys.executable, "-m", "causal_transfer", "evaluate", "--config", "reward",
                           "--episodes", "3000", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "reward_evaluate.csv").read_bytes() == first


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["fly"])
    assert main(["evaluate", "--workers", "0"]) == 2
    assert main(["evaluate", "--config", "reward", "--config", "reward"]) == 2
