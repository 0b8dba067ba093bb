"""Experiment configuration and the demonstrator -> bounds -> learner pipeline.

An experiment is a TOML file. Shipped presets are named ``reward`` and
``transition``; see ``presets/*_experiment.toml`` for every key. Cells are
``[x, y]`` and actions are 1-4 (up, right, down, left) in config files.
"""
from __future__ import annotations

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .causal_bounds import Priors, bound_all, critical_pairs, priors_from_model
from .demonstrator import (ObservationalDistribution, analytic_observational,
                           collect_observations, contextual_optimal_policy,
                           epsilon_greedy, naive_estimates, naive_mdp,
                           read_dataset_csv, tabulated_policy)
from .environments import GridSpec, build_gridworld, default_spec, load_grid
from .learners import (LearnerConfig, LearnerResult, evaluate_policy, run_cb_ucb_q,
                       run_cbc_q, run_q_learning, run_ucb_q)
from .mdp import ContextualMdp, Mdp, greedy_policy, marginalize, policy_value, q_from_v, value_iteration
from .value_bounds import BoundedMdpModel, QBoundTable, q_bounds, robust_value_bounds

__all__ = [
    "ALGORITHMS",
    "PRESETS",
    "DemonstratorSettings",
    "BoundSettings",
    "TableRow",
    "ExperimentConfig",
    "load_config",
    "Pipeline",
    "table_rows",
    "reference_values",
    "run_algorithm",
    "run_learning",
    "episodes_to_tolerance",
]

PRESETS = ("reward", "transition")
ALGORITHMS = ("q", "cbc_q", "ucb_q", "cb_ucb_q")


@dataclass(frozen=True)
class DemonstratorSettings:
    policy: str = "tabulated"           # "tabulated" | "optimal"
    epsilon: float = 0.3
    default_action: int = 0
    table: tuple[tuple[int, tuple[int, ...]], ...] = ()
    source: str = "analytic"            # "analytic" | "empirical"
    episodes: int = 100_000
    horizon: int = 1
    start: str = "uniform"              # "uniform" | "default"
    seed: int = 0


@dataclass(frozen=True)
class BoundSettings:
    pairs: object = "heuristic"         # "heuristic" | "all" | tuple of (s, a)
    priors: str = "other-actions"       # "other-actions" | "none"
    reward_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class TableRow:
    """A reference row: pair (and successor for transitions) with printed values."""

    state: int
    action: int
    next_state: int | None
    do: float
    naive: float
    lo: float
    hi: float


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    grid: GridSpec
    demonstrator: DemonstratorSettings = DemonstratorSettings()
    bounds: BoundSettings = BoundSettings()
    learner: LearnerConfig = LearnerConfig()
    overrides: tuple[tuple[str, tuple[tuple[str, object], ...]], ...] = ()
    algorithms: tuple[str, ...] = ALGORITHMS
    seeds: int = 10
    tolerance_fraction: float = 0.1
    table: tuple[TableRow, ...] = ()
    table_tolerance: float = 1e-3
    eval_episodes: int = 20_000
    eval_seed: int = 12345
    source: str = field(default="", compare=False)

    def __post_init__(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")
        for alg, _ in self.overrides:
            if alg not in ALGORITHMS:
                raise ValueError(f"override for unknown algorithm {alg!r}")

    def learner_config(self, algorithm: str, **changes) -> LearnerConfig:
        """Shared learner settings with the per-algorithm overrides applied."""
        merged = dict(dict(self.overrides).get(algorithm, ()))
        merged.update(changes)
        return replace(self.learner, **merged)


def _cell(grid: GridSpec, c) -> int:
    return grid.index(tuple(int(x) for x in c))


def _parse(doc: dict, base: Path | None, name: str) -> ExperimentConfig:
    env = doc.get("environment", {})
    layout = env.get("layout")
    if layout is not None:
        path = Path(layout)
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise FileNotFoundError(f"layout file {path} does not exist")
        grid = load_grid(path)
    else:
        kind = env.get("kind", "reward")
        if kind not in PRESETS:
            raise ValueError(f"environment.kind must be one of {PRESETS}")
        grid = default_spec(kind)

    d = doc.get("demonstrator", {})
    table = tuple(
        (_cell(grid, e["cell"]), tuple(int(a) - 1 for a in e["actions"]))
        for e in d.get("table", [])
    )
    demo = DemonstratorSettings(
        policy=d.get("policy", "tabulated"),
        epsilon=float(d.get("epsilon", 0.3)),
        default_action=int(d.get("default_action", 1)) - 1,
        table=table,
        source=d.get("source", "analytic"),
        episodes=int(d.get("episodes", 100_000)),
        horizon=int(d.get("horizon", 1)),
        start=d.get("start", "uniform"),
        seed=int(d.get("seed", 0)),
    )
    if demo.policy not in ("tabulated", "optimal"):
        raise ValueError("demonstrator.policy must be 'tabulated' or 'optimal'")
    if demo.source not in ("analytic", "empirical"):
        raise ValueError("demonstrator.source must be 'analytic' or 'empirical'")

    b = doc.get("bounds", {})
    pairs = b.get("pairs", "heuristic")
    if not isinstance(pairs, str):
        pairs = tuple((_cell(grid, p["cell"]), int(p["action"]) - 1) for p in pairs)
    rr = b.get("reward_range")
    bounds = BoundSettings(pairs, b.get("priors", "other-actions"),
                           None if rr is None else (float(rr[0]), float(rr[1])))

    ln = dict(doc.get("learning", {}))
    algorithms = tuple(ln.pop("algorithms", ALGORITHMS))
    seeds = int(ln.pop("seeds", 10))
    frac = float(ln.pop("tolerance_fraction", 0.1))
    overrides = tuple((alg, tuple(sorted(ln.pop(alg).items())))
                      for alg in ALGORITHMS if isinstance(ln.get(alg), dict))
    learner = LearnerConfig(**ln)
    for _, items in overrides:
        replace(learner, **dict(items))  # reject bad overrides at load time

    t = doc.get("tables", {})
    rows = tuple(
        TableRow(_cell(grid, r["cell"]), int(r["action"]) - 1,
                 None if "next_cell" not in r else _cell(grid, r["next_cell"]),
                 float(r["do"]), float(r["naive"]), float(r["lo"]), float(r["hi"]))
        for r in t.get("rows", [])
    )
    ev = doc.get("evaluate", {})
    return ExperimentConfig(
        name=doc.get("name", name),
        grid=grid,
        demonstrator=demo,
        bounds=bounds,
        learner=learner,
        overrides=overrides,
        algorithms=algorithms,
        seeds=seeds,
        tolerance_fraction=frac,
        table=rows,
        table_tolerance=float(t.get("tolerance", 1e-3)),
        eval_episodes=int(ev.get("episodes", 20_000)),
        eval_seed=int(ev.get("seed", 12345)),
        source=str(base or ""),
    )


def load_config(path_or_preset: str | Path) -> ExperimentConfig:
    """Load an experiment file, or a shipped preset by name."""
    p = str(path_or_preset)
    if p in PRESETS:
        text = resources.files("causal_transfer.presets").joinpath(f"{p}_experiment.toml").read_text()
        return _parse(tomllib.loads(text), None, p)
    path = Path(p)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    with open(path, "rb") as fh:
        return _parse(tomllib.load(fh), path.parent, path.stem)


class Pipeline:
    """Lazily computed artifacts of one experiment."""

    def __init__(self, cfg: ExperimentConfig, dataset: str | Path | None = None):
        self.cfg = cfg
        self.env: ContextualMdp = build_gridworld(cfg.grid)
        self.mdp: Mdp = marginalize(self.env)
        self.dataset = None if dataset is None else Path(dataset)
        self._obs = None
        self._model = None
        self._vq = None

    @property
    def start(self) -> int:
        return self.cfg.grid.index(self.cfg.grid.start)

    def behaviour_policy(self) -> np.ndarray:
        d = self.cfg.demonstrator
        env = self.env
        if d.policy == "optimal":
            base = contextual_optimal_policy(env)
        else:
            base = tabulated_policy(env.n_contexts, env.n_states, env.n_actions,
                                    dict(d.table), d.default_action)
        return epsilon_greedy(base, d.epsilon)

    def observations(self) -> ObservationalDistribution:
        if self._obs is None:
            d = self.cfg.demonstrator
            env = self.env
            if self.dataset is not None:
                if not self.dataset.exists():
                    raise FileNotFoundError(f"dataset {self.dataset} does not exist")
                rows = read_dataset_csv(self.dataset)
                self._obs = ObservationalDistribution.from_tuples(
                    rows, env.n_states, env.n_actions, env.reward_values)
            elif d.source == "analytic":
                self._obs = analytic_observational(env, self.behaviour_policy())
            else:
                initial = None if d.start == "default" else np.full(env.n_states, 1.0 / env.n_states)
                self._obs = collect_observations(
                    env, self.behaviour_policy(), d.episodes, d.horizon,
                    np.random.default_rng(d.seed), initial=initial)
        return self._obs

    def priors(self) -> Priors:
        if self.cfg.bounds.priors == "none":
            return Priors()
        if self.cfg.bounds.priors != "other-actions":
            raise ValueError("bounds.priors must be 'other-actions' or 'none'")
        # The learner is taken to know the effect of every action it does not
        # bound at a state where some action is bounded.
        bounded = set(self._bounded_pairs())
        states = {s for s, _ in bounded}
        known = [(s, a) for s in sorted(states) for a in range(self.env.n_actions)
                 if (s, a) not in bounded]
        return priors_from_model(self.mdp, known)

    def _bounded_pairs(self):
        pairs = self.cfg.bounds.pairs
        obs = self.observations()
        if pairs == "heuristic":
            rp, tp = critical_pairs(obs)
            return sorted(set(rp) | set(tp))
        if pairs == "all":
            return [(s, a) for s in range(obs.n_states) if obs.has_data(s)
                    for a in range(obs.n_actions)]
        return list(pairs)

    def reward_range(self) -> tuple[float, float]:
        rr = self.cfg.bounds.reward_range
        return self.mdp.reward_range if rr is None else rr

    def model(self) -> BoundedMdpModel:
        if self._model is None:
            self._model = bound_all(self.observations(), self.mdp.gamma, self.reward_range(),
                                    pairs=self.cfg.bounds.pairs, priors=self.priors())
        return self._model

    def value_bounds(self) -> tuple[np.ndarray, np.ndarray, QBoundTable]:
        if self._vq is None:
            m = self.model()
            v_lo = robust_value_bounds(m, optimistic=False)
            v_hi = robust_value_bounds(m, optimistic=True)
            self._vq = (v_lo, v_hi, q_bounds(m, v_lo, v_hi))
        return self._vq

    def q_star(self) -> tuple[np.ndarray, np.ndarray]:
        v, _ = value_iteration(self.mdp, 1e-10)
        return v, q_from_v(self.mdp, v)


def table_rows(pipe: Pipeline) -> list[dict]:
    """Computed versus reference values for every configured table row."""
    obs = pipe.observations()
    r_hat, p_hat = naive_estimates(obs)
    model = pipe.model()
    mdp = pipe.mdp
    grid = pipe.cfg.grid
    tol = pipe.cfg.table_tolerance
    out = []
    for row in pipe.cfg.table:
        s, a, t = row.state, row.action, row.next_state
        if t is None:
            got = (mdp.expected_reward[s, a], r_hat[s, a], model.r_lo[s, a], model.r_hi[s, a])
        else:
            got = (mdp.transition[s, a, t], p_hat[s, a, t], model.p_lo[s, a, t], model.p_hi[s, a, t])
        want = (row.do, row.naive, row.lo, row.hi)
        dev = [abs(g - w) for g, w in zip(got, want)]
        out.append({
            "state": _label(grid, s),
            "action": a + 1,
            "next_state": "" if t is None else _label(grid, t),
            "do_effect": float(got[0]),
            "naive": float(got[1]),
            "lo": float(got[2]),
            "hi": float(got[3]),
            "ref_do_effect": row.do,
            "ref_naive": row.naive,
            "ref_lo": row.lo,
            "ref_hi": row.hi,
            "max_deviation": float(max(dev)),
            "ok": bool(max(dev) <= tol),
        })
    return out


def _label(grid: GridSpec, s: int) -> str:
    x, y = grid.cell(s)
    return f"[{x},{y}]"


def reference_values(pipe: Pipeline, episodes: int | None = None, seed: int | None = None) -> dict:
    """Optimum, naive-model plan and Monte-Carlo checks at the start state."""
    cfg = pipe.cfg
    s0 = pipe.start
    v_star, _ = pipe.q_star()
    naive = naive_mdp(pipe.observations(), pipe.mdp)
    v_naive, pi_naive = value_iteration(naive, 1e-10)
    v_naive_true = policy_value(pipe.mdp, pi_naive)
    pi_star = greedy_policy(q_from_v(pipe.mdp, v_star))
    n = cfg.eval_episodes if episodes is None else episodes
    rng = np.random.default_rng(cfg.eval_seed if seed is None else seed)
    per_step = cfg.learner.context == "step"
    mc_naive, se_naive = evaluate_policy(pipe.env, pi_naive, n, cfg.learner.horizon, rng,
                                         resample_context=per_step)
    mc_star, se_star = evaluate_policy(pipe.env, pi_star, n, cfg.learner.horizon, rng,
                                       resample_context=per_step)
    return {
        "v_star": float(v_star[s0]),
        "naive_plan_value": float(v_naive[s0]),
        "naive_policy_value": float(v_naive_true[s0]),
        "naive_mc_return": mc_naive,
        "naive_mc_stderr": se_naive,
        "optimal_mc_return": mc_star,
        "optimal_mc_stderr": se_star,
    }


def run_algorithm(env: ContextualMdp, algorithm: str, cfg: LearnerConfig,
                  bounds: QBoundTable | None) -> LearnerResult:
    if algorithm == "q":
        return run_q_learning(env, cfg)
    if algorithm == "cbc_q":
        return run_cbc_q(env, cfg, bounds)
    if algorithm == "ucb_q":
        return run_ucb_q(env, cfg)
    if algorithm == "cb_ucb_q":
        return run_cb_ucb_q(env, cfg, bounds)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _job(args):
    env, algorithm, cfg, bounds = args
    return run_algorithm(env, algorithm, cfg, bounds)


def run_learning(pipe: Pipeline, seed_base: int = 0, workers: int = 1,
                 algorithms=None, seeds: int | None = None,
                 episodes: int | None = None) -> dict[str, list[LearnerResult]]:
    """Run every algorithm for ``seeds`` consecutive seeds from ``seed_base``.

    Seed ``seed_base + i`` is shared across algorithms, so paired runs see
    the same random stream. Results are identical for any ``workers``.
    """
    cfg = pipe.cfg
    algorithms = tuple(cfg.algorithms if algorithms is None else algorithms)
    n_seeds = cfg.seeds if seeds is None else seeds
    extra = {} if episodes is None else {"episodes": episodes}
    _, _, qb = pipe.value_bounds()
    jobs = [(pipe.env, alg, cfg.learner_config(alg, seed=seed_base + i, **extra), qb)
            for alg in algorithms for i in range(n_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    out: dict[str, list[LearnerResult]] = {alg: [] for alg in algorithms}
    for (_, alg, _, _), res in zip(jobs, results):
        out[alg].append(res)
    return out


def episodes_to_tolerance(episodes, values, target: float, tol: float) -> float:
    """First checkpoint from which ``|value - target| <= tol`` holds to the end.

    Returns ``inf`` if the last checkpoint is still outside the band.
    """
    episodes = np.asarray(episodes)
    bad = np.abs(np.asarray(values, float) - target) > tol
    if not bad.any():
        return float(episodes[0])
    last = int(np.flatnonzero(bad)[-1])
    return float(episodes[last + 1]) if last + 1 < len(episodes) else float("inf")
