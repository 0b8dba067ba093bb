"""Tabular learners: Q learning, UCB-Q, and their bound-constrained variants.

The learner never sees the context. Each episode draws a context from the
environment's context law, runs ``horizon`` steps, and updates a Q table
after every step. Bound-constrained variants project each updated entry
into ``[Q_lo, Q_hi]`` (Q learning) or cap it at ``Q_hi`` (UCB-Q).

The step loop is plain Python over lists: tables are tiny and per-step
numpy calls would dominate the cost. Every step consumes a fixed block of
uniforms, so a run with vacuous bounds follows exactly the same trajectory
as the unconstrained learner with the same seed.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .mdp import ContextualMdp, simulate_batch
from .value_bounds import QBoundTable

__all__ = [
    "CURVE_HEADER",
    "LearnerConfig",
    "LearningCurve",
    "LearnerResult",
    "q_learning_step",
    "cbc_q_learning_step",
    "ucb_bonus",
    "ucb_q_learning_step",
    "run_q_learning",
    "run_cbc_q",
    "run_ucb_q",
    "run_cb_ucb_q",
    "evaluate_policy",
    "write_curves_csv",
    "read_curves_csv",
    "with_seed",
]

CURVE_HEADER = ("seed", "episode", "metric", "value")
SCHEDULES = ("constant", "visit", "ucb")


@dataclass(frozen=True)
class LearnerConfig:
    """Knobs shared by all four learners.

    ``alpha`` selects the step size for the k-th visit of a pair:
    ``"constant"`` uses ``alpha0``; ``"visit"`` uses ``1/k``; ``"ucb"``
    uses ``(H + 1)/(H + k)`` with ``H = alpha_h`` (default: the horizon).

    ``context`` is ``"episode"`` (one draw held for the episode) or
    ``"step"`` (a fresh draw every step). Only the latter makes the
    marginalized MDP the exact model of what the learner experiences; with
    per-episode contexts, repeated visits to a context-sensitive pair within
    an episode are correlated.
    """

    episodes: int = 1000
    horizon: int = 60
    alpha: str = "ucb"
    alpha0: float = 0.1
    alpha_h: float | None = None
    epsilon: float = 0.1
    bonus_scale: float = 1.0
    delta: float = 0.05
    gamma: float | None = None
    seed: int = 0
    checkpoint_every: int = 50
    eval_episodes: int = 0
    q_init: float | None = None
    context: str = "episode"

    def __post_init__(self):
        if self.episodes < 0 or self.horizon < 1:
            raise ValueError("episodes must be >= 0 and horizon >= 1")
        if self.context not in ("episode", "step"):
            raise ValueError("context must be 'episode' or 'step'")
        if self.alpha not in SCHEDULES:
            raise ValueError(f"alpha must be one of {SCHEDULES}")
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError("alpha0 must lie in (0, 1]")
        if self.alpha_h is not None and self.alpha_h < 0:
            raise ValueError("alpha_h must be non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.bonus_scale < 0 or not 0.0 < self.delta < 1.0:
            raise ValueError("need bonus_scale >= 0 and delta in (0, 1)")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    def step_size(self, k: int) -> float:
        if self.alpha == "constant":
            return self.alpha0
        if self.alpha == "visit":
            return 1.0 / k
        h = self.horizon if self.alpha_h is None else self.alpha_h
        return (h + 1.0) / (h + k)


@dataclass
class LearningCurve:
    """Checkpointed metrics of one run (one seed)."""

    seed: int
    episodes: list[int] = field(default_factory=list)
    metrics: dict[str, list[float]] = field(default_factory=dict)

    def record(self, episode: int, **values: float) -> None:
        if self.episodes and episode <= self.episodes[-1]:
            raise ValueError("checkpoint episodes must increase")
        self.episodes.append(int(episode))
        for name, v in values.items():
            self.metrics.setdefault(name, []).append(float(v))

    def series(self, metric: str) -> np.ndarray:
        return np.asarray(self.metrics.get(metric, []), float)

    def rows(self):
        for name in sorted(self.metrics):
            for ep, v in zip(self.episodes, self.metrics[name]):
                yield self.seed, ep, name, v


@dataclass
class LearnerResult:
    q: np.ndarray
    curve: LearningCurve
    visits: np.ndarray
    bound_violations: int = 0


def q_learning_step(q: np.ndarray, transition, alpha: float, gamma: float) -> np.ndarray:
    """One Q-learning update on a copy of ``q``; only ``q[s, a]`` changes."""
    s, a, s2, r = transition
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = np.array(q, float)
    out[s, a] = (1.0 - alpha) * out[s, a] + alpha * (r + gamma * out[s2].max())
    return out


def cbc_q_learning_step(q: np.ndarray, transition, alpha: float, gamma: float,
                        bounds: QBoundTable) -> np.ndarray:
    """Q-learning update projected onto ``[bounds.lo, bounds.hi]`` at the pair."""
    out = q_learning_step(q, transition, alpha, gamma)
    s, a = transition[0], transition[1]
    out[s, a] = min(max(out[s, a], bounds.lo[s, a]), bounds.hi[s, a])
    return out


def ucb_bonus(k: int, n_states: int, n_actions: int, episodes: int, horizon: int,
              scale: float = 1.0, delta: float = 0.05) -> float:
    """``scale * sqrt(log(S A K T / delta) / k)``."""
    if k < 1:
        raise ValueError("visit count must be at least 1")
    iota = math.log(n_states * n_actions * max(episodes, 1) * horizon / delta)
    return scale * math.sqrt(iota / k)


def ucb_q_learning_step(q: np.ndarray, k: int, transition, alpha: float, gamma: float,
                        bonus: float, upper: np.ndarray | None = None) -> np.ndarray:
    """Optimistic update ``(1 - alpha) Q + alpha (r + gamma max Q(s') + bonus)``,
    optionally capped at ``upper[s, a]``."""
    if k < 1:
        raise ValueError("visit count must be at least 1")
    s, a, s2, r = transition
    out = np.array(q, float)
    out[s, a] = (1.0 - alpha) * out[s, a] + alpha * (r + gamma * out[s2].max() + bonus)
    if upper is not None:
        out[s, a] = min(out[s, a], upper[s, a])
    return out


class _Sampler:
    """Per-context cumulative tables as nested lists for fast scalar draws."""

    def __init__(self, env: ContextualMdp):
        P, R = env.stacked()
        self.values = [float(v) for v in env.reward_values]
        self.next = []
        self.reward = []
        for u in range(env.n_contexts):
            nxt_u, rew_u = [], []
            for s in range(env.n_states):
                nxt_s, rew_s = [], []
                for a in range(env.n_actions):
                    nxt_s.append(_cum(P[u, s, a]))
                    rew_s.append({t: _cum(R[u, s, a, t]) for t in np.flatnonzero(P[u, s, a] > 0)})
                nxt_u.append(nxt_s)
                rew_u.append(rew_s)
            self.next.append(nxt_u)
            self.reward.append(rew_u)
        self.context = _cum(env.context_dist)
        self.start = _cum(env.initial)


def _cum(p: np.ndarray) -> tuple[list[float], list[int]]:
    """Support and cumulative probabilities with the last entry pinned to 1."""
    idx = [int(i) for i in np.flatnonzero(p > 0)]
    cum = np.cumsum(p[idx]).tolist()
    cum[-1] = 1.0
    return cum, idx


def _pick(table: tuple[list[float], list[int]], x: float) -> int:
    cum, idx = table
    if len(idx) == 1:
        return idx[0]
    return idx[min(bisect_right(cum, x), len(idx) - 1)]


def _run(env: ContextualMdp, cfg: LearnerConfig, lower: np.ndarray | None,
         upper: np.ndarray | None, optimistic: bool) -> LearnerResult:
    S, A = env.n_states, env.n_actions
    g = env.gamma if cfg.gamma is None else cfg.gamma
    r_lo, r_hi = min(env.reward_values), max(env.reward_values)
    if cfg.q_init is not None:
        init = cfg.q_init
    else:
        init = r_hi / (1.0 - g) if optimistic else 0.0
    q = [[float(init)] * A for _ in range(S)]
    n = [[0] * A for _ in range(S)]
    lo = None if lower is None else np.asarray(lower, float).tolist()
    hi = None if upper is None else np.asarray(upper, float).tolist()
    sampler = _Sampler(env)
    values = sampler.values
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.epsilon
    iota = math.log(S * A * max(cfg.episodes, 1) * cfg.horizon / cfg.delta)
    cb = cfg.bonus_scale
    s0 = int(np.argmax(env.initial))
    curve = LearningCurve(cfg.seed)
    violations = 0
    sched = cfg.step_size
    per_step = cfg.context == "step"
    # A fixed number of uniforms per step keeps runs aligned across variants.
    width = 5 if per_step else 4

    def checkpoint(ep: int) -> None:
        vals = {"v_hat": max(q[s0])}
        if cfg.eval_episodes:
            pol = np.zeros((S, A))
            pol[np.arange(S), np.array(q).argmax(axis=1)] = 1.0
            ev_rng = np.random.default_rng([cfg.seed, ep])
            vals["mc_return"] = evaluate_policy(env, pol, cfg.eval_episodes,
                                                cfg.horizon, ev_rng, gamma=g,
                                                resample_context=per_step)[0]
        curve.record(ep, **vals)

    if cfg.episodes:  # a zero-episode run has an empty curve
        checkpoint(0)
    for ep in range(1, cfg.episodes + 1):
        head = rng.random(2)
        u = _pick(sampler.context, head[0])
        s = _pick(sampler.start, head[1])
        nxt_u, rew_u = sampler.next[u], sampler.reward[u]
        for x_eps, x_act, x_next, x_rew, *x_ctx in rng.random((cfg.horizon, width)).tolist():
            if per_step:
                u = _pick(sampler.context, x_ctx[0])
                nxt_u, rew_u = sampler.next[u], sampler.reward[u]
            row = q[s]
            if not optimistic and x_eps < eps:
                a = min(int(x_act * A), A - 1)
            else:
                a = row.index(max(row))
            s2 = _pick(nxt_u[s][a], x_next)
            r = values[_pick(rew_u[s][a][s2], x_rew)]
            k = n[s][a] + 1
            n[s][a] = k
            alpha = sched(k)
            target = r + g * max(q[s2])
            if optimistic:
                target += cb * math.sqrt(iota / k)
            v = (1.0 - alpha) * row[a] + alpha * target
            if hi is not None and v > hi[s][a]:
                v = hi[s][a]
            if lo is not None and v < lo[s][a]:
                v = lo[s][a]
            if hi is not None and v > hi[s][a]:
                violations += 1
            row[a] = v
            s = s2
        if ep % cfg.checkpoint_every == 0 or ep == cfg.episodes:
            checkpoint(ep)
    return LearnerResult(np.array(q), curve, np.array(n), violations)


def _bounds_arrays(bounds: QBoundTable | None, env: ContextualMdp):
    if bounds is None:
        return None, None
    shape = (env.n_states, env.n_actions)
    if bounds.lo.shape != shape:
        raise ValueError(f"bounds have shape {bounds.lo.shape}, expected {shape}")
    return bounds.lo, bounds.hi


def run_q_learning(env: ContextualMdp, cfg: LearnerConfig) -> LearnerResult:
    """Plain epsilon-greedy Q learning, Q initialized at 0."""
    return _run(env, cfg, None, None, optimistic=False)


def run_cbc_q(env: ContextualMdp, cfg: LearnerConfig,
              bounds: QBoundTable | None) -> LearnerResult:
    """Q learning with every update projected onto the causal Q bounds."""
    lo, hi = _bounds_arrays(bounds, env)
    return _run(env, cfg, lo, hi, optimistic=False)


def run_ucb_q(env: ContextualMdp, cfg: LearnerConfig) -> LearnerResult:
    """Greedy-in-Q_U learning with a visit-count bonus, Q_U starting at R_max/(1-gamma)."""
    return _run(env, cfg, None, None, optimistic=True)


def run_cb_ucb_q(env: ContextualMdp, cfg: LearnerConfig,
                 bounds: QBoundTable | None) -> LearnerResult:
    """UCB-Q with each updated entry capped at the causal upper bound."""
    _, hi = _bounds_arrays(bounds, env)
    return _run(env, cfg, None, hi, optimistic=True)


def evaluate_policy(env: ContextualMdp, policy: np.ndarray, episodes: int, horizon: int,
                    rng: np.random.Generator, gamma: float | None = None,
                    resample_context: bool = False) -> tuple[float, float]:
    """Monte-Carlo discounted return from the start law: ``(mean, stderr)``."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    g = env.gamma if gamma is None else gamma
    batch = simulate_batch(env, policy, episodes, horizon, rng,
                           resample_context=resample_context)
    ret = batch.discounted_returns(g)
    err = float(ret.std(ddof=1) / math.sqrt(episodes)) if episodes > 1 else float("nan")
    return float(ret.mean()), err


def write_curves_csv(path: str | Path, curves) -> None:
    """Long-format CSV ``seed, episode, metric, value``; values use ``repr``
    so re-runs are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for c in curves:
            for seed, ep, name, v in c.rows():
                w.writerow([seed, ep, name, repr(float(v))])


def read_curves_csv(path: str | Path) -> list[LearningCurve]:
    by_seed: dict[int, dict[int, dict[str, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            d = by_seed.setdefault(int(row["seed"]), {})
            d.setdefault(int(row["episode"]), {})[row["metric"]] = float(row["value"])
    curves = []
    for seed in sorted(by_seed):
        c = LearningCurve(seed)
        for ep in sorted(by_seed[seed]):
            c.record(ep, **by_seed[seed][ep])
        curves.append(c)
    return curves


def with_seed(cfg: LearnerConfig, seed: int) -> LearnerConfig:
    return replace(cfg, seed=seed)
