"""Partial-identification bounds on do-effects from confounded joints.

The demonstrator's joint ``P(o, a)`` at a state (``o`` a reward value or a
next state) is explained by a latent pair ``(U_a, U_o)``: ``U_a`` is the
action the demonstrator would pick, ``U_o`` indexes a deterministic response
mapping ``f(., j)`` from actions to outcomes. Any distribution
``q[i, j] = P(U_a = i, U_o = j)`` consistent with the joint gives one
candidate ``P(o | do(a)) = sum_i sum_{j : f(a, j) = o} q[i, j]``; the bounds
are the extremes of a linear objective over that polytope.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from . import lp
from .demonstrator import ObservationalDistribution
from .mdp import Mdp
from .value_bounds import BoundedMdpModel

__all__ = [
    "MAX_MAPPINGS",
    "InconsistentDataError",
    "TooManyMappingsError",
    "ResponseMappings",
    "CausalInterval",
    "Priors",
    "index_set",
    "project_joint",
    "do_effect_program",
    "reward_do_bounds",
    "transition_do_bounds",
    "critical_pairs",
    "priors_from_model",
    "bound_all",
]

MAX_MAPPINGS = 2 ** 20
PROJECTION_TOL = 1e-9


class InconsistentDataError(ValueError):
    """The observational joint and the priors admit no latent distribution."""


class TooManyMappingsError(ValueError):
    """The response-mapping enumeration exceeds the configured cap."""


@dataclass(frozen=True)
class ResponseMappings:
    """All ``n_outcomes ** n_actions`` maps from actions to outcomes.

    Mapping ``j`` is the mixed-radix expansion of ``j`` with the last
    action as the fastest digit: ``f(a, j) = (j // n_o**(n_a - 1 - a)) % n_o``.
    """

    n_actions: int
    n_outcomes: int

    def __post_init__(self):
        if self.n_actions < 1 or self.n_outcomes < 1:
            raise ValueError("need at least one action and one outcome")

    @property
    def size(self) -> int:
        return self.n_outcomes ** self.n_actions

    def outcome(self, a: int, j: int) -> int:
        return (j // self.n_outcomes ** (self.n_actions - 1 - a)) % self.n_outcomes

    @cached_property
    def table(self) -> np.ndarray:
        """``(n_actions, size)`` array with ``table[a, j] = f(a, j)``."""
        j = np.arange(self.size)
        powers = self.n_outcomes ** np.arange(self.n_actions - 1, -1, -1)
        return (j[None, :] // powers[:, None]) % self.n_outcomes

    def index_set(self, outcome: int, a: int) -> np.ndarray:
        return np.flatnonzero(self.table[a] == outcome)


def index_set(mappings: ResponseMappings, outcome: int, a: int) -> np.ndarray:
    """Indices ``j`` of the mappings that send action ``a`` to ``outcome``."""
    return mappings.index_set(outcome, a)


@dataclass(frozen=True)
class CausalInterval:
    lo: float
    hi: float
    kind: str = "reward"
    state: int | None = None
    action: int | None = None
    next_state: int | None = None

    def __post_init__(self):
        if self.kind not in ("reward", "transition"):
            raise ValueError(f"unknown interval kind {self.kind!r}")
        lo, hi = float(self.lo), float(self.hi)
        if lo > hi + 1e-9:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        hi = max(lo, hi)
        if self.kind == "transition":
            lo, hi = min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = 1e-9) -> bool:
        return self.lo - tol <= x <= self.hi + tol


@dataclass(frozen=True)
class Priors:
    """Known do-distributions, keyed by ``(state, action)``.

    ``reward[(s, m)]`` maps reward values to ``P(r | s, do(m))``;
    ``transition[(s, m)]`` maps next-state indices to ``P(s' | s, do(m))``.
    """

    reward: Mapping[tuple[int, int], Mapping[float, float]] = None
    transition: Mapping[tuple[int, int], Mapping[int, float]] = None

    def __post_init__(self):
        for name in ("reward", "transition"):
            table = dict(getattr(self, name) or {})
            for key, dist in table.items():
                if abs(sum(dist.values()) - 1.0) > 1e-9 or min(dist.values()) < 0:
                    raise ValueError(f"{name} prior at {key} is not a distribution")
            object.__setattr__(self, name, table)

    def reward_at(self, s: int) -> dict[int, Mapping[float, float]]:
        return {m: d for (t, m), d in self.reward.items() if t == s}

    def transition_at(self, s: int) -> dict[int, Mapping[int, float]]:
        return {m: d for (t, m), d in self.transition.items() if t == s}


def project_joint(joint, tol: float = PROJECTION_TOL) -> np.ndarray:
    """Clip tiny negatives and renormalize a noisy joint table."""
    p = np.asarray(joint, float)
    if np.any(p < -tol):
        raise InconsistentDataError("joint has materially negative entries")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        raise InconsistentDataError("joint has no mass")
    return p / total


def do_effect_program(joint: np.ndarray, values: np.ndarray, action: int,
                      priors: Mapping[int, np.ndarray] | None = None,
                      max_mappings: int = MAX_MAPPINGS) -> lp.LinearProgram:
    """Linear program for ``sum_o values[o] P(o | do(action))``.

    ``joint`` is ``(N_o, N_a)`` with ``joint[o, a] = P(o, a)``. ``priors``
    maps other actions ``m`` to a known ``(N_o,)`` vector ``P(o | do(m))``.
    Variables are ``q[i, j]`` flattened row-major; there are
    ``N_a * N_o ** N_a`` of them. The objective sense is left to the caller.
    """
    n_o, n_a = joint.shape
    maps = ResponseMappings(n_a, n_o)
    if maps.size > max_mappings:
        raise TooManyMappingsError(
            f"{n_o}**{n_a} = {maps.size} response mappings exceeds the cap {max_mappings}"
        )
    J = maps.size
    f = maps.table
    rows, rhs = [], []
    # Observational consistency: sum_{j : f(a', j) = o} q[a', j] = P(o, a').
    for a2 in range(n_a):
        for o in range(n_o):
            row = np.zeros((n_a, J))
            row[a2, f[a2] == o] = 1.0
            rows.append(row.ravel())
            rhs.append(joint[o, a2])
    rows.append(np.ones(n_a * J))
    rhs.append(1.0)
    for m, dist in (priors or {}).items():
        dist = np.asarray(dist, float)
        for o in range(n_o):
            row = np.zeros((n_a, J))
            row[:, f[m] == o] = 1.0
            rows.append(row.ravel())
            rhs.append(dist[o])
    c = np.tile(np.asarray(values, float)[f[action]], n_a)
    return lp.LinearProgram(c, np.array(rows), np.array(rhs))


def _solve_bounds(joint, values, action, priors, max_mappings, tol):
    program = do_effect_program(joint, values, action, priors, max_mappings)
    try:
        lo = lp.solve(program, tol).value
        hi = lp.solve(lp.LinearProgram(program.c, program.A_eq, program.b_eq,
                                       maximize=True), tol).value
    except lp.Infeasible as exc:
        raise InconsistentDataError("inconsistent observational/prior data") from exc
    return lo, hi


def reward_do_bounds(joint, values, action: int,
                     priors: Mapping[int, Mapping[float, float]] | None = None, *,
                     max_mappings: int = MAX_MAPPINGS, tol: float = 1e-9,
                     state: int | None = None) -> CausalInterval:
    """Bounds on ``E[r | do(action)]`` at one state.

    ``joint`` is ``(K, A)`` with ``joint[k, a] = P(r = values[k], a)``.
    ``priors`` maps other actions to ``{reward value: probability}``; prior
    values must belong to ``values``.
    """
    values = np.asarray(values, float)
    joint = project_joint(joint)
    prior_vecs = {}
    for m, dist in (priors or {}).items():
        if m == action:
            continue
        vec = np.zeros(len(values))
        for r, p in dist.items():
            hit = np.flatnonzero(np.isclose(values, r, rtol=0.0, atol=1e-9))
            if hit.size == 0:
                raise ValueError(f"prior reward {r} outside the outcome support")
            vec[hit[0]] += p
        prior_vecs[m] = vec
    lo, hi = _solve_bounds(joint, values, action, prior_vecs, max_mappings, tol)
    return CausalInterval(lo, hi, "reward", state, action)


def transition_do_bounds(joint, action: int, target: int,
                         priors: Mapping[int, Mapping[int, float]] | None = None, *,
                         successors: Iterable[int] | None = None,
                         max_mappings: int = MAX_MAPPINGS, tol: float = 1e-9,
                         state: int | None = None) -> CausalInterval:
    """Bounds on ``P(target | do(action))`` at one state.

    ``joint`` is ``(N_o, A)`` over the outcome space ``successors`` (row
    ``o`` is next state ``successors[o]``; defaults to ``range(N_o)``).
    ``target`` and prior keys are next-state labels from ``successors``.
    """
    joint = project_joint(joint)
    labels = list(range(joint.shape[0]) if successors is None else successors)
    if len(labels) != joint.shape[0]:
        raise ValueError("successors must label every row of the joint")
    pos = {t: i for i, t in enumerate(labels)}
    if target not in pos:
        # Never observed under any action: only the unexplained mass can reach it.
        raise ValueError(f"target {target} is not in the outcome space")
    values = np.zeros(len(labels))
    values[pos[target]] = 1.0
    prior_vecs = {}
    for m, dist in (priors or {}).items():
        if m == action:
            continue
        vec = np.zeros(len(labels))
        for t, p in dist.items():
            if t not in pos:
                raise ValueError(f"prior successor {t} outside the outcome space")
            vec[pos[t]] += p
        prior_vecs[m] = vec
    lo, hi = _solve_bounds(joint, values, action, prior_vecs, max_mappings, tol)
    return CausalInterval(lo, hi, "transition", state, action, target)


def critical_pairs(obs: ObservationalDistribution, tol: float = 1e-12
                   ) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Pairs whose observed outcome is not a single value.

    Returns ``(reward_pairs, transition_pairs)``: the ``(s, a)`` with more
    than one observed reward value, respectively next state. Actions never
    taken at a visited state are included, since nothing pins them down.
    """
    rew, tra = [], []
    for s in range(obs.n_states):
        if not obs.has_data(s):
            continue
        for a in range(obs.n_actions):
            r_col = obs.reward_joint[s, :, a]
            t_col = obs.transition_joint[s, :, a]
            if r_col.sum() <= tol or np.count_nonzero(r_col > tol) > 1:
                rew.append((s, a))
            if t_col.sum() <= tol or np.count_nonzero(t_col > tol) > 1:
                tra.append((s, a))
    return rew, tra


def priors_from_model(mdp: Mdp, pairs: Iterable[tuple[int, int]], tol: float = 1e-12
                      ) -> Priors:
    """Exact do-distributions of ``mdp`` at ``pairs``, packaged as priors."""
    reward, transition = {}, {}
    rd = mdp.reward_dist
    for s, a in pairs:
        reward[(s, a)] = {float(mdp.reward_values[k]): float(p)
                          for k, p in enumerate(rd[s, a]) if p > tol}
        transition[(s, a)] = {int(t): float(p)
                              for t, p in enumerate(mdp.transition[s, a]) if p > tol}
    return Priors(_renorm(reward), _renorm(transition))


def _renorm(table):
    out = {}
    for key, dist in table.items():
        z = sum(dist.values())
        out[key] = {k: v / z for k, v in dist.items()}
    return out


def _observed(col_sums: np.ndarray, tol: float) -> np.ndarray:
    return np.flatnonzero(col_sums > tol)


def bound_all(obs: ObservationalDistribution, gamma: float,
              reward_range: tuple[float, float], *,
              pairs: str | Iterable[tuple[int, int]] = "heuristic",
              priors: Priors | None = None,
              max_mappings: int = MAX_MAPPINGS, tol: float = 1e-9,
              support_tol: float = 1e-12) -> BoundedMdpModel:
    """Assemble an interval model for every ``(s, a)``.

    States without data get the vacuous intervals ``[R_lo, R_hi]`` and
    ``[0, 1]``. At visited states the outcome space is the set of reward
    values (next states) observed there under any action, plus the support
    of any priors. ``pairs`` selects where the do-effect programs are
    solved:

    ``"all"``
        every pair at every visited state;
    ``"heuristic"``
        pairs whose observed outcome varies (see :func:`critical_pairs`);
    list of ``(s, a)``
        exactly those pairs.

    Remaining pairs at visited states are taken at their observed
    conditional, i.e. treated as unconfounded.
    """
    priors = priors or Priors()
    S, A = obs.n_states, obs.n_actions
    R_lo, R_hi = (float(x) for x in reward_range)
    values = obs.reward_values
    if values.min() < R_lo - tol or values.max() > R_hi + tol:
        raise ValueError("reward_range must cover the reward support")
    r_lo = np.full((S, A), R_lo)
    r_hi = np.full((S, A), R_hi)
    p_lo = np.zeros((S, A, S))
    p_hi = np.ones((S, A, S))

    if isinstance(pairs, str):
        if pairs == "all":
            visited = [(s, a) for s in range(S) if obs.has_data(s) for a in range(A)]
            rew_pairs, tra_pairs = set(visited), set(visited)
        elif pairs == "heuristic":
            rp, tp = critical_pairs(obs, support_tol)
            rew_pairs, tra_pairs = set(rp), set(tp)
        else:
            raise ValueError(f"unknown pair selection {pairs!r}")
    else:
        rew_pairs = tra_pairs = set((int(s), int(a)) for s, a in pairs)

    pa = obs.action_marginal()
    for s in range(S):
        if not obs.has_data(s):
            continue
        r_prior = priors.reward_at(s)
        t_prior = priors.transition_at(s)
        # Outcome spaces observed at this state.
        ks = set(_observed(obs.reward_joint[s].sum(axis=1), support_tol))
        for dist in r_prior.values():
            for r in dist:
                ks.add(int(np.abs(values - r).argmin()))
        ks = sorted(ks)
        succ = set(_observed(obs.transition_joint[s].sum(axis=1), support_tol))
        for dist in t_prior.values():
            succ.update(int(t) for t in dist)
        succ = sorted(succ)
        r_joint = obs.reward_joint[s][ks]
        t_joint = obs.transition_joint[s][succ]
        p_hi[s] = 0.0

        for a in range(A):
            known_r = r_prior.get(a)
            if known_r is not None:
                r = sum(v * p for v, p in known_r.items())
                r_lo[s, a] = r_hi[s, a] = r
            elif (s, a) in rew_pairs or pa[s, a] <= support_tol:
                iv = reward_do_bounds(r_joint, values[ks], a, r_prior,
                                      max_mappings=max_mappings, tol=tol, state=s)
                r_lo[s, a], r_hi[s, a] = iv.lo, iv.hi
            else:
                r = values @ obs.reward_joint[s, :, a] / pa[s, a]
                r_lo[s, a] = r_hi[s, a] = r

            known_t = t_prior.get(a)
            if known_t is not None:
                for t, p in known_t.items():
                    p_lo[s, a, t] = p_hi[s, a, t] = p
            elif (s, a) in tra_pairs or pa[s, a] <= support_tol:
                for t in succ:
                    iv = transition_do_bounds(t_joint, a, t, t_prior, successors=succ,
                                              max_mappings=max_mappings, tol=tol, state=s)
                    p_lo[s, a, t], p_hi[s, a, t] = iv.lo, iv.hi
            else:
                cond = obs.transition_joint[s, :, a] / pa[s, a]
                p_lo[s, a] = p_hi[s, a] = cond
    return BoundedMdpModel(r_lo, r_hi, p_lo, p_hi, gamma, (R_lo, R_hi))

