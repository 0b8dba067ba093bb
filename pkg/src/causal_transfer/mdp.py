"""Finite MDPs, contextual MDPs, planning and simulation.

Rewards are kept as full distributions over a shared finite support so the
observational joints P(r, a | s) can be formed exactly. A reward is drawn on
arrival, conditioned on (s, a, s'); ``Mdp.reward_dist`` gives the
distribution given (s, a) alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Space",
    "Mdp",
    "ContextualMdp",
    "EpisodeLog",
    "EpisodeBatch",
    "greedy_policy",
    "value_iteration",
    "bellman_residual",
    "q_from_v",
    "marginalize",
    "simulate_episode",
    "simulate_batch",
    "policy_value",
    "as_context_policy",
]

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class Space:
    """Dense index set ``0..size-1`` with optional labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("a space needs at least one element")
        if self.labels is not None:
            if len(self.labels) != self.size:
                raise ValueError("one label per index is required")
            object.__setattr__(self, "labels", tuple(self.labels))

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels else str(i)

    def index(self, label: str) -> int:
        if self.labels is None:
            return int(label)
        return self.labels.index(label)


def _check_stochastic(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    err = np.abs(arr.sum(axis=-1) - 1.0)
    if err.size and err.max() > STOCHASTIC_TOL:
        raise ValueError(f"{name} rows must sum to 1 (max error {err.max():.2e})")


@dataclass(frozen=True, eq=False)
class Mdp:
    """Discounted finite MDP.

    Parameters
    ----------
    transition : (S, A, S) array
        ``transition[s, a, s2] = P(s2 | s, a)``.
    reward_values : (K,) array
        Finite reward support shared by all transitions.
    reward_probs : (S, A, S, K) array
        Distribution of the reward received on the arrival ``s -> s2``.
    gamma : float
    initial : (S,) array
        Start-state distribution.
    """

    transition: np.ndarray
    reward_values: np.ndarray
    reward_probs: np.ndarray
    gamma: float
    initial: np.ndarray
    states: Space | None = None
    actions: Space | None = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        R = np.asarray(self.reward_probs, dtype=float)
        v = np.asarray(self.reward_values, dtype=float).ravel()
        rho = np.asarray(self.initial, dtype=float).ravel()
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("transition must have shape (S, A, S)")
        S, A, _ = P.shape
        if R.shape != (S, A, S, len(v)):
            raise ValueError(f"reward_probs must have shape {(S, A, S, len(v))}")
        if rho.shape != (S,):
            raise ValueError("initial must have one entry per state")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        _check_stochastic(P, "transition")
        _check_stochastic(R, "reward_probs")
        _check_stochastic(rho, "initial")
        for name, arr in (("transition", P), ("reward_probs", R),
                          ("reward_values", v), ("initial", rho)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "states", self.states or Space(S))
        object.__setattr__(self, "actions", self.actions or Space(A))
        if self.states.size != S or self.actions.size != A:
            raise ValueError("space sizes disagree with the tables")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def reward_dist(self) -> np.ndarray:
        """(S, A, K) reward distribution given (s, a)."""
        return np.einsum("ijk,ijkl->ijl", self.transition, self.reward_probs)

    @property
    def expected_reward(self) -> np.ndarray:
        """(S, A) table of E[r | s, a]."""
        return self.reward_dist @ self.reward_values

    @property
    def reward_range(self) -> tuple[float, float]:
        return float(self.reward_values.min()), float(self.reward_values.max())


@dataclass(frozen=True, eq=False)
class ContextualMdp:
    """One MDP per context value, sharing spaces, discount and start law."""

    per_context: tuple[Mdp, ...]
    context_dist: np.ndarray
    contexts: Space | None = None

    def __post_init__(self):
        mdps = tuple(self.per_context)
        rho = np.asarray(self.context_dist, dtype=float).ravel()
        if not mdps:
            raise ValueError("at least one context is required")
        if rho.shape != (len(mdps),):
            raise ValueError("context_dist needs one entry per context")
        _check_stochastic(rho, "context_dist")
        first = mdps[0]
        for m in mdps[1:]:
            if m.transition.shape != first.transition.shape:
                raise ValueError("contexts must share state and action spaces")
            if m.gamma != first.gamma:
                raise ValueError("contexts must share gamma")
            if not np.array_equal(m.initial, first.initial):
                raise ValueError("contexts must share the start distribution")
            if not np.array_equal(m.reward_values, first.reward_values):
                raise ValueError("contexts must share the reward support")
        rho.setflags(write=False)
        object.__setattr__(self, "per_context", mdps)
        object.__setattr__(self, "context_dist", rho)
        object.__setattr__(self, "contexts", self.contexts or Space(len(mdps)))

    @property
    def n_contexts(self) -> int:
        return len(self.per_context)

    @property
    def n_states(self) -> int:
        return self.per_context[0].n_states

    @property
    def n_actions(self) -> int:
        return self.per_context[0].n_actions

    @property
    def gamma(self) -> float:
        return self.per_context[0].gamma

    @property
    def initial(self) -> np.ndarray:
        return self.per_context[0].initial

    @property
    def reward_values(self) -> np.ndarray:
        return self.per_context[0].reward_values

    @property
    def states(self) -> Space:
        return self.per_context[0].states

    @property
    def actions(self) -> Space:
        return self.per_context[0].actions

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """(U, S, A, S) transitions and (U, S, A, S, K) reward laws."""
        P = np.stack([m.transition for m in self.per_context])
        R = np.stack([m.reward_probs for m in self.per_context])
        return P, R


def greedy_policy(q: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """One-hot policy picking the lowest-index action within ``atol`` of the max."""
    q = np.asarray(q, dtype=float)
    best = q.max(axis=-1, keepdims=True)
    idx = np.argmax(q >= best - atol, axis=-1)
    return np.eye(q.shape[-1])[idx]


def q_from_v(mdp: Mdp, v: np.ndarray) -> np.ndarray:
    """Q(s, a) = E[r | s, a] + gamma * sum_s2 P(s2 | s, a) v(s2)."""
    return mdp.expected_reward + mdp.gamma * mdp.transition @ np.asarray(v, float)


def bellman_residual(mdp: Mdp, v: np.ndarray) -> float:
    return float(np.abs(q_from_v(mdp, v).max(axis=1) - v).max())


def value_iteration(mdp: Mdp, tol: float = 1e-10, max_iter: int = 1_000_000
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Optimal values and a greedy deterministic policy.

    Iterates until successive sweeps differ by at most ``tol`` in the sup
    norm, which bounds the Bellman residual of the returned values by
    ``gamma * tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = mdp.expected_reward
    P = mdp.transition
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        v_new = (r + mdp.gamma * P @ v).max(axis=1)
        delta = np.abs(v_new - v).max()
        v = v_new
        if delta <= tol:
            break
    else:
        raise RuntimeError("value iteration did not converge")
    return v, greedy_policy(q_from_v(mdp, v))


def marginalize(cmdp: ContextualMdp) -> Mdp:
    """The context-averaged MDP a context-blind agent actually faces."""
    if cmdp.n_contexts == 1:
        return cmdp.per_context[0]
    rho = cmdp.context_dist
    P, R = cmdp.stacked()
    P_bar = np.einsum("u,uijk->ijk", rho, P)
    joint = np.einsum("u,uijk,uijkl->ijkl", rho, P, R)
    prior = np.einsum("u,uijkl->ijkl", rho, R)
    with np.errstate(invalid="ignore", divide="ignore"):
        R_bar = joint / P_bar[..., None]
    R_bar = np.where(P_bar[..., None] > 0, R_bar, prior)
    R_bar /= R_bar.sum(axis=-1, keepdims=True)
    first = cmdp.per_context[0]
    return Mdp(P_bar, first.reward_values, R_bar, first.gamma, first.initial,
               first.states, first.actions)


@dataclass(frozen=True, eq=False)
class EpisodeLog:
    """Transitions ``(s_t, a_t, s_{t+1}, r_t)`` of one episode.

    The context is kept for diagnostics but is never part of ``tuples()``
    or any export.
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    _context: int = field(repr=False, default=-1)

    def __len__(self) -> int:
        return len(self.states)

    def tuples(self) -> list[tuple[int, int, int, float]]:
        return list(zip(self.states.tolist(), self.actions.tolist(),
                        self.next_states.tolist(), self.rewards.tolist()))

    def discounted_return(self, gamma: float) -> float:
        return float(self.rewards @ gamma ** np.arange(len(self.rewards)))


@dataclass(frozen=True, eq=False)
class EpisodeBatch:
    """K episodes of length T as (K, T) arrays; ``contexts`` is internal."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    reward_index: np.ndarray
    rewards: np.ndarray
    contexts: np.ndarray = field(repr=False)

    def discounted_returns(self, gamma: float) -> np.ndarray:
        return self.rewards @ gamma ** np.arange(self.rewards.shape[1])


def _as_context_policy(policy: np.ndarray, n_contexts: int) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.ndim == 2:
        pi = np.broadcast_to(pi, (n_contexts,) + pi.shape)
    if pi.ndim != 3 or pi.shape[0] != n_contexts:
        raise ValueError("policy must be (S, A) or (U, S, A)")
    _check_stochastic(pi, "policy")
    return pi


def _cdf(p: np.ndarray) -> np.ndarray:
    # Entries within rounding of the total are pinned to 1 so a uniform in
    # [0, 1) can never land on a trailing zero-probability outcome.
    c = np.cumsum(p, axis=-1)
    return np.where(c >= c[..., -1:] - 1e-12, 1.0, c)


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling along the last axis of ``cdf``."""
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def simulate_batch(cmdp: ContextualMdp, policy: np.ndarray, episodes: int,
                   horizon: int, rng: np.random.Generator,
                   initial: np.ndarray | None = None,
                   resample_context: bool = False) -> EpisodeBatch:
    """Simulate many episodes in lockstep.

    A context is drawn per episode from ``cmdp.context_dist`` and held fixed
    for ``horizon`` steps. With ``resample_context`` a fresh context is drawn
    at every step instead, which makes the dynamics exactly those of
    :func:`marginalize` (``contexts`` is then ``(K, T)``). ``policy`` is
    either context-free ``(S, A)`` or context-aware ``(U, S, A)``.
    ``initial`` overrides the start law.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    P, R = cmdp.stacked()
    pi = _as_context_policy(policy, cmdp.n_contexts)
    start = cmdp.initial if initial is None else np.asarray(initial, float)
    P_cdf, R_cdf, pi_cdf = _cdf(P), _cdf(R), _cdf(pi)

    K, T = episodes, horizon
    ctx_cdf = _cdf(cmdp.context_dist)[None, :].repeat(K, 0)
    u = _draw(ctx_cdf, rng.random(K))
    s = _draw(_cdf(start)[None, :].repeat(K, 0), rng.random(K))
    out = {k: np.empty((K, T), dtype=int)
           for k in ("states", "actions", "next_states", "reward_index")}
    contexts = np.empty((K, T), dtype=int) if resample_context else u
    for t in range(T):
        if resample_context:
            u = _draw(ctx_cdf, rng.random(K))
            contexts[:, t] = u
        draws = rng.random((3, K))
        a = _draw(pi_cdf[u, s], draws[0])
        s2 = _draw(P_cdf[u, s, a], draws[1])
        k = _draw(R_cdf[u, s, a, s2], draws[2])
        out["states"][:, t] = s
        out["actions"][:, t] = a
        out["next_states"][:, t] = s2
        out["reward_index"][:, t] = k
        s = s2
    rewards = cmdp.reward_values[out["reward_index"]]
    return EpisodeBatch(rewards=rewards, contexts=contexts, **out)


def simulate_episode(cmdp: ContextualMdp, policy: np.ndarray, horizon: int,
                     rng: np.random.Generator) -> EpisodeLog:
    """One episode; a thin wrapper over :func:`simulate_batch`."""
    b = simulate_batch(cmdp, policy, 1, horizon, rng)
    return EpisodeLog(b.states[0], b.actions[0], b.next_states[0],
                      b.rewards[0], int(b.contexts[0]))


def policy_value(mdp: Mdp, policy: np.ndarray) -> np.ndarray:
    """Exact discounted value of a stationary policy."""
    pi = np.asarray(policy, dtype=float)
    P_pi = np.einsum("ij,ijk->ik", pi, mdp.transition)
    r_pi = np.einsum("ij,ij->i", pi, mdp.expected_reward)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)


def as_context_policy(policy: np.ndarray, n_contexts: int) -> np.ndarray:
    """Broadcast a context-free policy to ``(U, S, A)``."""
    return np.array(_as_context_policy(policy, n_contexts))
