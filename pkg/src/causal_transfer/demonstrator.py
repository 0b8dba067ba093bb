"""Context-aware demonstrator and the observational data it leaves behind.

The learner only ever sees per-state joints ``P(r, a | s)`` and
``P(s', a | s)``; the context that drove the demonstrator's choices is
marginalized out.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import ContextualMdp, Mdp, as_context_policy, greedy_policy, simulate_batch, value_iteration

__all__ = [
    "DATASET_FORMAT",
    "JOINT_FORMAT",
    "UnobservedActionError",
    "ObservationalDistribution",
    "contextual_optimal_policy",
    "epsilon_greedy",
    "tabulated_policy",
    "collect_observations",
    "analytic_observational",
    "naive_estimates",
    "naive_mdp",
    "write_dataset_csv",
    "read_dataset_csv",
]

DATASET_FORMAT = "causal_transfer.dataset/1"
JOINT_FORMAT = "causal_transfer.joints/1"


class UnobservedActionError(ValueError):
    """A conditional was requested for an action the demonstrator never took."""


@dataclass(frozen=True, eq=False)
class ObservationalDistribution:
    """Per-state observational joints.

    Attributes
    ----------
    reward_values : (K,) array
    reward_joint : (S, K, A) array
        ``reward_joint[s, k, a] = P(r = reward_values[k], a | s)``.
    transition_joint : (S, S, A) array
        ``transition_joint[s, s2, a] = P(s2, a | s)``.
    visits : (S,) array or None
        Sample counts per state; ``None`` for exact (population) joints.
    """

    reward_values: np.ndarray
    reward_joint: np.ndarray
    transition_joint: np.ndarray
    visits: np.ndarray | None = None
    raw: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        rj = np.asarray(self.reward_joint, float)
        tj = np.asarray(self.transition_joint, float)
        if rj.ndim != 3 or tj.ndim != 3 or rj.shape[0] != tj.shape[0]:
            raise ValueError("joint tables have inconsistent shapes")
        if np.any(rj < 0) or np.any(tj < 0):
            raise ValueError("joint tables must be non-negative")
        object.__setattr__(self, "reward_joint", rj)
        object.__setattr__(self, "transition_joint", tj)
        object.__setattr__(self, "reward_values", np.asarray(self.reward_values, float))

    @property
    def n_states(self) -> int:
        return self.reward_joint.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward_joint.shape[2]

    def has_data(self, s: int) -> bool:
        if self.visits is None:
            return bool(self.reward_joint[s].sum() > 0)
        return bool(self.visits[s] > 0)

    def action_marginal(self) -> np.ndarray:
        """(S, A) table of P(a | s)."""
        return self.reward_joint.sum(axis=1)

    def to_dict(self) -> dict:
        doc = {
            "format": JOINT_FORMAT,
            "reward_values": self.reward_values.tolist(),
            "states": [],
        }
        for s in range(self.n_states):
            if not self.has_data(s):
                continue
            doc["states"].append({
                "state": s,
                "visits": None if self.visits is None else int(self.visits[s]),
                "reward_action": self.reward_joint[s].tolist(),
                "next_state_action": {
                    str(s2): row.tolist()
                    for s2, row in enumerate(self.transition_joint[s])
                    if row.any()
                },
            })
        doc["n_states"] = self.n_states
        doc["n_actions"] = self.n_actions
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ObservationalDistribution":
        if doc.get("format") != JOINT_FORMAT:
            raise ValueError(f"unsupported joint-table format {doc.get('format')!r}")
        S, A = int(doc["n_states"]), int(doc["n_actions"])
        values = np.asarray(doc["reward_values"], float)
        rj = np.zeros((S, len(values), A))
        tj = np.zeros((S, S, A))
        visits = np.zeros(S)
        exact = False
        for entry in doc["states"]:
            s = int(entry["state"])
            rj[s] = entry["reward_action"]
            for s2, row in entry["next_state_action"].items():
                tj[s, int(s2)] = row
            if entry["visits"] is None:
                exact = True
            else:
                visits[s] = entry["visits"]
        return cls(values, rj, tj, None if exact else visits)

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load_json(cls, path: str | Path) -> "ObservationalDistribution":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_counts(cls, reward_values, reward_counts, transition_counts, raw=None):
        visits = reward_counts.sum(axis=(1, 2))
        denom = np.where(visits > 0, visits, 1.0)
        return cls(
            reward_values,
            reward_counts / denom[:, None, None],
            transition_counts / denom[:, None, None],
            visits,
            raw,
        )

    @classmethod
    def from_tuples(cls, tuples, n_states: int, n_actions: int,
                    reward_values) -> "ObservationalDistribution":
        """Sufficient statistics from ``(s, a, s_next, r)`` rows."""
        values = np.asarray(reward_values, float)
        data = np.asarray(tuples, float).reshape(-1, 4)
        s = data[:, 0].astype(int)
        a = data[:, 1].astype(int)
        s2 = data[:, 2].astype(int)
        k = _reward_index(values, data[:, 3])
        rc = np.zeros((n_states, len(values), n_actions))
        tc = np.zeros((n_states, n_states, n_actions))
        np.add.at(rc, (s, k, a), 1.0)
        np.add.at(tc, (s, s2, a), 1.0)
        return cls.from_counts(values, rc, tc, data)


def _reward_index(values: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    k = np.abs(rewards[:, None] - values[None, :]).argmin(axis=1)
    if len(rewards) and np.abs(values[k] - rewards).max() > 1e-9:
        raise ValueError("reward outside the declared support")
    return k


def contextual_optimal_policy(cmdp: ContextualMdp, tol: float = 1e-10) -> np.ndarray:
    """(U, S, A) one-hot policy: value iteration run separately per context."""
    return np.stack([value_iteration(m, tol)[1] for m in cmdp.per_context])


def tabulated_policy(n_contexts: int, n_states: int, n_actions: int,
                     table: dict[int, tuple[int, ...]], default_action: int = 0
                     ) -> np.ndarray:
    """(U, S, A) one-hot policy from ``{state: (action for u=0, u=1, ...)}``.

    States missing from ``table`` take ``default_action`` in every context.
    """
    pi = np.zeros((n_contexts, n_states, n_actions))
    pi[:, :, default_action] = 1.0
    for s, acts in table.items():
        if len(acts) != n_contexts:
            raise ValueError(f"state {s}: need one action per context")
        for u, a in enumerate(acts):
            pi[u, s] = 0.0
            pi[u, s, a] = 1.0
    return pi


def epsilon_greedy(base: np.ndarray, epsilon: float) -> np.ndarray:
    """Keep ``1 - epsilon`` on the base policy's action, spread the rest evenly
    over the other actions."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    onehot = greedy_policy(np.asarray(base, float), atol=0.0)
    n = onehot.shape[-1]
    if n == 1:
        return onehot
    return onehot * (1.0 - epsilon) + (1.0 - onehot) * epsilon / (n - 1)


def analytic_observational(cmdp: ContextualMdp, policy: np.ndarray
                           ) -> ObservationalDistribution:
    """Population joints: sum over contexts of P(outcome | s, a, u) P(a | s, u) P(u)."""
    pi = as_context_policy(policy, cmdp.n_contexts)
    rho = cmdp.context_dist
    P = np.stack([m.transition for m in cmdp.per_context])
    Rd = np.stack([m.reward_dist for m in cmdp.per_context])
    rj = np.einsum("u,usa,usak->ska", rho, pi, Rd)
    tj = np.einsum("u,usa,usat->sta", rho, pi, P)
    return ObservationalDistribution(cmdp.reward_values.copy(), rj, tj, None)


def collect_observations(cmdp: ContextualMdp, policy: np.ndarray, episodes: int,
                         horizon: int, rng: np.random.Generator, *,
                         initial: np.ndarray | None = None, keep_raw: bool = False,
                         chunk: int = 100_000) -> ObservationalDistribution:
    """Run the demonstrator and tabulate what it saw, without the context.

    ``initial`` overrides the start law. With ``horizon=1`` and a start law
    that does not depend on the context, every sample pairs a state with an
    independent context draw, which is the regime the analytic joints
    describe.
    """
    if episodes < 1 or horizon < 1:
        raise ValueError("episodes and horizon must be at least 1")
    S, A = cmdp.n_states, cmdp.n_actions
    K = len(cmdp.reward_values)
    rc = np.zeros((S, K, A))
    tc = np.zeros((S, S, A))
    raws = []
    done = 0
    while done < episodes:
        n = min(chunk, episodes - done)
        b = simulate_batch(cmdp, policy, n, horizon, rng, initial=initial)
        s, a, s2, k = (x.ravel() for x in (b.states, b.actions, b.next_states, b.reward_index))
        rc += np.bincount((s * K + k) * A + a, minlength=S * K * A).reshape(S, K, A)
        tc += np.bincount((s * S + s2) * A + a, minlength=S * S * A).reshape(S, S, A)
        if keep_raw:
            raws.append(np.column_stack([s, a, s2, b.rewards.ravel()]))
        done += n
    raw = np.vstack(raws) if keep_raw else None
    return ObservationalDistribution.from_counts(cmdp.reward_values.copy(), rc, tc, raw)


def naive_estimates(obs: ObservationalDistribution, states=None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Context-blind conditionals E[r | s, a] and P(s' | s, a).

    These are what plain model estimation would use; they are biased
    whenever the demonstrator's action choice depended on the context.
    Rows for states without data are NaN.

    Raises
    ------
    UnobservedActionError
        If some action has zero probability at a requested state.
    """
    pa = obs.action_marginal()
    if states is None:
        states = [s for s in range(obs.n_states) if obs.has_data(s)]
    S, A = pa.shape
    r_hat = np.full((S, A), np.nan)
    p_hat = np.full((S, A, S), np.nan)
    for s in states:
        if np.any(pa[s] <= 0):
            a = int(np.flatnonzero(pa[s] <= 0)[0])
            raise UnobservedActionError(f"action {a} never observed at state {s}")
        r_hat[s] = obs.reward_values @ obs.reward_joint[s] / pa[s]
        p_hat[s] = (obs.transition_joint[s] / pa[s]).T
    return r_hat, p_hat


def naive_mdp(obs: ObservationalDistribution, template: Mdp) -> Mdp:
    """Plug-in MDP from the naive conditionals.

    States without data keep the template's dynamics. The reward law is
    taken as independent of the arrival state, which is all planning needs.
    """
    _, p_hat = naive_estimates(obs)
    pa = obs.action_marginal()
    P = np.array(template.transition)
    R = np.array(template.reward_probs)
    for s in range(obs.n_states):
        if not obs.has_data(s):
            continue
        P[s] = p_hat[s]
        cond = (obs.reward_joint[s] / pa[s]).T
        R[s] = np.broadcast_to(cond[:, None, :], R[s].shape)
    P /= P.sum(axis=-1, keepdims=True)
    R /= R.sum(axis=-1, keepdims=True)
    return Mdp(P, template.reward_values, R, template.gamma, template.initial,
               template.states, template.actions)


def write_dataset_csv(path: str | Path, tuples) -> None:
    """Write ``(s, a, s_next, r)`` rows preceded by a format line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# format: {DATASET_FORMAT}\n")
        w = csv.writer(fh)
        w.writerow(["s", "a", "s_next", "r"])
        for s, a, s2, r in tuples:
            w.writerow([int(s), int(a), int(s2), repr(float(r))])


def read_dataset_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# format: {DATASET_FORMAT}":
            raise ValueError(f"{path}: not a {DATASET_FORMAT} file")
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["s"]), float(r["a"]), float(r["s_next"]), float(r["r"])]
                     for r in rows]).reshape(-1, 4)
