"""Value-function bounds from interval-valued reward and transition models.

A :class:`BoundedMdpModel` holds, for every ``(s, a)``, an expected-reward
interval ``[r_lo, r_hi]`` and per-successor probability intervals
``[p_lo, p_hi]``. The ambiguity sets are rectangular (chosen independently
per ``(s, a)``), so the best-case and worst-case optimal value functions
exist pointwise and interval value iteration computes them exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import Mdp

__all__ = [
    "MODEL_FORMAT",
    "QBOUND_FORMAT",
    "EmptyAmbiguitySetError",
    "BoundedMdpModel",
    "QBoundTable",
    "extremal_distribution",
    "extremal_batch",
    "robust_value_bounds",
    "weighted_relaxation_bounds",
    "q_bounds",
]

MODEL_FORMAT = "causal_transfer.bounded_model/1"
QBOUND_FORMAT = "causal_transfer.q_bounds/1"
FEAS_TOL = 1e-9


class EmptyAmbiguitySetError(ValueError):
    """No distribution fits inside the probability intervals."""


def _check_mass(p_lo: np.ndarray, p_hi: np.ndarray, tol: float = FEAS_TOL) -> None:
    lo_sum = p_lo.sum(axis=-1)
    hi_sum = p_hi.sum(axis=-1)
    if np.any(p_lo > p_hi + tol):
        raise EmptyAmbiguitySetError("probability interval with lo > hi")
    if np.any(lo_sum > 1.0 + tol) or np.any(hi_sum < 1.0 - tol):
        bad = np.argwhere((lo_sum > 1.0 + tol) | (hi_sum < 1.0 - tol))[0]
        raise EmptyAmbiguitySetError(
            f"intervals at index {tuple(int(i) for i in bad)} admit no distribution "
            f"(sum lo = {lo_sum[tuple(bad)]:.6g}, sum hi = {hi_sum[tuple(bad)]:.6g})"
        )


@dataclass(frozen=True, eq=False)
class BoundedMdpModel:
    """Interval model over a finite state/action space.

    Attributes
    ----------
    r_lo, r_hi : (S, A) arrays
        Bounds on the expected one-step reward.
    p_lo, p_hi : (S, A, S) arrays
        Bounds on ``P(s' | s, a)``.
    gamma : float
    reward_range : (float, float)
        Global bounds ``R_lo <= r <= R_hi`` on any single reward.
    """

    r_lo: np.ndarray
    r_hi: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    gamma: float
    reward_range: tuple[float, float]

    def __post_init__(self):
        r_lo = np.array(self.r_lo, float)
        r_hi = np.array(self.r_hi, float)
        p_lo = np.clip(np.array(self.p_lo, float), 0.0, 1.0)
        p_hi = np.clip(np.array(self.p_hi, float), 0.0, 1.0)
        if r_lo.ndim != 2 or r_lo.shape != r_hi.shape:
            raise ValueError("reward bounds must be (S, A) arrays of equal shape")
        S, A = r_lo.shape
        if p_lo.shape != (S, A, S) or p_hi.shape != (S, A, S):
            raise ValueError(f"probability bounds must have shape {(S, A, S)}")
        if np.any(r_lo > r_hi + FEAS_TOL):
            raise ValueError("reward interval with lo > hi")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        R_lo, R_hi = (float(x) for x in self.reward_range)
        if R_lo > R_hi or r_lo.min() < R_lo - FEAS_TOL or r_hi.max() > R_hi + FEAS_TOL:
            raise ValueError("reward_range must cover every reward interval")
        _check_mass(p_lo, p_hi)
        for name, arr in (("r_lo", r_lo), ("r_hi", np.maximum(r_hi, r_lo)),
                          ("p_lo", p_lo), ("p_hi", np.maximum(p_hi, p_lo))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "reward_range", (R_lo, R_hi))

    @property
    def n_states(self) -> int:
        return self.r_lo.shape[0]

    @property
    def n_actions(self) -> int:
        return self.r_lo.shape[1]

    @classmethod
    def from_mdp(cls, mdp: Mdp) -> "BoundedMdpModel":
        """Degenerate model: every interval is the MDP's own value."""
        r = mdp.expected_reward
        return cls(r, r, mdp.transition, mdp.transition, mdp.gamma, mdp.reward_range)

    @classmethod
    def vacuous(cls, n_states: int, n_actions: int, gamma: float,
                reward_range: tuple[float, float]) -> "BoundedMdpModel":
        R_lo, R_hi = reward_range
        shape = (n_states, n_actions)
        return cls(np.full(shape, R_lo), np.full(shape, R_hi),
                   np.zeros(shape + (n_states,)), np.ones(shape + (n_states,)),
                   gamma, reward_range)

    def contains(self, mdp: Mdp, tol: float = 1e-9) -> bool:
        """True if the MDP's expected rewards and transitions are inside."""
        r, P = mdp.expected_reward, mdp.transition
        return bool(np.all(r >= self.r_lo - tol) and np.all(r <= self.r_hi + tol)
                    and np.all(P >= self.p_lo - tol) and np.all(P <= self.p_hi + tol))

    def to_dict(self) -> dict:
        entries = []
        for s in range(self.n_states):
            for a in range(self.n_actions):
                nz = np.flatnonzero(self.p_hi[s, a] > 0)
                entries.append({
                    "state": s,
                    "action": a,
                    "r_lo": float(self.r_lo[s, a]),
                    "r_hi": float(self.r_hi[s, a]),
                    "successors": {
                        str(int(t)): [float(self.p_lo[s, a, t]), float(self.p_hi[s, a, t])]
                        for t in nz
                    },
                })
        return {
            "format": MODEL_FORMAT,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "reward_range": list(self.reward_range),
            "pairs": entries,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BoundedMdpModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {doc.get('format')!r}")
        S, A = int(doc["n_states"]), int(doc["n_actions"])
        r_lo, r_hi = np.zeros((S, A)), np.zeros((S, A))
        p_lo, p_hi = np.zeros((S, A, S)), np.zeros((S, A, S))
        for e in doc["pairs"]:
            s, a = int(e["state"]), int(e["action"])
            r_lo[s, a], r_hi[s, a] = e["r_lo"], e["r_hi"]
            for t, (lo, hi) in e["successors"].items():
                p_lo[s, a, int(t)], p_hi[s, a, int(t)] = lo, hi
        return cls(r_lo, r_hi, p_lo, p_hi, float(doc["gamma"]), tuple(doc["reward_range"]))

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load_json(cls, path: str | Path) -> "BoundedMdpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class QBoundTable:
    """Per-pair action-value intervals ``lo <= Q*(s, a) <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = np.array(self.lo, float), np.array(self.hi, float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ValueError("lo and hi must be (S, A) arrays of equal shape")
        if np.any(lo > hi + 1e-9):
            raise ValueError("Q interval with lo > hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unbounded(cls, n_states: int, n_actions: int) -> "QBoundTable":
        return cls(np.full((n_states, n_actions), -np.inf),
                   np.full((n_states, n_actions), np.inf))

    def contains(self, q: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(q >= self.lo - tol) and np.all(q <= self.hi + tol))

    def to_dict(self) -> dict:
        def enc(x):
            return [[None if not np.isfinite(v) else float(v) for v in row] for row in x]
        return {"format": QBOUND_FORMAT, "lo": enc(self.lo), "hi": enc(self.hi)}

    @classmethod
    def from_dict(cls, doc: dict) -> "QBoundTable":
        if doc.get("format") != QBOUND_FORMAT:
            raise ValueError(f"unsupported Q-bound format {doc.get('format')!r}")
        lo = np.array([[-np.inf if v is None else v for v in row] for row in doc["lo"]])
        hi = np.array([[np.inf if v is None else v for v in row] for row in doc["hi"]])
        return cls(lo, hi)

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load_json(cls, path: str | Path) -> "QBoundTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def extremal_batch(v: np.ndarray, p_lo: np.ndarray, p_hi: np.ndarray,
                   maximize: bool = True) -> np.ndarray:
    """Row-wise :func:`extremal_distribution` for ``(N, S)`` interval arrays.

    Every row starts at its lower bounds; the leftover mass is poured into
    successors in order of decreasing ``v`` (increasing when minimizing),
    each filled up to its upper bound. Ties go to the lower index.
    """
    p_lo = np.asarray(p_lo, float)
    p_hi = np.asarray(p_hi, float)
    _check_mass(p_lo, p_hi)
    v = np.asarray(v, float)
    order = np.argsort(-v if maximize else v, kind="stable")
    width = np.maximum(p_hi - p_lo, 0.0)[..., order]
    residual = np.maximum(1.0 - p_lo.sum(axis=-1, keepdims=True), 0.0)
    before = np.cumsum(width, axis=-1) - width
    fill = np.clip(residual - before, 0.0, width)
    p = p_lo.copy()
    p[..., order] += fill
    return p


def extremal_distribution(v, p_lo, p_hi, maximize: bool = True) -> np.ndarray:
    """Distribution in the box ``[p_lo, p_hi]`` that extremizes ``p @ v``.

    Raises
    ------
    EmptyAmbiguitySetError
        If ``sum(p_lo) > 1`` or ``sum(p_hi) < 1``.
    """
    p_lo = np.asarray(p_lo, float)
    return extremal_batch(v, p_lo[None], np.asarray(p_hi, float)[None], maximize)[0]


def robust_value_bounds(model: BoundedMdpModel, optimistic: bool = True,
                        tol: float = 1e-10, max_iter: int = 100_000,
                        return_history: bool = False):
    """Best-case (``optimistic``) or worst-case optimal value function.

    Iterates ``V(s) <- max_a ext_{r, P} [r + gamma * P @ V]`` with ``ext``
    the max (optimistic) or min (pessimistic) over the intervals. Both
    operators are gamma-contractions; iteration stops once the sup-norm
    change is at most ``tol * (1 - gamma) / gamma``, which bounds the
    distance to the fixed point by ``tol``.

    If ``return_history`` is set, also returns the list of sup-norm changes.
    """
    S, A = model.n_states, model.n_actions
    g = model.gamma
    r = model.r_hi if optimistic else model.r_lo
    lo = model.p_lo.reshape(S * A, S)
    hi = model.p_hi.reshape(S * A, S)
    v = np.zeros(S)
    stop = tol * (1.0 - g) / g
    history = []
    for _ in range(max_iter):
        p = extremal_batch(v, lo, hi, maximize=optimistic)
        q = r + g * (p @ v).reshape(S, A)
        v_new = q.max(axis=1)
        delta = float(np.abs(v_new - v).max())
        history.append(delta)
        v = v_new
        if delta <= stop:
            break
    else:
        raise RuntimeError("interval value iteration did not converge")
    return (v, history) if return_history else v


def weighted_relaxation_bounds(model: BoundedMdpModel, weights, s: int,
                               tol: float = 1e-10,
                               v_opt: np.ndarray | None = None,
                               v_pes: np.ndarray | None = None) -> tuple[float, float]:
    """Per-state bounds recovered from the weighted best/worst-case programs.

    With ``V`` the solution of the weighted program, the upper bound is::

        V(s) + (sum_{t != s} c(t) V(t) - R_lo / (1 - gamma) * sum_{t != s} c(t)) / c(s)

    and the lower bound is the mirror image with ``R_hi``. A large ``c(s)``
    relative to the other weights drives both towards the pointwise values.
    Returns ``(upper, lower)``.
    """
    c = np.asarray(weights, float)
    if c.shape != (model.n_states,) or np.any(c <= 0):
        raise ValueError("weights must be one positive number per state")
    if v_opt is None:
        v_opt = robust_value_bounds(model, True, tol)
    if v_pes is None:
        v_pes = robust_value_bounds(model, False, tol)
    R_lo, R_hi = model.reward_range
    g = model.gamma
    others = np.arange(model.n_states) != s
    c_rest = c[others].sum()
    upper = v_opt[s] + (c[others] @ v_opt[others] - R_lo / (1 - g) * c_rest) / c[s]
    lower = v_pes[s] - (R_hi / (1 - g) * c_rest - c[others] @ v_pes[others]) / c[s]
    return float(upper), float(lower)


def q_bounds(model: BoundedMdpModel, v_lo: np.ndarray, v_hi: np.ndarray) -> QBoundTable:
    """Action-value intervals from value bounds.

    ``hi = r_hi + gamma * max_P P @ v_hi`` and ``lo = r_lo + gamma * min_P P @ v_lo``,
    each inner extremum taken over the probability box of the pair.
    """
    v_lo = np.asarray(v_lo, float)
    v_hi = np.asarray(v_hi, float)
    if np.any(v_lo > v_hi + 1e-9):
        raise ValueError("v_lo must not exceed v_hi")
    S, A = model.n_states, model.n_actions
    lo = model.p_lo.reshape(S * A, S)
    hi = model.p_hi.reshape(S * A, S)
    up = extremal_batch(v_hi, lo, hi, maximize=True) @ v_hi
    down = extremal_batch(v_lo, lo, hi, maximize=False) @ v_lo
    g = model.gamma
    return QBoundTable(model.r_lo + g * down.reshape(S, A),
                       model.r_hi + g * up.reshape(S, A))
