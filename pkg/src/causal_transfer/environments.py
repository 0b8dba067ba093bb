"""Gridworld contextual MDPs for the goal-reaching experiments.

Cells are ``(x, y)`` pairs; ``up`` increases ``y`` and ``right`` increases
``x``. Actions are numbered 1-4 (up, right, down, left) in layout files and
0-3 internally. Goal cells are absorbing and pay 0 once reached.

Layouts are plain TOML::

    [grid]
    width = 5
    height = 5
    start = [2, 0]
    gamma = 0.9
    step_reward = -1.0
    context_probs = [0.2, 0.8]
    walls = [[[1, 2], [1, 3]], ...]     # blocked moves between adjacent cells

    [[goals]]
    name = "red"
    cell = [0, 4]
    reward = 10.0
    success_prob = [0.6, 0.1]           # per context; failure pays step_reward

    [[slips]]
    cell = [0, 2]
    action = 1
    intended_prob = [0.7, 0.05]         # per context
    otherwise = 3                       # direction taken on failure
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mdp import ContextualMdp, Mdp, Space

__all__ = [
    "ACTION_NAMES",
    "Goal",
    "Slip",
    "GridSpec",
    "load_grid",
    "build_gridworld",
    "build_reward_gridworld",
    "build_transition_gridworld",
    "default_spec",
    "cell_index",
    "state_label",
]

ACTION_NAMES = ("up", "right", "down", "left")
MOVES = ((0, 1), (1, 0), (0, -1), (-1, 0))

Cell = tuple[int, int]


@dataclass(frozen=True)
class Goal:
    name: str
    cell: Cell
    reward: float
    success_prob: tuple[float, ...]


@dataclass(frozen=True)
class Slip:
    """Context-dependent motion: the intended move succeeds with a per-context
    probability, otherwise the agent moves in direction ``otherwise``."""

    cell: Cell
    action: int
    intended_prob: tuple[float, ...]
    otherwise: int


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    start: Cell
    context_probs: tuple[float, ...]
    goals: tuple[Goal, ...]
    walls: frozenset = field(default_factory=frozenset)
    slips: tuple[Slip, ...] = ()
    step_reward: float = -1.0
    gamma: float = 0.9

    def __post_init__(self):
        n_ctx = len(self.context_probs)
        if n_ctx == 0 or min(self.context_probs) < 0 or abs(sum(self.context_probs) - 1.0) > 1e-9:
            raise ValueError("context_probs must be a probability vector")
        for g in self.goals:
            self._check_cell(g.cell)
            if len(g.success_prob) != n_ctx:
                raise ValueError(f"goal {g.name}: one success_prob per context")
        for sl in self.slips:
            self._check_cell(sl.cell)
            if len(sl.intended_prob) != n_ctx:
                raise ValueError("slip: one intended_prob per context")
        self._check_cell(self.start)
        walls = set()
        for w in self.walls:
            a, b = tuple(w)
            self._check_cell(a)
            self._check_cell(b)
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ValueError(f"wall {a}-{b} does not separate neighbours")
            walls.add(frozenset((a, b)))
        object.__setattr__(self, "walls", frozenset(walls))

    def _check_cell(self, c: Cell) -> None:
        if not (0 <= c[0] < self.width and 0 <= c[1] < self.height):
            raise ValueError(f"cell {c} outside the {self.width}x{self.height} grid")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def cells(self) -> list[Cell]:
        return [self.cell(i) for i in range(self.n_states)]

    def index(self, cell: Cell) -> int:
        return cell_index(cell, self.width)

    def cell(self, index: int) -> Cell:
        return (index % self.width, index // self.width)

    def move(self, cell: Cell, action: int) -> Cell:
        """Deterministic move; walls and the boundary keep the agent in place."""
        dx, dy = MOVES[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        if not (0 <= nxt[0] < self.width and 0 <= nxt[1] < self.height):
            return cell
        if frozenset((cell, nxt)) in self.walls:
            return cell
        return nxt

    @classmethod
    def from_dict(cls, doc: dict) -> "GridSpec":
        g = doc["grid"]
        goals = tuple(
            Goal(d["name"], tuple(d["cell"]), float(d["reward"]),
                 tuple(float(p) for p in d["success_prob"]))
            for d in doc.get("goals", [])
        )
        slips = tuple(
            Slip(tuple(d["cell"]), int(d["action"]) - 1,
                 tuple(float(p) for p in d["intended_prob"]),
                 int(d["otherwise"]) - 1)
            for d in doc.get("slips", [])
        )
        walls = frozenset(frozenset((tuple(a), tuple(b))) for a, b in g.get("walls", []))
        return cls(
            width=int(g["width"]),
            height=int(g["height"]),
            start=tuple(g["start"]),
            context_probs=tuple(float(p) for p in g["context_probs"]),
            goals=goals,
            walls=walls,
            slips=slips,
            step_reward=float(g.get("step_reward", -1.0)),
            gamma=float(g.get("gamma", 0.9)),
        )


def cell_index(cell: Cell, width: int = 5) -> int:
    return cell[1] * width + cell[0]


def state_label(cell: Cell) -> str:
    return f"[{cell[0]},{cell[1]}]"


def load_grid(path: str | Path) -> GridSpec:
    with open(path, "rb") as fh:
        return GridSpec.from_dict(tomllib.load(fh))


def _preset(name: str) -> GridSpec:
    text = resources.files("causal_transfer.presets").joinpath(name).read_text()
    return GridSpec.from_dict(tomllib.loads(text))


def build_gridworld(spec: GridSpec) -> ContextualMdp:
    """Contextual MDP for a grid layout, one :class:`Mdp` per context."""
    S, A = spec.n_states, len(MOVES)
    goal_at = {g.cell: g for g in spec.goals}
    support = sorted({spec.step_reward, 0.0} | {g.reward for g in spec.goals})
    k_of = {v: i for i, v in enumerate(support)}
    K = len(support)
    slips = {(sl.cell, sl.action): sl for sl in spec.slips}
    initial = np.zeros(S)
    initial[spec.index(spec.start)] = 1.0
    states = Space(S, tuple(state_label(c) for c in spec.cells()))
    actions = Space(A, ACTION_NAMES)

    mdps = []
    for u in range(len(spec.context_probs)):
        P = np.zeros((S, A, S))
        R = np.zeros((S, A, S, K))
        for s in range(S):
            here = spec.cell(s)
            for a in range(A):
                if here in goal_at:
                    P[s, a, s] = 1.0
                    R[s, a, :, k_of[0.0]] = 1.0
                    continue
                if (here, a) in slips:
                    sl = slips[(here, a)]
                    p = sl.intended_prob[u]
                    outcomes = [(spec.move(here, a), p),
                                (spec.move(here, sl.otherwise), 1.0 - p)]
                else:
                    outcomes = [(spec.move(here, a), 1.0)]
                for nxt, p in outcomes:
                    P[s, a, spec.index(nxt)] += p
                for s2 in range(S):
                    there = spec.cell(s2)
                    if there in goal_at:
                        g = goal_at[there]
                        win = g.success_prob[u]
                        R[s, a, s2, k_of[g.reward]] += win
                        R[s, a, s2, k_of[spec.step_reward]] += 1.0 - win
                    else:
                        R[s, a, s2, k_of[spec.step_reward]] = 1.0
        mdps.append(Mdp(P, np.array(support), R, spec.gamma, initial, states, actions))
    return ContextualMdp(tuple(mdps), np.array(spec.context_probs))


def build_reward_gridworld(spec: GridSpec | None = None) -> ContextualMdp:
    """Deterministic motion; goal payouts depend on the hidden context."""
    return build_gridworld(spec or _preset("reward_grid.toml"))


def build_transition_gridworld(spec: GridSpec | None = None) -> ContextualMdp:
    """Fixed goal payouts; motion at two cells depends on the hidden context."""
    return build_gridworld(spec or _preset("transition_grid.toml"))


def default_spec(kind: str) -> GridSpec:
    """Shipped layout for ``kind`` in {"reward", "transition"}."""
    return _preset(f"{kind}_grid.toml")

