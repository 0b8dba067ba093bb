"""Dense two-phase primal simplex for small linear programs.

Problems have the form::

    minimize (or maximize)  c @ x
    subject to              A_eq @ x == b_eq
                            0 <= x <= upper

Pivoting follows Bland's rule so results are reproducible and cycling is
impossible. Every returned optimum is checked against its dual certificate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LPError",
    "Infeasible",
    "Unbounded",
    "LinearProgram",
    "LPSolution",
    "solve",
    "independent_rows",
]

PIVOT_THRESHOLD = 1e-11


class LPError(RuntimeError):
    """Base class for solver failures."""


class Infeasible(LPError):
    """No point satisfies the constraints."""


class Unbounded(LPError):
    """The objective is unbounded in the optimization direction."""


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A_eq, dtype=float)
        b = np.asarray(self.b_eq, dtype=float).ravel()
        if A.ndim != 2:
            A = A.reshape(len(b), -1)
        if A.shape != (len(b), len(c)):
            raise ValueError(
                f"A_eq has shape {A.shape}, expected ({len(b)}, {len(c)})"
            )
        if not np.all(np.isfinite(b)):
            raise ValueError("b_eq must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", A)
        object.__setattr__(self, "b_eq", b)
        if self.upper is not None:
            u = np.asarray(self.upper, dtype=float).ravel()
            if u.shape != c.shape:
                raise ValueError("upper must match the number of variables")
            if np.any(u < 0):
                raise Infeasible("negative upper bound with x >= 0")
            object.__setattr__(self, "upper", u)

    @property
    def n_vars(self) -> int:
        return len(self.c)


@dataclass(frozen=True)
class LPSolution:
    """Optimal point with its certificate.

    ``dual`` holds multipliers for the rows of ``A_eq`` in the sense of the
    original problem, so ``value == b_eq @ dual`` (plus upper-bound terms)
    up to the reported gap.
    """

    value: float
    x: np.ndarray
    dual: np.ndarray
    primal_residual: float
    duality_gap: float
    iterations: int


def independent_rows(A: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Indices of a maximal independent row subset of ``[A | b]``.

    Gaussian elimination with partial pivoting; pivots smaller than
    ``PIVOT_THRESHOLD`` (relative to the row scale) count as zero. A row
    whose coefficients vanish while its right-hand side does not proves the
    system inconsistent.
    """
    M = np.hstack([A, b[:, None]]).astype(float)
    m, n = A.shape
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    work = M.copy()
    col = 0
    pivot_rows = []
    remaining = list(range(m))
    while remaining and col < n:
        sub = work[remaining, col]
        k = int(np.argmax(np.abs(sub)))
        if abs(sub[k]) <= PIVOT_THRESHOLD * scale:
            col += 1
            continue
        p = remaining.pop(k)
        pivot_rows.append(p)
        for r in remaining:
            f = work[r, col] / work[p, col]
            if f != 0.0:
                work[r] -= f * work[p]
        col += 1
    for r in remaining:
        if abs(work[r, n]) > max(tol, PIVOT_THRESHOLD) * scale:
            raise Infeasible("equality constraints are inconsistent")
    return np.asarray(sorted(pivot_rows), dtype=int)


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])


def _simplex(T: np.ndarray, basis: list[int], n_cols: int, tol: float,
             max_iter: int) -> int:
    """Minimize the objective held in the last row of tableau ``T``.

    Only the first ``n_cols`` columns may enter. Returns the pivot count.
    """
    m = T.shape[0] - 1
    it = 0
    while True:
        reduced = T[-1, :n_cols]
        candidates = np.flatnonzero(reduced < -tol)
        if candidates.size == 0:
            return it
        col = int(candidates[0])
        column = T[:m, col]
        positive = column > tol
        if not positive.any():
            raise Unbounded("objective is unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        it += 1
        if it > max_iter:
            raise LPError("iteration limit reached")


def solve(lp: LinearProgram, tol: float = 1e-9) -> LPSolution:
    """Solve ``lp`` to optimality.

    Raises
    ------
    Infeasible
        The feasible region is empty.
    Unbounded
        The objective has no finite optimum.
    LPError
        The final point fails its KKT check (numerical breakdown).
    """
    c0 = -lp.c if lp.maximize else lp.c.copy()
    A0, b0 = lp.A_eq, lp.b_eq
    n0 = lp.n_vars

    # Finite upper bounds become x_i + t_i = u_i with a slack t_i >= 0.
    if lp.upper is not None:
        bounded = np.flatnonzero(np.isfinite(lp.upper))
    else:
        bounded = np.array([], dtype=int)
    nb = len(bounded)
    A = np.zeros((A0.shape[0] + nb, n0 + nb))
    A[: A0.shape[0], :n0] = A0
    for k, i in enumerate(bounded):
        A[A0.shape[0] + k, i] = 1.0
        A[A0.shape[0] + k, n0 + k] = 1.0
    b = np.concatenate([b0, lp.upper[bounded] if nb else np.zeros(0)])
    c = np.concatenate([c0, np.zeros(nb)])

    rows = independent_rows(A, b, tol)
    A, b = A[rows], b[rows]
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    m, n = A.shape

    if m == 0:
        if np.any(c < -tol):
            raise Unbounded("objective is unbounded")
        x = np.zeros(n0)
        return LPSolution(0.0, x, np.zeros(len(b0)), 0.0, 0.0, 0)

    # Phase 1: artificial basis, minimize the sum of artificials.
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    max_iter = 50 * (n + m) + 1000
    iters = _simplex(T, basis, n, tol, max_iter)
    if -T[-1, -1] > tol * max(1.0, float(np.abs(b).max())) * 10:
        raise Infeasible("phase-one optimum is positive")

    # Drive remaining artificials out of the basis.
    for r in range(m):
        if basis[r] >= n:
            nz = np.flatnonzero(np.abs(T[r, :n]) > PIVOT_THRESHOLD)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])

    # Phase 2 over the original columns.
    T2 = np.zeros((m + 1, n + 1))
    T2[:m, :n] = T[:m, :n]
    T2[:m, -1] = T[:m, -1]
    T2[-1, :n] = c
    for r, j in enumerate(basis):
        if j < n:
            T2[-1] -= c[j] * T2[r]
    if any(j >= n for j in basis):
        # Only possible if a dependent row slipped past elimination.
        raise LPError("degenerate artificial left in basis")
    iters += _simplex(T2, basis, n, tol, max_iter)

    # Recover x and duals from the final basis for accuracy.
    B = A[:, basis]
    xB = np.linalg.solve(B, b)
    x = np.zeros(n)
    x[basis] = xB
    x[np.abs(x) < tol * 1e-3] = 0.0
    y = np.linalg.solve(B.T, c[basis])
    reduced = c - A.T @ y
    primal_res = float(np.abs(A @ x - b).max(initial=0.0))
    neg = float(np.maximum(-x, 0).max(initial=0.0))
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    if primal_res > tol * 1e3 or neg > tol * 1e3:
        raise LPError(f"primal residual {max(primal_res, neg):.3e} too large")
    if reduced.min(initial=0.0) < -tol * 1e3 * scale:
        raise LPError("dual infeasible at termination")
    value = float(c @ x)
    gap = abs(value - float(b @ y))
    if gap > tol * 1e3 * scale:
        raise LPError(f"duality gap {gap:.3e} too large")

    # Map duals back to the caller's rows (dropped rows get zero).
    full = np.zeros(A0.shape[0] + nb)
    full[rows] = y * sign
    dual = full[: A0.shape[0]]
    if lp.maximize:
        value, dual = -value, -dual
    return LPSolution(
        value=value,
        x=x[:n0].copy(),
        dual=dual,
        primal_residual=max(primal_res, neg),
        duality_gap=gap,
        iterations=iters,
    )
