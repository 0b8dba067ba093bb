import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from causal_transfer.lp import Infeasible, LinearProgram, Unbounded, solve


def _feasible_instance(seed, m, n, with_upper):
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    x0 = rng.uniform(0, 2, size=n)
    b = A @ x0
    c = rng.normal(size=n)
    upper = x0 + rng.uniform(0.1, 2, size=n) if with_upper else None
    return c, A, b, upper


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 4), n=st.integers(2, 7),
       with_upper=st.booleans(), maximize=st.booleans())
def test_matches_highs_on_feasible_programs(seed, m, n, with_upper, maximize):
    c, A, b, upper = _feasible_instance(seed, m, n, with_upper)
    bounds = [(0, None if upper is None else u) for u in (upper if upper is not None else [None] * n)]
    ref = linprog(-c if maximize else c, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    lp = LinearProgram(c, A, b, upper, maximize)
    if ref.status == 3:
        with pytest.raises(Unbounded):
            solve(lp)
        return
    assert ref.status == 0
    sol = solve(lp)
    want = -ref.fun if maximize else ref.fun
    assert sol.value == pytest.approx(want, abs=1e-7, rel=1e-7)
    assert np.all(sol.x >= -1e-9)
    if upper is not None:
        assert np.all(sol.x <= upper + 1e-9)
    assert sol.primal_residual <= 1e-7
    assert sol.duality_gap <= 1e-6


def test_vertex_enumeration_oracle():
    # min c.x over the 2-simplex scaled to 3: optimum is the smallest c times 3
    c = np.array([2.0, -1.0, 0.5])
    sol = solve(LinearProgram(c, np.ones((1, 3)), [3.0]))
    assert sol.value == pytest.approx(-3.0)
    np.testing.assert_allclose(sol.x, [0, 3, 0], atol=1e-12)
    sol = solve(LinearProgram(c, np.ones((1, 3)), [3.0], maximize=True))
    assert sol.value == pytest.approx(6.0)


def test_infeasible_and_unbounded():
    with pytest.raises(Infeasible):
        solve(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [-1.0]))
    with pytest.raises(Infeasible):
        solve(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [3.0], upper=[1.0, 1.0]))
    with pytest.raises(Unbounded):
        solve(LinearProgram([-1.0, 0.0], [[1.0, -1.0]], [0.0]))


def test_redundant_rows_are_tolerated():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0, 1.0])
    sol = solve(LinearProgram([1.0, 2.0, 3.0], A, b))
    ref = linprog([1.0, 2.0, 3.0], A_eq=A, b_eq=b, method="highs")
    assert sol.value == pytest.approx(ref.fun)


def test_shape_errors():
    with pytest.raises(ValueError):
        LinearProgram([1.0, 2.0], [[1.0, 2.0, 3.0]], [1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], [np.inf])


def test_deterministic():
    c, A, b, upper = _feasible_instance(3, 3, 6, True)
    s1 = solve(LinearProgram(c, A, b, upper))
    s2 = solve(LinearProgram(c, A, b, upper))
    assert s1.value == s2.value and np.array_equal(s1.x, s2.x) and s1.iterations == s2.iterations
