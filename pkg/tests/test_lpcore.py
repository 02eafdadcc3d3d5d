import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auctionlab.lpcore import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, LPBuilder, check_feasible,
                               format_lp, solve)
from oracles import lp_vertex_oracle
from suites import random_small_lp


def lp(c, A, b, lo=None, hi=None):
    n = len(c)
    return LinearProgram(np.array(c, float), np.array(A, float).reshape(-1, n), np.array(b, float),
                         np.zeros(n) if lo is None else np.array(lo, float),
                         np.full(n, np.inf) if hi is None else np.array(hi, float))


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_textbook_program(method):
    # max 3x + 5y st x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    sol = solve(lp([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18]), method)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(36)
    assert np.allclose(sol.x, [2, 6])


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_infeasible_and_unbounded(method):
    assert solve(lp([1], [[1], [-1]], [1, -2]), method).status == INFEASIBLE
    assert solve(lp([1, 1], [[1, -1]], [1]), method).status == UNBOUNDED


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_free_and_negative_bounded_variables(method):
    # max -|x| style: max y st y <= x + 1, y <= -x + 1, x free, y in [-5, 5] -> 1
    prog = lp([0, 1], [[-1, 1], [1, 1]], [1, 1], lo=[-np.inf, -5], hi=[np.inf, 5])
    sol = solve(prog, method)
    assert sol.objective == pytest.approx(1) and sol.x[0] == pytest.approx(0, abs=1e-9)
    # lower bound above zero and a negative-rhs row
    sol = solve(lp([-1, -1], [[-1, -1]], [-3], lo=[1, 0.5]), method)
    assert sol.objective == pytest.approx(-3)


def test_degenerate_program_terminates():
    # classic cycling example for naive pivoting (Beale)
    c = [0.75, -20, 0.5, -6]
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    sol = solve(lp(c, A, [0, 0, 1]), "simplex")
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(1.25)


def test_builder_and_labels():
    b = LPBuilder()
    x = b.add_var("x", hi=2, obj=1)
    y = b.add_var("y", obj=2)
    b.add_row("cap", {x: 1, y: 1}, 3)
    prog = b.build()
    assert prog.var_labels == ("x", "y") and prog.row_labels == ("cap",)
    assert solve(prog).objective == pytest.approx(6)
    text = format_lp(prog)
    assert "cap:" in text and "maximize" in text


def test_program_is_immutable_and_validated():
    prog = lp([1], [[1]], [1])
    with pytest.raises(ValueError):
        prog.A[0, 0] = 2
    with pytest.raises(ValueError):
        lp([1], [[1]], [1, 2])
    with pytest.raises(ValueError):
        lp([1], [[1]], [1], lo=[2], hi=[1])


def test_check_feasible_reports_worst_violation():
    prog = LinearProgram(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0]), np.zeros(2),
                         np.ones(2), ("a", "b"), ("sum",))
    assert check_feasible(prog, [0.5, 0.5]).ok
    f = check_feasible(prog, [1.0, 0.5])
    assert not f.ok and f.where == "sum" and f.violation == pytest.approx(0.5)
    assert check_feasible(prog, [-0.2, 0]).where == "lower bound of a"
    with pytest.raises(ValueError):
        check_feasible(prog, [1.0])


def test_simplex_matches_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        c, A, b, lo, hi = random_small_lp(rng)
        expected = lp_vertex_oracle(c, A, b, lo, hi)
        sol = solve(LinearProgram(c, A, b, lo, hi))
        if expected is None:
            assert sol.status == INFEASIBLE
        else:
            assert sol.status == OPTIMAL
            assert sol.objective == pytest.approx(expected, abs=1e-6)
            assert check_feasible(LinearProgram(c, A, b, lo, hi), sol.x).ok


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_simplex_matches_highs(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 8)), int(rng.integers(1, 8))
    prog = LinearProgram(rng.normal(size=n), rng.normal(size=(m, n)), rng.uniform(-1, 3, size=m),
                         np.zeros(n), rng.uniform(0.5, 3, size=n))
    a, h = solve(prog, "simplex"), solve(prog, "highs")
    assert a.status == h.status
    if a.status == OPTIMAL:
        assert a.objective == pytest.approx(h.objective, abs=1e-7)


def test_weak_duality_bound():
    # any dual-feasible y >= 0 with A^T y >= c (x >= 0, no upper bounds) bounds the optimum
    rng = np.random.default_rng(9)
    for _ in range(50):
        n, m = 3, 4
        A = rng.uniform(0.1, 2, size=(m, n))
        b = rng.uniform(1, 5, size=m)
        c = rng.uniform(0, 3, size=n)
        sol = solve(LinearProgram(c, A, b, np.zeros(n), np.full(n, np.inf)))
        y = np.full(m, (c / A.min(axis=0)).max())
        assert np.all(A.T @ y >= c - 1e-12)
        assert sol.objective <= b @ y + 1e-9
        dual = solve(LinearProgram(-b, -A.T, -c, np.zeros(m), np.full(m, np.inf)))
        assert -dual.objective == pytest.approx(sol.objective, abs=1e-7)
