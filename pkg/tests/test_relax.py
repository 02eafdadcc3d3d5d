import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auctionlab import dist, model, relax
from auctionlab.lpcore import check_feasible, solve
from auctionlab.relax import EdgeAllocation
from suites import random_mhr_product, random_regular_product

HUGE = 10**6
GEOM = dist.DiscreteDistribution((1, 2, 3, 4), (F(1, 2), F(1, 4), F(1, 8), F(1, 8)))


def one_edge(d, budget=HUGE, demand=1):
    return model.product([budget], [demand], [[d]])


# ------------------------------------------------------------------- LP1


@pytest.mark.parametrize("budget, tables, expected", [
    (100, [[(1, [10])]], 10),
    (4, [[(1, [10])]], 4),
    (HUGE, [[(F(1, 2), [1]), (F(1, 2), [2])]], 1),
])
@pytest.mark.parametrize("method", ["highs", "simplex"])
def test_lp1_examples(budget, tables, expected, method):
    inst = model.correlated([budget], [1], tables)
    assert relax.solve_lp1(inst, method).objective == pytest.approx(expected, abs=1e-9)


def test_lp1_solution_satisfies_its_program():
    rng = np.random.default_rng(3)
    from suites import random_correlated
    for _ in range(20):
        inst = random_correlated(rng)
        lp = relax.build_lp1(inst)
        sol = solve(lp, "highs")
        assert check_feasible(lp, sol.x).ok
        s = relax.solve_lp1(inst)
        for i in range(inst.n_bidders):
            assert np.all((s.x[i] >= -1e-9) & (s.x[i] <= 1 + 1e-9))
            assert np.all((s.P[i] >= -1e-9) & (s.P[i] <= float(inst.budgets[i]) + 1e-7))
        assert s.objective == pytest.approx(relax.solve_lp1(inst, "simplex").objective, abs=1e-6)


# ---------------------------------------------------------- product LPs


@pytest.mark.parametrize("inst, expected", [
    (one_edge(dist.point_mass(8), 40), 8),
    (one_edge(dist.point_mass(8), 16), 4),
    (model.product([HUGE, HUGE], [1, 1], [[dist.point_mass(5)], [dist.point_mass(5)]]), 5),
])
def test_lprev_examples(inst, expected):
    assert relax.solve_lprev(inst).objective == pytest.approx(expected)


@pytest.mark.parametrize("d, expected", [(dist.point_mass(8), 8), (dist.uniform([1, 2]), 1), (GEOM, 1)])
@pytest.mark.parametrize("method", ["highs", "simplex"])
def test_lp2_and_lpseq_examples(d, expected, method):
    inst = one_edge(d)
    assert relax.solve_lp2(inst, method).objective == pytest.approx(expected)
    assert relax.solve_lpseq(inst, method).objective == pytest.approx(expected)


def test_lp2_rejects_non_regular_edge_by_name():
    bad = dist.DiscreteDistribution((1, 2, 3), (F(45, 100), F(10, 100), F(45, 100)))
    inst = model.product([HUGE], [1], [[dist.point_mass(1), bad]])
    with pytest.raises(ValueError, match=r"\(0, ?1\)|0,1"):
        relax.build_lp2(inst)


def test_lprev_without_budget_rows_is_relaxation():
    rng = np.random.default_rng(8)
    for _ in range(10):
        inst = random_mhr_product(rng)
        assert (relax.solve_lprev(inst, with_budget=False).objective
                >= relax.solve_lprev(inst).objective - 1e-9)


def test_lifted_step_solution_is_lpseq_feasible_with_equal_objective():
    rng = np.random.default_rng(12)
    for _ in range(15):
        inst = random_mhr_product(rng)
        lp2 = relax.solve_lp2(inst)
        point = relax.postings_to_lpseq_point(inst, lp2)
        prog = relax.build_lpseq(inst)
        assert check_feasible(prog, point).ok
        assert float(prog.c @ point) == pytest.approx(lp2.objective, abs=1e-7)


def test_lpseq_equals_lp2_on_regular_instances():
    rng = np.random.default_rng(13)
    for _ in range(8):
        inst = random_regular_product(rng, max_value=64)
        assert relax.solve_lpseq(inst).objective == pytest.approx(relax.solve_lp2(inst).objective, abs=1e-6)


def test_lp2_vs_lprev_bound_on_mhr_instances():
    rng = np.random.default_rng(14)
    for _ in range(15):
        inst = random_mhr_product(rng)
        assert relax.solve_lp2(inst).objective >= relax.solve_lprev(inst).objective / (2 * math.e**2) - 1e-7


# -------------------------------------------------------- monotone repair


@pytest.mark.parametrize("x, expected", [
    ([0.2, 0.7], [0.2, 0.7]),
    ([1.0, 0.5], [0.0, 1.0]),
    ([1.0, 0.0], [0.0, 0.5]),
])
def test_monotone_repair_examples(x, expected):
    e = relax.monotone_repair(EdgeAllocation(dist.uniform([1, 2]), np.array(x)))
    assert np.allclose(e.x, expected)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_monotone_repair_properties(length, seed):
    rng = np.random.default_rng(seed)
    d = dist.random_mhr(rng, length)
    x = rng.uniform(0, 1, size=length) * (rng.uniform(size=length) < 0.7)
    before = EdgeAllocation(d, x)
    after = relax.monotone_repair(before)
    assert np.all(np.diff(after.x) >= -1e-12)
    assert np.all((after.x >= 0) & (after.x <= 1))
    assert after.revenue_weight == pytest.approx(before.revenue_weight, abs=1e-9)
    assert after.mass <= before.mass + 1e-12


# --------------------------------------------------------- step decompose


@pytest.mark.parametrize("x, r_star, s_star, p", [
    ([1, 1], 1, 2, 1.0),
    ([0, 1], 2, None, 1.0),
    ([0.5, 1], 1, 2, 0.5),
])
def test_step_decompose_examples(x, r_star, s_star, p):
    post = relax.step_decompose(EdgeAllocation(dist.uniform([1, 2]), np.array(x, float)), HUGE)
    assert (post.r_star, post.s_star) == (r_star, s_star)
    assert post.p == pytest.approx(p)
    assert post.value == pytest.approx(1.0) and post.residual <= 1e-9


def test_step_decompose_preserves_identity_on_random_allocations():
    rng = np.random.default_rng(21)
    for _ in range(300):
        d = dist.random_mhr(rng, int(rng.integers(1, 16)))
        x = rng.uniform(0, 1, size=len(d))
        x[np.array([float(v) for v in d.virtual_values]) < 0] = 0
        post = relax.step_decompose(EdgeAllocation(d, x), 4 * d.max_value)
        target = float(np.sum(np.array([float(v) for v in d.virtual_values]) * d.probs * x))
        assert post.value == pytest.approx(target, abs=1e-9)
        assert 0 <= post.p <= 1


def test_step_decompose_requires_regular():
    with pytest.raises(ValueError):
        relax.step_decompose(EdgeAllocation(dist.DiscreteDistribution((1, 2, 3), (F(45, 100), F(1, 10), F(45, 100))),
                                            np.ones(3)), HUGE)


def test_decompose_lp2_thresholds_respect_quarter_budget():
    rng = np.random.default_rng(22)
    for _ in range(20):
        inst = random_mhr_product(rng)
        for row in relax.decompose_lp2(inst, relax.solve_lp2(inst)):
            for post in row:
                assert post.r_star <= inst.budgets[post.bidder] / 4
                assert post.residual <= 1e-9


# ------------------------------------------------------------ power group


def test_power_group_uniform_example():
    inst = one_edge(dist.uniform(range(1, 9)))
    sol = relax.ProductLPSolution("lprev", 0.0, ((EdgeAllocation(inst.truncated[0][0], np.ones(8), 0, 0),),))
    g = relax.power_group(sol, inst)[0][0]
    assert (g.group, g.price, g.accept, g.survival) == (2, 4, pytest.approx(1.0), pytest.approx(5 / 8))


def test_power_group_point_mass_and_empty_edge():
    inst = model.product([HUGE], [2], [[dist.point_mass(8), dist.uniform([1, 2])]])
    row = (EdgeAllocation(inst.truncated[0][0], np.ones(1), 0, 0), EdgeAllocation(inst.truncated[0][1], np.zeros(2), 0, 1))
    g = relax.power_group(relax.ProductLPSolution("lprev", 0.0, (row,)), inst)[0]
    assert (g[0].group, g[0].price, g[0].accept, g[0].survival) == (3, 8, 1.0, 1.0)
    assert g[1].group is None and g[1].price == 0 and g[1].accept == 0


def test_power_group_bounds_on_regular_instances():
    rng = np.random.default_rng(31)
    for _ in range(10):
        inst = random_regular_product(rng, max_value=128)
        lprev = relax.solve_lprev(inst)
        grouped = relax.power_group(lprev, inst)
        assert all(relax.grouped_constraints(grouped, inst).values())
        for row, erow in zip(grouped, lprev.edges):
            for g, e in zip(row, erow):
                assert g.expected_revenue <= relax.monotone_repair(e).revenue_weight + 1e-9
        total = sum(g.expected_revenue for row in grouped for g in row)
        assert total >= lprev.objective / (2 * relax.group_count(inst)) - 1e-9


def test_group_count_handles_fractional_points():
    assert relax.group_count(model.product([2], [1], [[dist.uniform([1, 2])]])) == 1   # all mass at 1/2
    assert relax.group_count(one_edge(dist.uniform([F(1, 2), 3]))) == 3                 # bands -1, 0, 1
    assert relax.group_count(one_edge(dist.equal_revenue(256))) == 9
