"""LP relaxations of the revenue problem and post-processing of their optima.

* ``build_lp1``   correlated types: interim supply/demand/BIC/IR rows.
* ``build_lprev`` product laws, per-edge value capped at B_i/4.
* ``build_lp2``   LPRev with values replaced by virtual values.
* ``build_lpseq`` adaptive posted-price bound with explicit payment variables.

Solutions are returned as per-edge ``EdgeAllocation`` records that the
mechanisms consume after ``monotone_repair`` / ``step_decompose`` /
``power_group``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .dist import DiscreteDistribution, classify, payment_form
from .lpcore import LinearProgram, LPBuilder, LPSolution, SolverError, solve
from .model import CorrelatedInstance, ProductInstance

DEFAULT_METHOD = "highs"
EQ1_TOL = 1e-9


class DecompositionError(RuntimeError):
    """A structured solution failed its own identity check."""


# ---------------------------------------------------------------- LP1


@dataclass(frozen=True)
class Lp1Solution:
    """Optimal LP1 allocation probabilities and interim prices.

    ``x[i]`` has shape (K_i, n); ``P[i]`` has shape (K_i,).
    """

    x: tuple[np.ndarray, ...]
    P: tuple[np.ndarray, ...]
    objective: float


def _lp1_layout(inst: CorrelatedInstance):
    x_idx, p_idx, k = [], [], 0
    n = inst.n_items
    for i in range(inst.n_bidders):
        K = inst.n_types(i)
        x_idx.append(np.arange(k, k + K * n).reshape(K, n))
        k += K * n
        p_idx.append(np.arange(k, k + K))
        k += K
    return x_idx, p_idx


def build_lp1(inst: CorrelatedInstance) -> LinearProgram:
    n, m = inst.n_items, inst.n_bidders
    lp = LPBuilder()
    x_idx, p_idx = [], []
    for i in range(m):
        f = inst.type_probs[i]
        B = float(inst.budgets[i])
        xs = np.array([[lp.add_var(f"x[{i},{j},{t}]", 0.0, 1.0) for j in range(n)]
                       for t in range(inst.n_types(i))], dtype=int).reshape(inst.n_types(i), n)
        ps = np.array([lp.add_var(f"P[{i},{t}]", 0.0, B, obj=f[t]) for t in range(inst.n_types(i))])
        x_idx.append(xs)
        p_idx.append(ps)
    for j in range(n):
        row = {}
        for i in range(m):
            for t, f in enumerate(inst.type_probs[i]):
                row[x_idx[i][t, j]] = f
        lp.add_row(f"supply[{j}]", row, 1.0)
    for i in range(m):
        for t in range(inst.n_types(i)):
            lp.add_row(f"demand[{i},{t}]", {x_idx[i][t, j]: 1.0 for j in range(n)}, inst.demands[i])
    for i in range(m):
        vals = inst.type_values[i]
        K = inst.n_types(i)
        for t in range(K):
            for s in range(K):
                if s == t:
                    continue
                # v_t.x(s) - P(s) - v_t.x(t) + P(t) <= 0
                row = {p_idx[i][s]: -1.0, p_idx[i][t]: 1.0}
                for j in range(n):
                    row[x_idx[i][s, j]] = row.get(x_idx[i][s, j], 0.0) + vals[t, j]
                    row[x_idx[i][t, j]] = row.get(x_idx[i][t, j], 0.0) - vals[t, j]
                lp.add_row(f"bic[{i},{t},{s}]", row, 0.0)
        for t in range(K):
            row = {p_idx[i][t]: 1.0}
            for j in range(n):
                row[x_idx[i][t, j]] = -vals[t, j]
            lp.add_row(f"ir[{i},{t}]", row, 0.0)
    return lp.build()


def _require_optimal(sol: LPSolution, what: str) -> None:
    if not sol.optimal:
        raise SolverError(f"{what} solve ended with status {sol.status}")


def solve_lp1(inst: CorrelatedInstance, method: str = DEFAULT_METHOD) -> Lp1Solution:
    sol = solve(build_lp1(inst), method)
    _require_optimal(sol, "LP1")
    x_idx, p_idx = _lp1_layout(inst)
    return Lp1Solution(tuple(sol.x[ix] for ix in x_idx), tuple(sol.x[ix] for ix in p_idx),
                       sol.objective)


# ------------------------------------------------------ product programs


@dataclass(frozen=True)
class EdgeAllocation:
    """Allocation x(r) over the support of the capped value law of one edge."""

    dist: DiscreteDistribution
    x: np.ndarray
    bidder: int = -1
    item: int = -1
    payments: np.ndarray | None = None

    @property
    def revenue_weight(self) -> float:
        """sum_r r f(r) x(r)"""
        return float(np.sum(self.dist.values * self.dist.probs * self.x))

    @property
    def mass(self) -> float:
        """sum_r f(r) x(r)"""
        return float(np.sum(self.dist.probs * self.x))

    @property
    def virtual_surplus(self) -> float:
        """sum_r f(r) phi(r) x(r)"""
        return float(np.sum(_phi(self.dist) * self.dist.probs * self.x))


@dataclass(frozen=True)
class ProductLPSolution:
    kind: str
    objective: float
    edges: tuple[tuple[EdgeAllocation, ...], ...]

    def edge(self, i: int, j: int) -> EdgeAllocation:
        return self.edges[i][j]

    def flat(self):
        return [e for row in self.edges for e in row]


def _phi(d: DiscreteDistribution) -> np.ndarray:
    return np.array([float(v) for v in d.virtual_values])


def _require_regular(inst: ProductInstance) -> None:
    for i, row in enumerate(inst.truncated):
        for j, d in enumerate(row):
            if not classify(d).is_regular:
                raise ValueError(f"edge ({i},{j}): capped value law is not regular")


def _edge_rows(lp: LPBuilder, inst: ProductInstance, x_idx, weight_budget, with_budget: bool):
    m, n = inst.n_bidders, inst.n_items
    for i in range(m):
        row = {}
        for j in range(n):
            for k, f in zip(x_idx[i][j], inst.truncated[i][j].probs):
                row[k] = f
        lp.add_row(f"demand[{i}]", row, inst.demands[i])
    if with_budget:
        for i in range(m):
            row = {}
            for j in range(n):
                for k, w in zip(x_idx[i][j], weight_budget(i, j)):
                    row[k] = w
            lp.add_row(f"budget[{i}]", row, float(inst.budgets[i]))
    for j in range(n):
        row = {}
        for i in range(m):
            for k, f in zip(x_idx[i][j], inst.truncated[i][j].probs):
                row[k] = f
        lp.add_row(f"supply[{j}]", row, 1.0)


def _add_edge_vars(lp: LPBuilder, inst: ProductInstance, weight, name="x"):
    idx = []
    for i, row in enumerate(inst.truncated):
        idx.append([])
        for j, d in enumerate(row):
            w = weight(i, j)
            idx[i].append(np.array([lp.add_var(f"{name}[{i},{j},{v}]", 0.0, 1.0, obj=w[k])
                                    for k, v in enumerate(d.support)], dtype=int))
    return idx


def _rev_weights(inst):
    return lambda i, j: inst.truncated[i][j].values * inst.truncated[i][j].probs


def _virt_weights(inst):
    return lambda i, j: _phi(inst.truncated[i][j]) * inst.truncated[i][j].probs


def build_lprev(inst: ProductInstance, with_budget: bool = True) -> LinearProgram:
    """Revenue LP over capped values; without the budget rows it bounds welfare."""
    lp = LPBuilder()
    w = _rev_weights(inst)
    x_idx = _add_edge_vars(lp, inst, w)
    _edge_rows(lp, inst, x_idx, w, with_budget)
    return lp.build()


def build_lp2(inst: ProductInstance) -> LinearProgram:
    _require_regular(inst)
    lp = LPBuilder()
    w = _virt_weights(inst)
    x_idx = _add_edge_vars(lp, inst, w)
    _edge_rows(lp, inst, x_idx, w, True)
    return lp.build()


def build_lpseq(inst: ProductInstance) -> LinearProgram:
    """Variables x(r) in [0,1] and payments p(r) >= 0 for every edge."""
    lp = LPBuilder()
    m, n = inst.n_bidders, inst.n_items
    zero = lambda i, j: np.zeros(len(inst.truncated[i][j]))
    x_idx = _add_edge_vars(lp, inst, zero, "x")
    p_idx = []
    for i, row in enumerate(inst.truncated):
        p_idx.append([])
        for j, d in enumerate(row):
            p_idx[i].append(np.array([lp.add_var(f"p[{i},{j},{v}]", 0.0, np.inf, obj=f)
                                      for v, f in zip(d.support, d.probs)], dtype=int))
    for i in range(m):
        row = {}
        for j in range(n):
            for k, f in zip(x_idx[i][j], inst.truncated[i][j].probs):
                row[k] = f
        lp.add_row(f"demand[{i}]", row, inst.demands[i])
    for i in range(m):
        row = {}
        for j in range(n):
            for k, f in zip(p_idx[i][j], inst.truncated[i][j].probs):
                row[k] = f
        lp.add_row(f"budget[{i}]", row, float(inst.budgets[i]))
    for j in range(n):
        row = {}
        for i in range(m):
            for k, f in zip(x_idx[i][j], inst.truncated[i][j].probs):
                row[k] = f
        lp.add_row(f"supply[{j}]", row, 1.0)
    for i in range(m):
        for j in range(n):
            d = inst.truncated[i][j]
            xs, ps = x_idx[i][j], p_idx[i][j]
            r, gaps = d.values, [float(g) for g in d.gaps]
            for k in range(len(d)):
                row = {ps[k]: 1.0, xs[k]: -r[k]}
                for l in range(k):
                    row[xs[l]] = gaps[l]
                lp.add_row(f"myerson[{i},{j},{d.support[k]}]", row, 0.0)
            for k in range(1, len(d)):
                lp.add_row(f"xmono[{i},{j},{d.support[k]}]", {xs[k - 1]: 1.0, xs[k]: -1.0}, 0.0)
            for k in range(1, len(d)):
                lp.add_row(f"pmono[{i},{j},{d.support[k]}]", {ps[k - 1]: 1.0, ps[k]: -1.0}, 0.0)
    return lp.build()


def _edge_layout(inst: ProductInstance, start: int = 0):
    idx, k = [], start
    for row in inst.truncated:
        idx.append([])
        for d in row:
            idx[-1].append(np.arange(k, k + len(d)))
            k += len(d)
    return idx, k


def _to_edges(inst: ProductInstance, x: np.ndarray, payments: np.ndarray | None = None):
    x_idx, end = _edge_layout(inst)
    p_idx = _edge_layout(inst, end)[0] if payments is not None else None
    return tuple(
        tuple(EdgeAllocation(inst.truncated[i][j], np.clip(x[x_idx[i][j]], 0.0, 1.0), i, j,
                             None if payments is None else payments[p_idx[i][j]])
              for j in range(inst.n_items))
        for i in range(inst.n_bidders))


def solve_lprev(inst: ProductInstance, method: str = DEFAULT_METHOD,
                with_budget: bool = True) -> ProductLPSolution:
    sol = solve(build_lprev(inst, with_budget), method)
    _require_optimal(sol, "LPRev")
    return ProductLPSolution("lprev" if with_budget else "lprev-welfare", sol.objective,
                             _to_edges(inst, sol.x))


def solve_lp2(inst: ProductInstance, method: str = DEFAULT_METHOD) -> ProductLPSolution:
    sol = solve(build_lp2(inst), method)
    _require_optimal(sol, "LP2")
    return ProductLPSolution("lp2", sol.objective, _to_edges(inst, sol.x))


def solve_lpseq(inst: ProductInstance, method: str = DEFAULT_METHOD) -> ProductLPSolution:
    sol = solve(build_lpseq(inst), method)
    _require_optimal(sol, "LPSeq")
    return ProductLPSolution("lpseq", sol.objective, _to_edges(inst, sol.x, sol.x))


def lift_to_lpseq(inst: ProductInstance, sol: ProductLPSolution) -> np.ndarray:
    """LPSeq variable vector with p(r) set to the payment form of x."""
    xs, ps = [], []
    for e in sol.flat():
        xs.append(e.x)
        ps.append(np.asarray(payment_form(e.dist, list(e.x)), dtype=float))
    return np.concatenate(xs + ps)


# ------------------------------------------------------ structural passes


def _top_fill(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Push allocation upward pairwise, preserving sum(w * x).

    Each transfer lowers x at the lowest allocated point and raises it at the
    highest unsaturated point.  Points with w == 0 are simply cleared.
    """
    x = x.copy()
    K = x.size
    lo, hi = 0, K - 1
    while True:
        while lo < K and x[lo] <= 0.0:
            lo += 1
        while hi >= 0 and x[hi] >= 1.0:
            hi -= 1
        if lo >= hi:
            return x
        if w[lo] <= 0.0:
            x[lo] = 0.0
            continue
        need = (1.0 - x[hi]) * w[hi]   # weight that fills the high point
        have = x[lo] * w[lo]           # weight available at the low point
        if have <= need:
            x[hi] += have / w[hi]
            x[lo] = 0.0
            if x[hi] > 1.0:
                x[hi] = 1.0
        else:
            x[lo] -= need / w[lo]
            x[hi] = 1.0


def monotone_repair(edge: EdgeAllocation) -> EdgeAllocation:
    """Make x non-decreasing while keeping sum_r r f x.

    Monotone inputs are returned unchanged; otherwise allocation is moved
    pairwise from low to high values, which can only lower sum_r f x.
    """
    x = np.clip(np.asarray(edge.x, dtype=float), 0.0, 1.0)
    if np.all(np.diff(x) >= 0.0):
        return edge
    w = edge.dist.values * edge.dist.probs
    return replace(edge, x=_top_fill(x, w))


@dataclass(frozen=True)
class EdgePosting:
    """Two-threshold lottery for one edge.

    With probability ``p`` post ``r_star``; otherwise post ``s_star`` (the next
    support point), or nothing when ``s_star`` is None.
    """

    bidder: int
    item: int
    r_star: Fraction
    s_star: Fraction | None
    p: float
    value: float
    residual: float

    def price_options(self) -> tuple[float, float]:
        second = float(self.s_star) if self.s_star is not None else np.inf
        return float(self.r_star), second


def step_decompose(edge: EdgeAllocation, budget) -> EdgePosting:
    d = edge.dist
    if not classify(d).is_regular:
        raise ValueError("step_decompose requires a regular value law")
    f = d.probs
    phi = _phi(d)
    w = f * phi
    x = np.clip(np.asarray(edge.x, dtype=float), 0.0, 1.0)
    target = float(np.sum(w * x))

    neg = (phi < 0) & (x > 0)
    if neg.any():
        deficit = float(np.sum(-w[neg] * x[neg]))
        x[neg] = 0.0
        for k in np.nonzero(w > 0)[0]:
            if deficit <= 0.0:
                break
            take = min(x[k] * w[k], deficit)
            x[k] -= take / w[k]
            deficit -= take
        if deficit > EQ1_TOL:
            raise ValueError("edge has negative virtual surplus; restructure the LP solution first")

    x = _top_fill(x, w)
    support = d.support
    allocated = np.nonzero(x > 0.0)[0]
    if allocated.size == 0:
        k0, p = len(support) - 1, 0.0
    else:
        k0 = int(allocated[0])
        p = float(x[k0])
    if np.any(x[k0 + 1:] < 1.0) and allocated.size:
        raise DecompositionError("allocation is not a step function after shifting")
    r_star = support[k0]
    s_star = support[k0 + 1] if k0 + 1 < len(support) else None
    first = float(r_star) * float(d.at_least[k0])
    second = float(s_star) * float(d.at_least[k0 + 1]) if s_star is not None else 0.0
    value = p * first + (1.0 - p) * second
    residual = abs(target - value)
    if residual > EQ1_TOL:
        raise DecompositionError(f"Eq. residual {residual:.3g} on edge ({edge.bidder},{edge.item})")
    if r_star > Fraction(budget) / 4:
        raise DecompositionError("threshold exceeds a quarter of the budget")
    return EdgePosting(edge.bidder, edge.item, r_star, s_star, p, value, residual)


def structure_lp2(inst: ProductInstance, sol: ProductLPSolution) -> ProductLPSolution:
    """Remove allocation at negative virtual values without changing any bidder's
    virtual surplus; positive edges of that bidder are scaled down to compensate."""
    rows = []
    for i, row in enumerate(sol.edges):
        phis = [_phi(e.dist) for e in row]
        if not any(np.any((ph < 0) & (e.x > 0)) for e, ph in zip(row, phis)):
            rows.append(tuple(row))
            continue
        total = sum(e.virtual_surplus for e in row)
        cleaned = [np.where(ph < 0, 0.0, e.x) for e, ph in zip(row, phis)]
        positive = sum(float(np.sum(ph * e.dist.probs * x)) for e, ph, x in zip(row, phis, cleaned))
        if positive > total and positive > 0:
            scale = max(total, 0.0) / positive
            cleaned = [x * scale for x in cleaned]
        rows.append(tuple(replace(e, x=x) for e, x in zip(row, cleaned)))
    return ProductLPSolution(sol.kind, sol.objective, tuple(rows))


def decompose_lp2(inst: ProductInstance, sol: ProductLPSolution) -> tuple[tuple[EdgePosting, ...], ...]:
    structured = structure_lp2(inst, sol)
    return tuple(tuple(step_decompose(e, inst.budgets[e.bidder]) for e in row)
                 for row in structured.edges)


def postings_to_lpseq_point(inst: ProductInstance, sol: ProductLPSolution) -> np.ndarray:
    """LPSeq point built from the step-structured LP2 optimum."""
    structured = structure_lp2(inst, sol)
    rows = []
    for row in structured.edges:
        new_row = []
        for e in row:
            w = _phi(e.dist) * e.dist.probs
            new_row.append(replace(e, x=_top_fill(np.clip(e.x, 0, 1), w)))
        rows.append(tuple(new_row))
    return lift_to_lpseq(inst, ProductLPSolution("lp2", sol.objective, tuple(rows)))


# ------------------------------------------------------ power-of-two groups


def _log2_floor(r: Fraction) -> int:
    k = r.numerator.bit_length() - r.denominator.bit_length()
    two = Fraction(2)
    while two**k > r:
        k -= 1
    while two ** (k + 1) <= r:
        k += 1
    return k


@dataclass(frozen=True)
class GroupedPosting:
    """Single posted price for one edge chosen from its best power-of-two band."""

    bidder: int
    item: int
    group: int | None
    price: Fraction
    accept: float
    survival: float

    @property
    def expected_revenue(self) -> float:
        return float(self.price) * self.accept * self.survival


def group_count(inst: ProductInstance) -> int:
    """floor(log2 L) - floor(log2 l) + 1 with l = min(1, smallest capped value)."""
    values = [v for row in inst.truncated for d in row for v in d.support]
    top = _log2_floor(max(values))
    bottom = min(0, _log2_floor(min(values)))
    return top - bottom + 1


def power_group(sol: ProductLPSolution, inst: ProductInstance) -> tuple[tuple[GroupedPosting, ...], ...]:
    rows = []
    for row in sol.edges:
        out = []
        for e in row:
            e = monotone_repair(e)
            d = e.dist
            x = np.clip(e.x, 0.0, 1.0)
            groups: dict[int, list[int]] = {}
            for k, v in enumerate(d.support):
                groups.setdefault(_log2_floor(v), []).append(k)
            best, best_mass = None, 0.0
            for g in sorted(groups):
                ks = groups[g]
                mass = float(np.sum(d.values[ks] * d.probs[ks] * x[ks]))
                if mass > best_mass:
                    best, best_mass = g, mass
            if best is None:
                out.append(GroupedPosting(e.bidder, e.item, None, Fraction(0), 0.0, 0.0))
                continue
            ks = groups[best]
            accept = float(np.sum(d.probs[ks] * x[ks]) / np.sum(d.probs[ks]))
            price = Fraction(2) ** best
            out.append(GroupedPosting(e.bidder, e.item, best, price, min(accept, 1.0),
                                      float(d.prob_at_least(price))))
        rows.append(tuple(out))
    return tuple(rows)


def grouped_constraints(grouped, inst: ProductInstance, tol: float = 1e-9) -> dict[str, bool]:
    """Demand, budget, supply and price-cap checks on a grouped posting."""
    m, n = inst.n_bidders, inst.n_items
    xq = np.array([[g.accept * g.survival for g in row] for row in grouped]).reshape(m, n)
    rev = np.array([[g.expected_revenue for g in row] for row in grouped]).reshape(m, n)
    caps = all(g.price <= inst.budgets[g.bidder] / 4 for row in grouped for g in row)
    return {
        "demand": bool(np.all(xq.sum(axis=1) <= np.array(inst.demands) + tol)),
        "budget": bool(np.all(rev.sum(axis=1) <= np.array([float(b) for b in inst.budgets]) + tol)),
        "supply": bool(np.all(xq.sum(axis=0) <= 1.0 + tol)),
        "price_cap": caps,
    }
