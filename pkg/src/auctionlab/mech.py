"""Executable mechanisms.

Each mechanism offers ``run`` (one trial on a given profile, returning an
``AuctionOutcome``) and ``simulate`` (many trials at once, vectorised over
trials, returning a ``TrialBatch``).  Both draw all randomness from the
caller's ``numpy.random.Generator``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import CorrelatedInstance, ProductInstance, TypeProfile, sample_types, sample_values
from .relax import EdgePosting, GroupedPosting, Lp1Solution

EXACT_CHOICE_LIMIT = 20
BATCH_ENUM_LIMIT = 12
TIE_TOL = 1e-9
BUDGET_TOL = 1e-9


class MechanismError(RuntimeError):
    """A plan invariant needed by a mechanism does not hold."""


@dataclass(frozen=True)
class AuctionOutcome:
    allocations: tuple[frozenset, ...]
    prices: tuple[float, ...]
    utilities: tuple[float, ...]
    remaining: frozenset
    revenue: float
    welfare: float
    offers: tuple[dict, ...] | None = None


@dataclass
class TrialBatch:
    """Per-trial results of a vectorised simulation."""

    revenue: np.ndarray                  # (T,)
    welfare: np.ndarray                  # (T,)
    won: np.ndarray                      # (T, m, n) bool
    payments: np.ndarray                 # (T, m)
    good: np.ndarray | None = None       # (T, m, n) bool, posted-price diagnostics
    offered: np.ndarray | None = None    # (T, m, n) bool
    offer_prices: np.ndarray | None = None  # (T, m, n) offered price, 0 where nothing was offered


def _order(m: int, order: Sequence[int] | None) -> tuple[int, ...]:
    if order is None:
        return tuple(range(m))
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(m)):
        raise ValueError("order must be a permutation of the bidders")
    return order


# ------------------------------------------------------------------ all-pay


def partition_groups(weights: Sequence[float], bins: int, tol: float = 1e-9) -> list[list[int]]:
    """First-fit items into ``bins`` groups whose weights sum to at most 1.

    With every weight <= 1/2 and total <= bins/2 first-fit never runs out of
    room; heavier totals are attempted and rejected only if some item fits
    nowhere.
    """
    w = [float(x) for x in weights]
    if bins < 1:
        raise ValueError("need at least one group")
    if any(x < -tol or x > 0.5 + tol for x in w):
        raise ValueError("each weight must lie in [0, 1/2]")
    groups: list[list[int]] = [[] for _ in range(bins)]
    load = [0.0] * bins
    for j, x in enumerate(w):
        for g in range(bins):
            if load[g] + x <= 1.0 + tol:
                groups[g].append(j)
                load[g] += x
                break
        else:
            raise ValueError(f"item {j} fits in no group")
    return groups


@dataclass(frozen=True)
class AllPayPlan:
    half_x: tuple[np.ndarray, ...]              # x*/2 per bidder, (K_i, n)
    X: np.ndarray                               # (m, n)
    Z: np.ndarray                               # (m, n), availability at bidder i
    groups: tuple[tuple[tuple[tuple[int, ...], ...], ...], ...]
    prices: tuple[np.ndarray, ...]              # P*/4 per bidder, (K_i,)
    order: tuple[int, ...]


def plan_allpay(inst: CorrelatedInstance, lp1: Lp1Solution,
                order: Sequence[int] | None = None, tol: float = 1e-7) -> AllPayPlan:
    m, n = inst.n_bidders, inst.n_items
    order = _order(m, order)
    half = tuple(np.clip(x, 0.0, 1.0) / 2 for x in lp1.x)
    X = np.array([inst.type_probs[i] @ half[i] for i in range(m)]).reshape(m, n)
    if np.any(X.sum(axis=0) > 0.5 + tol):
        raise MechanismError("scaled expected supply exceeds 1/2")
    Z = np.ones((m, n))
    survive = np.ones(n)
    for i in order:
        Z[i] = survive
        survive = survive * (1.0 - X[i])
    groups = []
    for i in range(m):
        per_type = []
        for t in range(inst.n_types(i)):
            parts = partition_groups(np.minimum(half[i][t], 0.5), inst.demands[i], tol)
            per_type.append(tuple(tuple(g) for g in parts))
        groups.append(tuple(per_type))
    prices = tuple(np.clip(P, 0.0, None) / 4 for P in lp1.P)
    return AllPayPlan(half, X, Z, tuple(groups), prices, order)


def _accept_prob(plan: AllPayPlan, i: int, j) -> np.ndarray:
    acc = 0.5 / plan.Z[i, j]
    if np.any(acc > 1.0 + 1e-7):
        raise MechanismError("keep probability above one; LP1 solution is not feasible")
    return np.minimum(acc, 1.0)


class AllPayAuction:
    """Sequential all-pay auction driven by an optimal LP1 solution."""

    def __init__(self, inst: CorrelatedInstance, lp1: Lp1Solution, order: Sequence[int] | None = None):
        self.instance = inst
        self.lp1 = lp1
        self.plan = plan_allpay(inst, lp1, order)

    def run(self, profile: TypeProfile, rng: np.random.Generator) -> AuctionOutcome:
        inst, plan = self.instance, self.plan
        m, n = inst.n_bidders, inst.n_items
        J = set(range(n))
        won = [frozenset()] * m
        prices = [0.0] * m
        for i in plan.order:
            t = profile.types[i]
            W = set()
            for group in plan.groups[i][t]:
                u = rng.random()
                acc, pick = 0.0, None
                for j in group:
                    acc += plan.half_x[i][t, j]
                    if u < acc:
                        pick = j
                        break
                if pick is not None and pick in J:
                    if rng.random() < float(_accept_prob(plan, i, pick)):
                        W.add(pick)
                    J.discard(pick)
            won[i] = frozenset(W)
            prices[i] = float(plan.prices[i][t])
        vals = [inst.type_values[i][profile.types[i]] for i in range(m)]
        utils = tuple(float(sum(vals[i][j] for j in won[i])) - prices[i] for i in range(m))
        welfare = float(sum(vals[i][j] for i in range(m) for j in won[i]))
        return AuctionOutcome(tuple(won), tuple(prices), utils, frozenset(J), float(sum(prices)), welfare)

    def simulate(self, trials: int, rng: np.random.Generator, types: np.ndarray | None = None) -> TrialBatch:
        inst, plan = self.instance, self.plan
        m, n = inst.n_bidders, inst.n_items
        if types is None:
            types = sample_types(inst, rng, trials)
        T = types.shape[0]
        avail = np.ones((T, n), dtype=bool)
        won = np.zeros((T, m, n), dtype=bool)
        payments = np.zeros((T, m))
        for i in plan.order:
            ti = types[:, i]
            for t in range(inst.n_types(i)):
                rows = np.nonzero(ti == t)[0]
                if rows.size == 0:
                    continue
                for group in plan.groups[i][t]:
                    if not group:
                        continue
                    g = np.asarray(group)
                    cum = np.cumsum(plan.half_x[i][t, g])
                    pos = np.searchsorted(cum, rng.random(rows.size), side="right")
                    hit = pos < g.size
                    r_hit, items = rows[hit], g[pos[hit]]
                    ok = avail[r_hit, items]
                    keep = rng.random(r_hit.size) < _accept_prob(plan, i, items)
                    sel = ok & keep
                    won[r_hit[sel], i, items[sel]] = True
                    avail[r_hit[ok], items[ok]] = False
            payments[:, i] = plan.prices[i][ti]
        welfare = np.zeros(T)
        for i in range(m):
            welfare += np.sum(won[:, i, :] * inst.type_values[i][types[:, i]], axis=1)
        return TrialBatch(payments.sum(axis=1), welfare, won, payments)


def run_allpay(inst: CorrelatedInstance, lp1: Lp1Solution, profile: TypeProfile,
               rng: np.random.Generator, order: Sequence[int] | None = None) -> AuctionOutcome:
    return AllPayAuction(inst, lp1, order).run(profile, rng)


# ---------------------------------------------------------- bidder choice


def _enumerate(util, cost, offer, demand, budget):
    """Best subset per row; rows are trials.

    Rows where every offered non-negative-utility item fits at once take
    exactly those items (the optimum, and the largest optimal set); the rest
    are solved by exhaustive enumeration.
    """
    take = offer & (util >= 0.0)
    fits = (take.sum(axis=1) <= demand) & (np.where(take, cost, 0.0).sum(axis=1) <= budget + BUDGET_TOL)
    if fits.all():
        return take
    out = take.copy()
    hard = ~fits
    out[hard] = _enumerate_all(util[hard], cost[hard], offer[hard], demand, budget)
    return out


def _enumerate_all(util, cost, offer, demand, budget):
    T, k = util.shape
    U = np.zeros((T, 1))
    C = np.zeros((T, 1))
    bad = np.zeros((T, 1), dtype=bool)
    size = np.zeros(1, dtype=np.int64)
    for j in range(k):
        uj = np.where(offer[:, j], util[:, j], 0.0)[:, None]
        cj = np.where(offer[:, j], cost[:, j], 0.0)[:, None]
        U = np.concatenate([U, U + uj], axis=1)
        C = np.concatenate([C, C + cj], axis=1)
        bad = np.concatenate([bad, bad | ~offer[:, j][:, None]], axis=1)
        size = np.concatenate([size, size + 1])
    feasible = ~bad & (size <= demand)[None, :] & (C <= budget + BUDGET_TOL)
    U = np.where(feasible, U, -np.inf)
    best = U.max(axis=1, keepdims=True)
    cand = U >= best - TIE_TOL
    sz = np.where(cand, size[None, :], -1)
    final = cand & (sz == sz.max(axis=1, keepdims=True))
    idx = np.argmax(final, axis=1)
    return ((idx[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)


def _greedy(util: np.ndarray, cost: np.ndarray, demand: int, budget: float) -> np.ndarray:
    chosen = np.zeros(util.size, dtype=bool)
    pos = [k for k in range(util.size) if util[k] > TIE_TOL]
    zero = [k for k in range(util.size) if abs(util[k]) <= TIE_TOL]
    pos.sort(key=lambda k: (-(util[k] / cost[k]) if cost[k] > 0 else -np.inf, k))
    spent, count = 0.0, 0
    for k in pos + zero:
        if count < demand and spent + cost[k] <= budget + BUDGET_TOL:
            chosen[k] = True
            spent += cost[k]
            count += 1
    return chosen


def bidder_choose(offers: Sequence[tuple[int, float]], values: Sequence[float], budget, demand: int) -> frozenset:
    """Utility-maximising purchase under a budget and a cardinality cap.

    Exact (subset enumeration) for up to 20 offers; beyond that, a greedy pass
    by utility per unit price that takes every non-negative-utility item
    whenever they all fit.  Ties prefer more items, then the lowest item ids.
    """
    if not offers:
        return frozenset()
    pairs = sorted(zip((int(j) for j, _ in offers), (float(p) for _, p in offers), (float(v) for v in values)))
    items = [j for j, _, _ in pairs]
    price = np.array([p for _, p, _ in pairs])
    val = np.array([v for _, _, v in pairs])
    util = val - price
    if len(items) <= EXACT_CHOICE_LIMIT:
        pick = _enumerate(util[None, :], price[None, :], np.ones((1, len(items)), bool),
                          demand, float(budget))[0]
    else:
        pick = _greedy(util, price, demand, float(budget))
    return frozenset(j for j, b in zip(items, pick) if b)


def choose_batch(offer: np.ndarray, price: np.ndarray, value: np.ndarray, budget, demand: int) -> np.ndarray:
    """Vectorised ``bidder_choose`` over trials; returns the (T, n) purchase mask."""
    T, n = offer.shape
    price = np.where(offer, price, 0.0)
    util = value - price
    if n > BATCH_ENUM_LIMIT:
        out = np.zeros((T, n), dtype=bool)
        for r in range(T):
            js = np.nonzero(offer[r])[0]
            got = bidder_choose([(j, price[r, j]) for j in js], value[r, js], budget, demand)
            out[r, list(got)] = True
        return out
    block = max(1, (1 << 20) >> n)
    out = np.empty((T, n), dtype=bool)
    for s in range(0, T, block):
        sl = slice(s, s + block)
        out[sl] = _enumerate(util[sl], price[sl], offer[sl], demand, float(budget))
    return out


# ------------------------------------------------------ posted-price runs


class _SequentialPricing:
    """Shared driver: per bidder, offer surviving items at given prices."""

    def __init__(self, inst: ProductInstance, order: Sequence[int] | None):
        self.instance = inst
        self.order = _order(inst.n_bidders, order)
        self.budgets = np.array([float(b) for b in inst.budgets])

    # subclasses fill these
    def _draw_prices(self, rng, T) -> np.ndarray:
        raise NotImplementedError

    def _offer_probs(self) -> np.ndarray:
        raise NotImplementedError

    def run(self, profile: TypeProfile, rng: np.random.Generator) -> AuctionOutcome:
        inst = self.instance
        m, n = inst.n_bidders, inst.n_items
        values = np.asarray(profile.values, dtype=float).reshape(m, n)
        prices = self._draw_prices(rng, 1)[0]
        q = self._offer_probs()
        J = set(range(n))
        won = [frozenset()] * m
        paid = [0.0] * m
        offers = [dict() for _ in range(m)]
        for i in self.order:
            draws = rng.random(n)
            W = {j: float(prices[i, j]) for j in sorted(J)
                 if draws[j] < q[i, j] and np.isfinite(prices[i, j])}
            offers[i] = W
            S = bidder_choose(list(W.items()), [values[i, j] for j in W], inst.budgets[i], inst.demands[i])
            won[i] = S
            paid[i] = float(sum(W[j] for j in S))
            J -= S
        utils = tuple(float(sum(values[i, j] for j in won[i])) - paid[i] for i in range(m))
        welfare = float(sum(values[i, j] for i in range(m) for j in won[i]))
        return AuctionOutcome(tuple(won), tuple(paid), utils, frozenset(J), float(sum(paid)), welfare,
                              tuple(offers))

    def simulate(self, trials: int, rng: np.random.Generator, values: np.ndarray | None = None) -> TrialBatch:
        inst = self.instance
        m, n = inst.n_bidders, inst.n_items
        prices = self._draw_prices(rng, trials)
        if values is None:
            values = sample_values(inst, rng, trials)
        T = values.shape[0]
        q = self._offer_probs()
        avail = np.ones((T, n), dtype=bool)
        won = np.zeros((T, m, n), dtype=bool)
        offered = np.zeros((T, m, n), dtype=bool)
        good = np.zeros((T, m, n), dtype=bool)
        offer_prices = np.zeros((T, m, n))
        for i in self.order:
            before = avail.copy()
            offer = avail & (rng.random((T, n)) < q[i][None, :]) & np.isfinite(prices[:, i, :])
            bought = choose_batch(offer, prices[:, i, :], values[:, i, :], inst.budgets[i], inst.demands[i])
            paid = np.where(bought, prices[:, i, :], 0.0)
            spend = paid.sum(axis=1, keepdims=True)
            count = bought.sum(axis=1, keepdims=True)
            good[:, i, :] = (before
                             & (spend - paid < 0.75 * self.budgets[i])
                             & (count - bought < inst.demands[i]))
            won[:, i, :] = bought
            offered[:, i, :] = offer
            offer_prices[:, i, :] = np.where(offer, prices[:, i, :], 0.0)
            avail &= ~bought
        payments = np.where(won, offer_prices, 0.0).sum(axis=2)
        welfare = np.sum(np.where(won, values, 0.0), axis=(1, 2))
        return TrialBatch(payments.sum(axis=1), welfare, won, payments, good, offered, offer_prices)


class PostedPriceAuction(_SequentialPricing):
    """Each surviving item is offered with probability 1/4 at a lottery threshold."""

    def __init__(self, inst: ProductInstance, postings: Sequence[Sequence[EdgePosting]],
                 order: Sequence[int] | None = None):
        super().__init__(inst, order)
        self.postings = postings
        m, n = inst.n_bidders, inst.n_items
        self._first = np.zeros((m, n))
        self._second = np.zeros((m, n))
        self._p = np.zeros((m, n))
        for row in postings:
            for e in row:
                if e.r_star > inst.budgets[e.bidder] / 4:
                    raise MechanismError(f"threshold above B/4 on edge ({e.bidder},{e.item})")
                self._first[e.bidder, e.item], self._second[e.bidder, e.item] = e.price_options()
                self._p[e.bidder, e.item] = e.p

    def _draw_prices(self, rng, T):
        pick_first = rng.random((T,) + self._p.shape) < self._p[None]
        return np.where(pick_first, self._first[None], self._second[None])

    def _offer_probs(self):
        return np.full(self._p.shape, 0.25)


class GeneralPostedPriceAuction(_SequentialPricing):
    """Offer item j to bidder i with probability x*/4 at the band price."""

    def __init__(self, inst: ProductInstance, grouped: Sequence[Sequence[GroupedPosting]],
                 order: Sequence[int] | None = None):
        super().__init__(inst, order)
        self.grouped = grouped
        m, n = inst.n_bidders, inst.n_items
        self._price = np.full((m, n), np.inf)
        self._q = np.zeros((m, n))
        for row in grouped:
            for g in row:
                if g.group is not None and g.accept > 0:
                    self._price[g.bidder, g.item] = float(g.price)
                    self._q[g.bidder, g.item] = g.accept / 4

    def _draw_prices(self, rng, T):
        return np.broadcast_to(self._price, (T,) + self._price.shape)

    def _offer_probs(self):
        return self._q


def run_postedprice(inst: ProductInstance, postings, profile: TypeProfile, rng: np.random.Generator,
                    order: Sequence[int] | None = None) -> AuctionOutcome:
    return PostedPriceAuction(inst, postings, order).run(profile, rng)


def run_general_postedprice(inst: ProductInstance, grouped, profile: TypeProfile, rng: np.random.Generator,
                            order: Sequence[int] | None = None) -> AuctionOutcome:
    return GeneralPostedPriceAuction(inst, grouped, order).run(profile, rng)


# ------------------------------------------------------------- bundle demo


@dataclass(frozen=True)
class BundleReport:
    n: int
    epsilon: float
    trials: int
    harmonic: float
    bundle_price: float
    sell_frequency: float
    sell_se: float
    bundle_revenue: float
    item_revenue: float
    ratio: float


def harmonic(n: int) -> float:
    return math.fsum(1.0 / r for r in range(1, n + 1))


def sample_equal_revenue(n: int, rng: np.random.Generator, size) -> np.ndarray:
    """Pr[v >= r] = 1/r on {1..n} via inverse CDF: v = min(n, floor(1/U))."""
    u = 1.0 - rng.random(size)
    return np.minimum(float(n), np.floor(1.0 / u))


def bundle_demo(n: int, epsilon: float, trials: int, rng: np.random.Generator) -> BundleReport:
    """One bidder, n i.i.d. equal-revenue items: grand bundle vs item pricing."""
    if n < 2:
        raise ValueError("need at least two items")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if trials < 1:
        raise ValueError("need at least one trial")
    h = harmonic(n)
    price = n * h * (1.0 - epsilon)
    rows = max(1, 2_000_000 // n)
    sold = 0
    for s in range(0, trials, rows):
        k = min(rows, trials - s)
        sold += int(np.count_nonzero(sample_equal_revenue(n, rng, (k, n)).sum(axis=1) >= price))
    freq = sold / trials
    se = math.sqrt(freq * (1 - freq) / trials)
    # every posted item price earns at most max_r r * Pr[v >= r] = 1
    item_revenue = float(n)
    return BundleReport(n, float(epsilon), trials, h, price, freq, se, price * freq, item_revenue,
                        price * freq / item_revenue)
