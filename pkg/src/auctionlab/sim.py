"""Monte Carlo harness, exact small-instance oracles and ratio reports."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Protocol, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .dist import classify
from .lpcore import SolverError
from .mech import AllPayAuction, GeneralPostedPriceAuction, PostedPriceAuction, TrialBatch
from .model import (DEFAULT_PROFILE_CAP, CorrelatedInstance, ProductInstance, TooLargeError,
                    enumerate_profiles)
from .relax import (DEFAULT_METHOD, Lp1Solution, decompose_lp2, group_count, power_group,
                    solve_lp1, solve_lp2, solve_lprev, solve_lpseq)

Z95 = 1.96
DEFAULT_CHUNK = 50_000
DEFAULT_SEED = 20240601
# OPT-BIC inside a report is only attempted on small joint supports; the
# scenario LP grows with profiles x items and gets slow beyond this.
REPORT_OPT_CAP = 1_000


class Mechanism(Protocol):
    def simulate(self, trials: int, rng: np.random.Generator) -> TrialBatch: ...


@dataclass(frozen=True)
class RevenueEstimate:
    mean: float
    se: float | None
    trials: int
    ci: tuple[float, float] | None
    seed: int
    welfare: float = float("nan")


def _chunks(trials: int, chunk: int) -> list[int]:
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def iter_batches(mechanism: Mechanism, trials: int, seed: int, chunk: int = DEFAULT_CHUNK,
                 threads: int = 1) -> Iterator[TrialBatch]:
    """Simulate in fixed-size chunks, each with its own spawned stream.

    Chunk boundaries and streams depend only on (trials, seed, chunk), so the
    results are identical for any thread count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = _chunks(trials, chunk)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def work(k):
        return mechanism.simulate(sizes[k], np.random.default_rng(streams[k]))

    if threads <= 1:
        for k in range(len(sizes)):
            yield work(k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(work, range(len(sizes)))


def _summarise(x: np.ndarray) -> tuple[float, float | None]:
    mean = float(np.mean(x))
    if x.size < 2:
        return mean, None
    return mean, float(np.std(x, ddof=1) / math.sqrt(x.size))


def _collect(mechanism, trials, seed, chunk, threads, good: bool):
    revenue, welfare, hits = [], [], None
    for b in iter_batches(mechanism, trials, seed, chunk, threads):
        revenue.append(b.revenue)
        welfare.append(b.welfare)
        if good:
            s = b.good.sum(axis=0)
            hits = s if hits is None else hits + s
    rev = np.concatenate(revenue)
    mean, se = _summarise(rev)
    ci = (mean - Z95 * se, mean + Z95 * se) if se is not None else None
    est = RevenueEstimate(mean, se, trials, ci, seed, float(np.mean(np.concatenate(welfare))))
    return est, hits


def estimate_revenue(mechanism: Mechanism, trials: int, seed: int = DEFAULT_SEED,
                     chunk: int = DEFAULT_CHUNK, threads: int = 1) -> RevenueEstimate:
    return _collect(mechanism, trials, seed, chunk, threads, good=False)[0]


def posted_price_diagnostics(mechanism: PostedPriceAuction, trials: int, seed: int = DEFAULT_SEED,
                             chunk: int = DEFAULT_CHUNK, threads: int = 1
                             ) -> tuple[RevenueEstimate, np.ndarray, np.ndarray]:
    """Revenue estimate plus, per edge, the frequency (and SE) that the item is
    still unsold when the bidder is reached while the bidder's other purchases
    leave budget and demand headroom.  One simulation pass serves both."""
    est, hits = _collect(mechanism, trials, seed, chunk, threads, good=True)
    freq = hits / trials
    return est, freq, np.sqrt(freq * (1 - freq) / trials)


# ----------------------------------------------------------------- oracles


def allpay_expected_revenue(mechanism: AllPayAuction, cap: int = DEFAULT_PROFILE_CAP) -> Fraction | float:
    """Exact expected payment of the all-pay plan by enumerating joint profiles."""
    inst = mechanism.instance
    total = 0.0
    for profile, prob in enumerate_profiles(inst, cap):
        total += float(prob) * sum(float(mechanism.plan.prices[i][t]) for i, t in enumerate(profile.types))
    return total


def exact_opt_bic(inst: CorrelatedInstance | ProductInstance, cap: int = DEFAULT_PROFILE_CAP) -> float:
    """Optimal expected revenue over randomized BIC and interim-IR mechanisms.

    Scenario LP over every joint type profile: allocation probabilities and
    payments per profile, with supply and demand rows per profile.  Interim
    allocations and payments per (bidder, report) are auxiliary variables
    pinned by equality rows, so each incentive row stays short.
    """
    if isinstance(inst, ProductInstance):
        inst = inst.to_correlated(cap)
    pairs = sum(inst.n_types(i) ** 2 for i in range(inst.n_bidders))
    if pairs > 4 * cap:
        raise TooLargeError(f"{pairs} incentive rows exceed 4 x cap {cap}")
    profiles = enumerate_profiles(inst, cap)
    m, n = inst.n_bidders, inst.n_items
    S = len(profiles)
    per = m * (n + 1)
    # interim block: for bidder i and report k, n allocation entries then the payment
    interim = np.cumsum([0] + [inst.n_types(i) * (n + 1) for i in range(m)])
    base = S * per
    nvar = base + int(interim[-1])

    def xv(s, i, j):
        return s * per + i * (n + 1) + j

    def iv(i, k, j):
        return base + int(interim[i]) + k * (n + 1) + j

    probs = np.array([float(p) for _, p in profiles])
    c = np.zeros(nvar)
    lo = np.zeros(nvar)
    hi = np.zeros(nvar)
    lo[base:], hi[base:] = -np.inf, np.inf
    ub_r, ub_c, ub_v, ub_b = [], [], [], []
    eq_r, eq_c, eq_v = [], [], []
    n_ub = n_eq = 0

    for s, (prof, _) in enumerate(profiles):
        for i in range(m):
            c[xv(s, i, n)] = -probs[s]
            hi[xv(s, i, n)] = float(inst.budgets[i])
            hi[xv(s, i, 0):xv(s, i, 0) + n] = 1.0
        for j in range(n):
            ub_r += [n_ub] * m
            ub_c += [xv(s, i, j) for i in range(m)]
            ub_v += [1.0] * m
            ub_b.append(1.0)
            n_ub += 1
        for i in range(m):
            if inst.demands[i] < n:
                ub_r += [n_ub] * n
                ub_c += [xv(s, i, j) for j in range(n)]
                ub_v += [1.0] * n
                ub_b.append(float(inst.demands[i]))
                n_ub += 1

    # interim[i][k][j] = sum over profiles with t_i = k of Pr[t_-i] * x
    rows_of: dict[tuple[int, int, int], int] = {}
    for i in range(m):
        for k in range(inst.n_types(i)):
            for j in range(n + 1):
                rows_of[i, k, j] = n_eq
                eq_r.append(n_eq)
                eq_c.append(iv(i, k, j))
                eq_v.append(-1.0)
                n_eq += 1
    for s, (prof, _) in enumerate(profiles):
        for i in range(m):
            k = prof.types[i]
            w = probs[s] / float(inst.types[i][k].prob)
            for j in range(n + 1):
                eq_r.append(rows_of[i, k, j])
                eq_c.append(xv(s, i, j))
                eq_v.append(w)

    for i in range(m):
        K = inst.n_types(i)
        for t in range(K):
            v = [float(a) for a in inst.type_values[i][t]]
            # interim IR: -(v.X(t) - P(t)) <= 0
            ub_r += [n_ub] * (n + 1)
            ub_c += [iv(i, t, j) for j in range(n + 1)]
            ub_v += [-a for a in v] + [1.0]
            ub_b.append(0.0)
            n_ub += 1
            for rep in range(K):
                if rep == t:
                    continue
                ub_r += [n_ub] * (2 * n + 2)
                ub_c += [iv(i, rep, j) for j in range(n + 1)] + [iv(i, t, j) for j in range(n + 1)]
                ub_v += v + [-1.0] + [-a for a in v] + [1.0]
                ub_b.append(0.0)
                n_ub += 1

    A_ub = sparse.csr_matrix((ub_v, (ub_r, ub_c)), shape=(n_ub, nvar))
    A_eq = sparse.csr_matrix((eq_v, (eq_r, eq_c)), shape=(n_eq, nvar))
    res = linprog(c, A_ub=A_ub, b_ub=np.array(ub_b), A_eq=A_eq, b_eq=np.zeros(n_eq),
                  bounds=np.column_stack([lo, hi]), method="highs")
    if res.status != 0:
        raise SolverError(f"OPT-BIC LP failed: {res.message}")
    return float(-res.fun)


# --------------------------------------------------------------- BIC audit


@dataclass(frozen=True)
class MisreportGain:
    bidder: int
    true_type: int
    report: int
    analytic: float
    simulated: float
    se: float


@dataclass(frozen=True)
class BicAudit:
    gains: tuple[MisreportGain, ...]
    max_analytic: float
    max_simulated: float

    def passed(self, z: float = 3.0, tol: float = 1e-9) -> bool:
        return all(g.analytic <= tol and g.simulated <= z * g.se + tol for g in self.gains)


def bic_audit(inst: CorrelatedInstance, lp1: Lp1Solution, trials: int, seed: int = DEFAULT_SEED,
              order: Sequence[int] | None = None) -> BicAudit:
    """Interim gain of every misreport under the all-pay mechanism.

    For each bidder and report the mechanism is simulated once with common
    random numbers; since the outcome does not depend on the true type, every
    true type's utility is read off the same runs and compared pairwise.
    """
    mech = AllPayAuction(inst, lp1, order)
    rng = np.random.default_rng(seed)
    base_types = np.empty((trials, inst.n_bidders), dtype=np.int64)
    for i, p in enumerate(inst.type_probs):
        base_types[:, i] = rng.choice(p.size, size=trials, p=p)
    gains = []
    for i in range(inst.n_bidders):
        K = inst.n_types(i)
        V = inst.type_values[i]
        won = []
        for rep in range(K):
            types = base_types.copy()
            types[:, i] = rep
            batch = mech.simulate(trials, np.random.default_rng([seed, i]), types=types)
            won.append(batch.won[:, i, :].astype(float))
        price = mech.plan.prices[i]
        for t in range(K):
            truth = won[t] @ V[t] - price[t]
            u_t = float(V[t] @ lp1.x[i][t] - lp1.P[i][t]) / 4
            for rep in range(K):
                if rep == t:
                    continue
                diff = (won[rep] @ V[t] - price[rep]) - truth
                mean, se = _summarise(diff)
                analytic = float(V[t] @ lp1.x[i][rep] - lp1.P[i][rep]) / 4 - u_t
                gains.append(MisreportGain(i, t, rep, analytic, mean, se or 0.0))
    return BicAudit(tuple(gains),
                    max((g.analytic for g in gains), default=0.0),
                    max((g.simulated for g in gains), default=0.0))


# ------------------------------------------------------------ ratio report


@dataclass(frozen=True)
class Link:
    name: str
    lhs: float
    relation: str
    rhs: float
    passed: bool


@dataclass
class RatioReport:
    kind: str
    values: dict[str, float | None] = field(default_factory=dict)
    estimates: dict[str, RevenueEstimate] = field(default_factory=dict)
    links: list[Link] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(link.passed for link in self.links)

    def check(self, name: str, lhs: float, relation: str, rhs: float, slack: float = 1e-6) -> None:
        if relation == ">=":
            ok = lhs >= rhs - slack
        elif relation == "<=":
            ok = lhs <= rhs + slack
        else:
            ok = abs(lhs - rhs) <= slack
        self.links.append(Link(name, float(lhs), relation, float(rhs), bool(ok)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link", "lhs", "relation", "rhs", "passed"])
        for link in self.links:
            w.writerow([link.name, f"{link.lhs:.9f}", link.relation, f"{link.rhs:.9f}", int(link.passed)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"instance kind: {self.kind}"]
        for k, v in self.values.items():
            lines.append(f"  {k:<22} {'n/a' if v is None else f'{v:.9f}'}")
        for k, e in self.estimates.items():
            se = "n/a" if e.se is None else f"{e.se:.6f}"
            lines.append(f"  {k:<22} {e.mean:.6f} (se {se}, trials {e.trials})")
        for link in self.links:
            flag = "PASS" if link.passed else "FAIL"
            lines.append(f"  [{flag}] {link.name}: {link.lhs:.6f} {link.relation} {link.rhs:.6f}")
        return "\n".join(lines) + "\n"


def _opt_or_none(inst, cap) -> float | None:
    try:
        return exact_opt_bic(inst, cap)
    except TooLargeError:
        return None


def _all_truncated(inst: ProductInstance, test) -> bool:
    return all(test(classify(d)) for row in inst.truncated for d in row)


def ratio_report(inst: CorrelatedInstance | ProductInstance, trials: int, seed: int = DEFAULT_SEED,
                 method: str = DEFAULT_METHOD, threads: int = 1, order: Sequence[int] | None = None,
                 cap: int = REPORT_OPT_CAP) -> RatioReport:
    """Run every applicable pipeline and check each link of the bound chain separately."""
    if isinstance(inst, CorrelatedInstance):
        rep = RatioReport("correlated")
        lp1 = solve_lp1(inst, method)
        mech = AllPayAuction(inst, lp1, order)
        opt = _opt_or_none(inst, cap)
        rep.values.update(lp1=lp1.objective, opt_bic=opt)
        est = estimate_revenue(mech, trials, seed, threads=threads)
        rep.estimates["allpay"] = est
        try:
            exact = allpay_expected_revenue(mech, max(cap, DEFAULT_PROFILE_CAP))
            rep.values["allpay_exact"] = exact
            rep.check("allpay exact revenue = LP1/4", exact, "=", lp1.objective / 4, 1e-6)
        except TooLargeError:
            pass
        rep.check("allpay simulated revenue = LP1/4", est.mean, "=", lp1.objective / 4,
                  3 * (est.se or 0.0) + 1e-9)
        if opt is not None:
            rep.check("LP1 >= OPT-BIC", lp1.objective, ">=", opt)
            rep.check("OPT-BIC >= LP1/4", opt, ">=", lp1.objective / 4)
        return rep

    rep = RatioReport("product")
    lprev = solve_lprev(inst, method)
    rep.values["lprev"] = lprev.objective
    opt = _opt_or_none(inst, cap)
    rep.values["opt_bic"] = opt
    if opt is not None:
        rep.check("LPRev >= OPT-BIC/4", lprev.objective, ">=", opt / 4)
    regular = _all_truncated(inst, lambda c: c.is_regular)
    mhr = _all_truncated(inst, lambda c: c.is_mhr)
    if regular:
        lp2 = solve_lp2(inst, method)
        lpseq = solve_lpseq(inst, method)
        rep.values.update(lp2=lp2.objective, lpseq=lpseq.objective)
        rep.check("LPSeq = LP2", lpseq.objective, "=", lp2.objective)
    if mhr:
        rep.check("LP2 >= LPRev/(2e^2)", lp2.objective, ">=", lprev.objective / (2 * math.e ** 2), 1e-7)
        mech = PostedPriceAuction(inst, decompose_lp2(inst, lp2), order)
        est, freq, se = posted_price_diagnostics(mech, trials, seed, threads=threads)
        rep.estimates["postedprice"] = est
        rep.check("posted-price revenue >= LP2/24", est.mean, ">=", lp2.objective / 24,
                  3 * (est.se or 0.0))
        k = int(np.argmin(freq - 3 * se))
        rep.check("min per-edge good-event frequency >= 1/6", float(freq.flat[k]), ">=", 1 / 6,
                  3 * float(se.flat[k]))
    else:
        grouped = power_group(lprev, inst)
        mass = sum(g.expected_revenue for row in grouped for g in row)
        groups = group_count(inst)
        rep.values.update(grouped_mass=mass, groups=float(groups))
        rep.check(f"sum r*x*Q >= LPRev/(2*{groups})", mass, ">=", lprev.objective / (2 * groups), 1e-9)
        mech = GeneralPostedPriceAuction(inst, grouped, order)
        est = estimate_revenue(mech, trials, seed, threads=threads)
        rep.estimates["general"] = est
        rep.check("general revenue > 0", est.mean, ">=", 0.0, -1e-12)
        rep.check("general revenue >= sum r*x*Q/24", est.mean, ">=", mass / 24, 3 * (est.se or 0.0))
    return rep
