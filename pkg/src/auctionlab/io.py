"""Instance files (JSON) and CSV writers.

Numbers are stored as strings: a plain decimal when the rational has a
terminating expansion, otherwise ``"p/q"``.
"""
from __future__ import annotations

import csv
import io
import json
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Iterable

import numpy as np

from .dist import DiscreteDistribution, as_fraction
from .mech import TrialBatch
from .model import CorrelatedInstance, Instance, ProductInstance, TypeEntry, check
from .relax import Lp1Solution, ProductLPSolution
from .sim import BicAudit, RevenueEstimate


def format_number(q) -> str:
    q = as_fraction(q)
    d = q.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d != 1:
        return f"{q.numerator}/{q.denominator}"
    with localcontext() as ctx:
        ctx.prec = 2 * (len(str(q.numerator)) + len(str(q.denominator))) + 10
        return format(Decimal(q.numerator) / Decimal(q.denominator), "f")


def _num(x: float) -> str:
    return f"{x:.12g}"


def instance_to_dict(inst: Instance) -> dict:
    out: dict = {
        "kind": inst.kind,
        "n_items": inst.n_items,
        "bidders": [{"budget": format_number(b), "demand": int(d)}
                    for b, d in zip(inst.budgets, inst.demands)],
    }
    if isinstance(inst, CorrelatedInstance):
        out["type_tables"] = [[{"prob": format_number(t.prob), "values": [format_number(v) for v in t.values]}
                               for t in table] for table in inst.types]
    else:
        out["edge_distributions"] = [[{"support": [format_number(v) for v in d.support],
                                       "pmf": [format_number(p) for p in d.pmf]} for d in row]
                                     for row in inst.edges]
    return out


def instance_from_dict(data: dict) -> Instance:
    try:
        kind = data["kind"]
        budgets = tuple(as_fraction(b["budget"]) for b in data["bidders"])
        demands = tuple(int(b["demand"]) for b in data["bidders"])
        if kind == "correlated":
            tables = tuple(tuple(TypeEntry(as_fraction(t["prob"]), tuple(as_fraction(v) for v in t["values"]))
                                 for t in table) for table in data["type_tables"])
            n_items = int(data.get("n_items", len(tables[0][0].values) if tables and tables[0] else 0))
            inst = CorrelatedInstance(budgets, demands, tables, n_items)
        elif kind == "product":
            edges = tuple(tuple(DiscreteDistribution(tuple(as_fraction(v) for v in e["support"]),
                                                     tuple(as_fraction(p) for p in e["pmf"]))
                                for e in row) for row in data["edge_distributions"])
            inst = ProductInstance(budgets, demands, edges)
        else:
            raise ValueError(f"unknown instance kind {kind!r}")
    except (KeyError, TypeError, IndexError, ZeroDivisionError) as exc:
        raise ValueError(f"malformed instance file: {exc!r}") from exc
    return check(inst)


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def load_instance(path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)


# -------------------------------------------------------------------- CSV


def csv_text(header: list[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def lp1_csv(inst: CorrelatedInstance, sol: Lp1Solution) -> str:
    rows = []
    for i in range(inst.n_bidders):
        for t, entry in enumerate(inst.types[i]):
            for j in range(inst.n_items):
                rows.append([i, j, t, format_number(entry.prob), format_number(entry.values[j]),
                             _num(sol.x[i][t, j]), _num(sol.P[i][t])])
    return csv_text(["bidder", "item", "type", "prob", "value", "x", "price"], rows)


def product_solution_csv(sol: ProductLPSolution) -> str:
    with_p = any(e.payments is not None for row in sol.edges for e in row)
    header = ["bidder", "item", "value", "f", "phi", "x"] + (["p"] if with_p else [])
    rows = []
    for row in sol.edges:
        for e in row:
            phi = [float(v) for v in e.dist.virtual_values]
            for k, v in enumerate(e.dist.support):
                r = [e.bidder, e.item, format_number(v), format_number(e.dist.pmf[k]), _num(phi[k]), _num(e.x[k])]
                if with_p:
                    r.append(_num(e.payments[k]) if e.payments is not None else "")
                rows.append(r)
    return csv_text(header, rows)


ESTIMATE_HEADER = ["mechanism", "trials", "seed", "mean", "se", "ci_low", "ci_high", "welfare",
                   "bound", "bound_value", "bound_passed"]


def estimate_csv(mechanism: str, est: RevenueEstimate, bound: str, bound_value: float, passed: bool) -> str:
    se = "" if est.se is None else _num(est.se)
    lo, hi = ("", "") if est.ci is None else (_num(est.ci[0]), _num(est.ci[1]))
    return csv_text(ESTIMATE_HEADER, [[mechanism, est.trials, est.seed, _num(est.mean), se, lo, hi,
                                   _num(est.welfare), bound, _num(bound_value), int(passed)]])


def audit_csv(audit: BicAudit) -> str:
    return csv_text(["bidder", "true_type", "report", "analytic_gain", "simulated_gain", "se"],
                [[g.bidder, g.true_type, g.report, _num(g.analytic), _num(g.simulated), _num(g.se)]
                 for g in audit.gains])


OUTCOME_HEADER = ["trial", "bidder", "item", "price", "sold"]


def outcome_rows(batch: TrialBatch, offset: int, fixed_payment: bool) -> Iterable[list]:
    """Outcome-log rows for one batch.

    Posted-price batches emit one row per offer.  All-pay batches emit one row
    per bidder with item ``*`` carrying the fixed payment, plus one zero-price
    row per allocated item.
    """
    T, m, n = batch.won.shape
    for r in range(T):
        for i in range(m):
            if fixed_payment:
                yield [offset + r, i, "*", _num(batch.payments[r, i]), ""]
                for j in np.nonzero(batch.won[r, i])[0]:
                    yield [offset + r, i, int(j), "0", 1]
            else:
                for j in np.nonzero(batch.offered[r, i])[0]:
                    yield [offset + r, i, int(j), _num(batch.offer_prices[r, i, j]), int(batch.won[r, i, j])]
