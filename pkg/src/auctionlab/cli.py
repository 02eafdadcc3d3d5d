"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 infeasible or solver error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dist, io as aio
from .lpcore import SolverError, format_lp
from .mech import (AllPayAuction, GeneralPostedPriceAuction, MechanismError, PostedPriceAuction,
                   bundle_demo)
from .model import CorrelatedInstance, ProductInstance, TooLargeError, correlated, product
from .relax import (DEFAULT_METHOD, DecompositionError, build_lp1, build_lp2, build_lprev, build_lpseq,
                    decompose_lp2, power_group, solve_lp1, solve_lp2, solve_lprev, solve_lpseq)
from .sim import DEFAULT_SEED, bic_audit, estimate_revenue, iter_batches, ratio_report

SEED_ENV = "AUCTIONLAB_SEED"
EXIT_USAGE = 2
EXIT_SOLVER = 3

CAPS = {"bidders": 50, "items": 50, "types": 64, "support": 10_000}


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _order(args, m: int):
    if not args.shuffle:
        return None
    return tuple(int(i) for i in np.random.default_rng([args.seed, 1]).permutation(m))


# ---------------------------------------------------------------- generate


def _gen_correlated(rng, a) -> CorrelatedInstance:
    vmax = 10
    tables = []
    for _ in range(a.bidders):
        w = rng.integers(1, 5, size=a.types)
        tables.append([(Fraction(int(w[k]), int(w.sum())), [int(v) for v in rng.integers(0, vmax + 1, a.items)])
                       for k in range(a.types)])
    budgets = [int(b) for b in rng.integers(vmax // 2, vmax * a.items + 1, a.bidders)]
    demands = [int(d) for d in rng.integers(1, a.items + 1, a.bidders)]
    return correlated(budgets, demands, tables, a.items)


def _gen_product_mhr(rng, a) -> ProductInstance:
    qs = [Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3)]
    rows = []
    for _ in range(a.bidders):
        row = []
        for _ in range(a.items):
            length = int(rng.integers(2, a.support + 1)) if a.support > 2 else a.support
            if rng.random() < 0.5:
                row.append(dist.truncated_geometric(qs[int(rng.integers(len(qs)))], length))
            else:
                row.append(dist.binomial_shaped(length, Fraction(int(rng.integers(1, 8)), 8)))
        rows.append(row)
    budgets = [4 * int(rng.integers(2, a.support + 1)) for _ in range(a.bidders)]
    demands = [int(d) for d in rng.integers(1, a.items + 1, a.bidders)]
    return product(budgets, demands, rows)


def _gen_product_regular(rng, a) -> ProductInstance:
    if a.support < 3:
        raise UsageError("product-regular needs --support >= 3")
    rows = [[dist.random_regular(rng, a.support) for _ in range(a.items)] for _ in range(a.bidders)]
    budgets = [4 * a.support] * a.bidders
    demands = [int(d) for d in rng.integers(1, a.items + 1, a.bidders)]
    return product(budgets, demands, rows)


def _gen_equal_revenue(rng, a) -> ProductInstance:
    d = dist.equal_revenue(a.support)
    return product([4 * a.support], [a.items], [[d] * a.items])


GENERATORS = {
    "correlated": _gen_correlated,
    "product-mhr": _gen_product_mhr,
    "product-regular": _gen_product_regular,
    "equal-revenue": _gen_equal_revenue,
}


def cmd_generate(args) -> int:
    for name, cap in CAPS.items():
        v = getattr(args, name)
        if not 1 <= v <= cap:
            raise UsageError(f"--{name} must lie in [1, {cap}]")
    if args.kind == "equal-revenue" and args.support < 2:
        raise UsageError("equal-revenue needs --support >= 2")
    inst = GENERATORS[args.kind](np.random.default_rng(args.seed), args)
    _emit(aio.dumps_instance(inst), args.out)
    return 0


# ------------------------------------------------------------------- solve


def _load(path) -> CorrelatedInstance | ProductInstance:
    try:
        return aio.load_instance(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _need(inst, cls, what: str):
    if not isinstance(inst, cls):
        raise UsageError(f"{what} needs a {cls.kind} instance, got {inst.kind}")


def cmd_solve(args) -> int:
    inst = _load(args.instance)
    if args.lp == "lp1":
        _need(inst, CorrelatedInstance, "lp1")
        builder = build_lp1
    else:
        _need(inst, ProductInstance, args.lp)
        builder = {"lprev": build_lprev, "lp2": build_lp2, "lpseq": build_lpseq}[args.lp]
    try:
        lp = builder(inst)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.dump_lp:
        Path(args.dump_lp).write_text(format_lp(lp))
    if args.lp == "lp1":
        sol = solve_lp1(inst, args.method)
        text = aio.lp1_csv(inst, sol)
    else:
        sol = {"lprev": solve_lprev, "lp2": solve_lp2, "lpseq": solve_lpseq}[args.lp](inst, args.method)
        text = aio.product_solution_csv(sol)
    print(f"{sol.objective:.9f}")
    if args.out:
        Path(args.out).write_text(text)
    return 0


# --------------------------------------------------------------------- run


def _build_mechanism(inst, name: str, method: str, order):
    """Mechanism plus the bound its revenue is checked against."""
    if name == "allpay":
        _need(inst, CorrelatedInstance, "allpay")
        lp1 = solve_lp1(inst, method)
        return AllPayAuction(inst, lp1, order), "LP1/4", lp1.objective / 4, "="
    _need(inst, ProductInstance, name)
    if name == "postedprice":
        try:
            lp2 = solve_lp2(inst, method)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        try:
            postings = decompose_lp2(inst, lp2)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return PostedPriceAuction(inst, postings, order), "LP2/24", lp2.objective / 24, ">="
    lprev = solve_lprev(inst, method)
    grouped = power_group(lprev, inst)
    mass = sum(g.expected_revenue for row in grouped for g in row)
    return GeneralPostedPriceAuction(inst, grouped, order), "sum(r*x*Q)/24", mass / 24, ">="


def cmd_run(args) -> int:
    inst = _load(args.instance)
    mech, bound, value, relation = _build_mechanism(inst, args.mechanism, args.method,
                                                    _order(args, inst.n_bidders))
    est = estimate_revenue(mech, args.trials, args.seed, threads=args.threads)
    margin = 3 * (est.se or 0.0) + 1e-9
    passed = abs(est.mean - value) <= margin if relation == "=" else est.mean >= value - margin
    if args.mechanism == "general":
        passed = passed and est.mean > 0
    text = aio.estimate_csv(args.mechanism, est, bound, value, passed)
    _emit(text, args.out)
    if args.out:
        se = "n/a" if est.se is None else f"{est.se:.6f}"
        print(f"{args.mechanism}: mean revenue {est.mean:.6f} (se {se}); {bound} = {value:.6f}; "
              f"{'PASS' if passed else 'FAIL'}")
    if args.log_outcomes:
        with open(args.log_outcomes, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(aio.OUTCOME_HEADER)
            offset = 0
            for batch in iter_batches(mech, args.trials, args.seed, threads=args.threads):
                w.writerows(aio.outcome_rows(batch, offset, args.mechanism == "allpay"))
                offset += batch.revenue.size
    return 0


# ------------------------------------------------------- audit/demo/report


def cmd_audit(args) -> int:
    inst = _load(args.instance)
    _need(inst, CorrelatedInstance, "audit")
    lp1 = solve_lp1(inst, args.method)
    audit = bic_audit(inst, lp1, args.trials, args.seed, _order(args, inst.n_bidders))
    if args.out:
        Path(args.out).write_text(aio.audit_csv(audit))
    print(f"max analytic gain {audit.max_analytic:.3e}; max simulated gain {audit.max_simulated:.3e}; "
          f"{'PASS' if audit.passed() else 'FAIL'}")
    return 0


def cmd_demo(args) -> int:
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    if not 0 < args.epsilon < 1:
        raise UsageError("--epsilon must lie strictly between 0 and 1")
    r = bundle_demo(args.n, args.epsilon, args.trials, np.random.default_rng(args.seed))
    ref = (1 - r.epsilon) * r.harmonic
    lines = [
        f"items                  {r.n}",
        f"epsilon                {r.epsilon:g}",
        f"trials                 {r.trials}",
        f"harmonic number H_n    {r.harmonic:.6f}",
        f"bundle price           {r.bundle_price:.6f}",
        f"sell frequency         {r.sell_frequency:.6f} (se {r.sell_se:.6f})",
        f"bundle revenue         {r.bundle_revenue:.6f}",
        f"item-pricing benchmark {r.item_revenue:.6f}",
        f"ratio                  {r.ratio:.6f}",
        f"reference (1-eps)*H_n  {ref:.6f}",
    ]
    print("\n".join(lines))
    if args.out:
        Path(args.out).write_text(aio.csv_text(
            ["n", "epsilon", "trials", "seed", "harmonic", "bundle_price", "sell_frequency", "bundle_revenue",
             "item_revenue", "ratio"],
            [[r.n, f"{r.epsilon:g}", r.trials, args.seed, f"{r.harmonic:.12g}", f"{r.bundle_price:.12g}",
              f"{r.sell_frequency:.12g}", f"{r.bundle_revenue:.12g}", f"{r.item_revenue:.12g}", f"{r.ratio:.12g}"]]))
    return 0


def cmd_report(args) -> int:
    inst = _load(args.instance)
    rep = ratio_report(inst, args.trials, args.seed, args.method, args.threads, _order(args, inst.n_bidders))
    sys.stdout.write(rep.to_text())
    if args.out:
        Path(args.out).write_text(rep.to_csv())
    return 0


# ------------------------------------------------------------------ parser


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="auctionlab", description="Budgeted multi-item auction LPs and mechanisms.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=True, instance=True):
        if instance:
            sp.add_argument("instance", help="instance JSON file")
        sp.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or {DEFAULT_SEED})")
        sp.add_argument("--out", help="output file (CSV unless noted)")
        if trials:
            sp.add_argument("--trials", type=_positive, default=100_000)
        sp.add_argument("--method", choices=["highs", "simplex"], default=DEFAULT_METHOD, help="LP solver")

    g = sub.add_parser("generate", help="write a random instance file")
    g.add_argument("kind", choices=sorted(GENERATORS))
    g.add_argument("--bidders", "-m", type=int, default=2)
    g.add_argument("--items", "-n", type=int, default=2)
    g.add_argument("--types", "-k", type=int, default=2)
    g.add_argument("--support", "-L", type=int, default=8, help="support size (equal-revenue: top value)")
    common(g, trials=False, instance=False)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one LP relaxation and print its objective")
    s.add_argument("--lp", choices=["lp1", "lprev", "lp2", "lpseq"], required=True)
    s.add_argument("--dump-lp", help="write the LP in readable form to this file")
    common(s, trials=False)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("run", help="simulate a mechanism and write a revenue estimate")
    r.add_argument("--mechanism", choices=["allpay", "postedprice", "general"], required=True)
    r.add_argument("--shuffle", action="store_true", help="seeded random bidder order")
    r.add_argument("--log-outcomes", help="CSV log of every offer (trial,bidder,item,price,sold)")
    r.add_argument("--threads", type=_positive, default=1)
    common(r)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="misreport gains under the all-pay mechanism")
    a.add_argument("--shuffle", action="store_true")
    common(a)
    a.set_defaults(func=cmd_audit)

    d = sub.add_parser("demo", help="grand bundle vs item pricing on equal-revenue values")
    d.add_argument("--n", type=int, default=1000)
    d.add_argument("--epsilon", type=float, default=0.1)
    common(d, instance=False)
    d.set_defaults(func=cmd_demo, trials=10_000)

    rp = sub.add_parser("report", help="check every applicable bound for an instance")
    rp.add_argument("--shuffle", action="store_true")
    rp.add_argument("--threads", type=_positive, default=1)
    common(rp)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except UsageError as exc:
        print(f"auctionlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TooLargeError as exc:
        print(f"auctionlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, MechanismError, DecompositionError) as exc:
        print(f"auctionlab: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
