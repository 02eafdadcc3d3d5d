"""Correlated values: LP1, the all-pay plan, and the revenue sandwich.

Run:  python3 demos/allpay_walkthrough.py
"""
from fractions import Fraction

import numpy as np

from auctionlab import model, relax, sim
from auctionlab.mech import AllPayAuction

# Two bidders, two items.  Bidder 0 has two equally likely types with
# opposite tastes; bidder 1 always wants item 1 and has a tight budget.
inst = model.correlated(
    budgets=[6, 3],
    demands=[1, 2],
    tables=[
        [(Fraction(1, 2), [5, 1]), (Fraction(1, 2), [1, 5])],
        [(1, [0, 4])],
    ],
)

lp1 = relax.solve_lp1(inst)
print(f"LP1 optimum (upper bound on any BIC mechanism): {lp1.objective:.4f}")

auction = AllPayAuction(inst, lp1)
for i in range(inst.n_bidders):
    for t, price in enumerate(auction.plan.prices[i]):
        print(f"  bidder {i}, type {t}: pays {float(price):.4f} up front, "
              f"interim allocation {np.round(lp1.x[i][t] / 4, 4)}")

print(f"exact all-pay revenue: {sim.allpay_expected_revenue(auction):.4f} (= LP1/4)")
print(f"optimal BIC revenue:   {sim.exact_opt_bic(inst):.4f}")

est = sim.estimate_revenue(auction, 200_000, seed=1)
print(f"simulated revenue:     {est.mean:.4f} +/- {1.96 * est.se:.4f}")

audit = sim.bic_audit(inst, lp1, 100_000, seed=2)
print(f"largest misreport gain: analytic {audit.max_analytic:.2e}, simulated {audit.max_simulated:.2e}")
