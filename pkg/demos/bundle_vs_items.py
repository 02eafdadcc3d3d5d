"""Equal-revenue values: selling the grand bundle against per-item pricing.

Per-item pricing earns n in expectation.  The bundle is priced at
(1 - eps) n H_n, and the printout shows how often it actually sells.

Run:  python3 demos/bundle_vs_items.py
"""
import numpy as np

from auctionlab.mech import bundle_demo

print(f"{'n':>7} {'H_n':>7} {'sells':>7} {'ratio':>7} {'(1-eps)H_n':>11}")
for n in (10, 100, 1000, 10_000):
    r = bundle_demo(n, 0.1, 5_000, np.random.default_rng(n))
    print(f"{n:>7} {r.harmonic:7.3f} {r.sell_frequency:7.3f} {r.ratio:7.3f} {0.9 * r.harmonic:11.3f}")
