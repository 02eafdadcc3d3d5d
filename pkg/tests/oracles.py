"""Slow, independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve


def lp_vertex_oracle(c, A, b, lo, hi, tol=1e-9):
    """max c.x s.t. A x <= b, lo <= x <= hi (finite bounds) by enumerating
    every basic solution.  Returns ``None`` when infeasible."""
    c, A, b, lo, hi = (np.asarray(v, dtype=float) for v in (c, A, b, lo, hi))
    n = c.size
    G = np.vstack([A, np.eye(n), -np.eye(n)])
    h = np.concatenate([b, hi, -lo])
    best = None
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + tol):
            val = float(c @ x)
            if best is None or val > best:
                best = val
    return best


def knapsack_bruteforce(prices, values, budget, demand):
    """Best utility over all subsets, and the subset chosen by the tie rule
    (max utility, then most items, then smallest bitmask)."""
    k = len(prices)
    best_key, best_set = None, frozenset()
    for mask in range(1 << k):
        s = [j for j in range(k) if mask >> j & 1]
        if len(s) > demand or sum(prices[j] for j in s) > budget + 1e-9:
            continue
        u = sum(values[j] - prices[j] for j in s)
        key = (round(u, 9), len(s), -mask)
        if best_key is None or key > best_key:
            best_key, best_set = key, frozenset(s)
    return best_key[0], best_set


def strict_virtual_values(support, pmf):
    """r - Pr[V > r] / Pr[V = r] straight from the definition (exact)."""
    pmf = [Fraction(p) for p in pmf]
    out = []
    for k, r in enumerate(support):
        out.append(Fraction(r) - sum(pmf[k + 1:], Fraction(0)) / pmf[k])
    return out


def myerson_payment_side(support, pmf, x):
    """sum_r f(r) (r x(r) - sum_{s<r} x(s)) for a unit-spaced support."""
    total = Fraction(0)
    for k, r in enumerate(support):
        total += Fraction(pmf[k]) * (Fraction(r) * x[k] - sum(x[:k], Fraction(0)))
    return total


def equal_revenue_pmf(n: int) -> np.ndarray:
    """Index r holds Pr[v = r] for v on {1..n} with Pr[v >= r] = 1/r."""
    r = np.arange(1, n + 1, dtype=float)
    f = 1.0 / r - 1.0 / (r + 1.0)
    f[-1] = 1.0 / n
    return np.concatenate([[0.0], f])


def sum_pmf(f: np.ndarray, copies: int) -> np.ndarray:
    """pmf of the sum of ``copies`` i.i.d. draws, by FFT with repeated squaring."""
    result = np.array([1.0])
    base = f.copy()
    k = copies
    while k:
        if k & 1:
            result = np.clip(fftconvolve(result, base), 0.0, None)
        k >>= 1
        if k:
            base = np.clip(fftconvolve(base, base), 0.0, None)
    return result


def bundle_sell_probability(n: int, price: float) -> float:
    """Exact Pr[sum of n equal-revenue values >= price]."""
    pmf = sum_pmf(equal_revenue_pmf(n), n)
    return float(pmf[int(np.ceil(price)):].sum())
