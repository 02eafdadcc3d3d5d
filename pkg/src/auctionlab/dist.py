"""Finite discrete valuation distributions.

Values and probabilities are stored as exact fractions so that survival
functions, hazard ratios and virtual values can be compared without
rounding noise.  Float views (``values``, ``probs``) are provided for the
LP builders and the Monte Carlo code.

Virtual values use the spacing-aware form

    phi(r_k) = r_k - (r_{k+1} - r_k) * G(r_k) / f(r_k),   G(r) = Pr[V > r],

which is ``r - G(r)/f(r)`` on unit-spaced integer supports and keeps the
identity ``sum_r f(r) phi(r) 1[r >= t] = t * Pr[V >= t]`` exact on any
support (truncation at a budget cap produces non-unit gaps).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PMF_TOL = 1e-9


def as_fraction(x) -> Fraction:
    """Convert ints, decimal strings, ``"p/q"`` strings and floats exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite number {x!r}")
        return Fraction(x)
    if isinstance(x, (np.integer,)):
        return Fraction(int(x))
    if isinstance(x, np.floating):
        return Fraction(float(x))
    return Fraction(x)


@dataclass(frozen=True, eq=True)
class DiscreteDistribution:
    """Finite pmf over strictly ascending positive values.

    Points with zero probability are dropped at construction.
    """

    support: tuple[Fraction, ...]
    pmf: tuple[Fraction, ...]

    def __post_init__(self):
        support = tuple(as_fraction(v) for v in self.support)
        pmf = tuple(as_fraction(p) for p in self.pmf)
        if len(support) != len(pmf):
            raise ValueError("support and pmf must have the same length")
        if any(p < 0 for p in pmf):
            raise ValueError("pmf entries must be non-negative")
        kept = [(v, p) for v, p in zip(support, pmf) if p > 0]
        if not kept:
            raise ValueError("distribution has no mass")
        support = tuple(v for v, _ in kept)
        pmf = tuple(p for _, p in kept)
        if support[0] <= 0:
            raise ValueError("support values must be positive")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ValueError("support must be strictly increasing")
        if abs(float(sum(pmf)) - 1.0) > PMF_TOL:
            raise ValueError(f"pmf sums to {float(sum(pmf))!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "pmf", pmf)

    def __len__(self) -> int:
        return len(self.support)

    def __repr__(self) -> str:
        pairs = ", ".join(f"{v}: {p}" for v, p in zip(self.support, self.pmf))
        return f"DiscreteDistribution({{{pairs}}})"

    @property
    def max_value(self) -> Fraction:
        return self.support[-1]

    @property
    def min_value(self) -> Fraction:
        return self.support[0]

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([float(v) for v in self.support])

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([float(p) for p in self.pmf])

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    @cached_property
    def above(self) -> tuple[Fraction, ...]:
        """G(r_k) = Pr[V > r_k]; zero at the top point."""
        out = [Fraction(0)] * len(self.pmf)
        acc = Fraction(0)
        for k in range(len(self.pmf) - 1, -1, -1):
            out[k] = acc
            acc += self.pmf[k]
        return tuple(out)

    @cached_property
    def at_least(self) -> tuple[Fraction, ...]:
        """Pr[V >= r_k]."""
        return tuple(g + p for g, p in zip(self.above, self.pmf))

    @cached_property
    def gaps(self) -> tuple[Fraction, ...]:
        # the top gap never matters since G is zero there
        s = self.support
        return tuple(s[k + 1] - s[k] for k in range(len(s) - 1)) + (Fraction(1),)

    @cached_property
    def inverse_hazards(self) -> tuple[Fraction, ...]:
        """Gap-weighted G(r)/f(r); non-increasing exactly when MHR."""
        return tuple(d * g / p for d, g, p in zip(self.gaps, self.above, self.pmf))

    @cached_property
    def virtual_values(self) -> tuple[Fraction, ...]:
        return tuple(r - h for r, h in zip(self.support, self.inverse_hazards))

    @cached_property
    def mean(self) -> Fraction:
        return sum((v * p for v, p in zip(self.support, self.pmf)), Fraction(0))

    def index(self, r) -> int:
        r = as_fraction(r)
        lo, hi = 0, len(self.support)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.support[mid] < r:
                lo = mid + 1
            else:
                hi = mid
        if lo == len(self.support) or self.support[lo] != r:
            raise ValueError(f"{r} is not a support point")
        return lo

    def prob_at_least(self, x) -> Fraction:
        """Pr[V >= x] for an arbitrary threshold x."""
        x = as_fraction(x)
        return sum((p for v, p in zip(self.support, self.pmf) if v >= x), Fraction(0))

    def sample_indices(self, rng: np.random.Generator, size=None) -> np.ndarray:
        u = rng.random(size)
        return np.searchsorted(self.cdf, u, side="right")

    def sample_values(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.values[self.sample_indices(rng, size)]


@dataclass(frozen=True)
class DistributionClass:
    is_mhr: bool
    is_regular: bool


def virtual_valuation(d: DiscreteDistribution, r) -> Fraction:
    """Virtual value at the support point ``r``."""
    return d.virtual_values[d.index(r)]


def classify(d: DiscreteDistribution) -> DistributionClass:
    h = d.inverse_hazards
    phi = d.virtual_values
    mhr = all(b <= a for a, b in zip(h, h[1:]))
    regular = all(b >= a for a, b in zip(phi, phi[1:]))
    return DistributionClass(is_mhr=mhr, is_regular=regular)


def truncate(d: DiscreteDistribution, a) -> DiscreteDistribution:
    """Law of ``min(V, a)``: mass at or above ``a`` collapses onto ``a``."""
    a = as_fraction(a)
    if a <= 0:
        raise ValueError("truncation point must be positive")
    support, pmf = [], []
    top = Fraction(0)
    for v, p in zip(d.support, d.pmf):
        if v < a:
            support.append(v)
            pmf.append(p)
        else:
            top += p
    if top > 0:
        support.append(a)
        pmf.append(top)
    return DiscreteDistribution(tuple(support), tuple(pmf))


def half_virtual_threshold(d: DiscreteDistribution) -> Fraction:
    """Smallest support value r with phi(r) >= r/2 (MHR laws only)."""
    if not classify(d).is_mhr:
        raise ValueError("half_virtual_threshold requires an MHR distribution")
    for r, phi in zip(d.support, d.virtual_values):
        if 2 * phi >= r:
            return r
    raise AssertionError("top support point always qualifies")


def sample(d: DiscreteDistribution, rng: np.random.Generator) -> Fraction:
    return d.support[int(d.sample_indices(rng))]


def payment_form(d: DiscreteDistribution, x: Sequence) -> list:
    """Per-point payments ``r_k x_k - sum_{l<k} (r_{l+1} - r_l) x_l``.

    Satisfies ``sum_k f_k g_k == sum_k f_k phi_k x_k`` for any allocation x.
    Works on floats or Fractions.
    """
    if len(x) != len(d):
        raise ValueError("allocation length does not match support")
    exact = all(isinstance(v, (Fraction, int)) for v in x)
    support = d.support if exact else [float(v) for v in d.support]
    gaps = d.gaps if exact else [float(v) for v in d.gaps]
    out = []
    acc = 0
    for k, xk in enumerate(x):
        out.append(support[k] * xk - acc)
        acc = acc + gaps[k] * xk
    return out


def discretize(points: Iterable[tuple], epsilon) -> DiscreteDistribution:
    """Round a survival table onto the grid 1, (1+eps), (1+eps)^2, ...

    ``points`` lists ``(threshold, Pr[v >= threshold])`` pairs with ascending
    thresholds; the listed thresholds are taken to be the atoms.  Each value
    is rounded down to the nearest grid point (values below 1 go to 1).
    """
    eps = as_fraction(epsilon)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    pairs = [(as_fraction(t), as_fraction(s)) for t, s in points]
    if not pairs:
        raise ValueError("empty survival specification")
    ts = [t for t, _ in pairs]
    ss = [s for _, s in pairs]
    if ts[0] <= 0 or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("thresholds must be positive and strictly increasing")
    if ss[0] > 1 or any(b > a for a, b in zip(ss, ss[1:])) or min(ss) < 0:
        raise ValueError("survival must be non-increasing within [0, 1]")
    if ss[-1] != 0:
        raise ValueError("survival must end at 0")

    def at_least(x: Fraction) -> Fraction:
        for t, s in pairs:
            if t >= x:
                return s
        return Fraction(0)

    grid = [Fraction(1)]
    step = 1 + eps
    power = Fraction(1)
    while grid[-1] <= ts[-1]:
        power *= step
        g = power.limit_denominator(10**6)
        if g <= grid[-1]:
            raise ValueError("epsilon too small for the rational grid")
        grid.append(g)
    # grid[-1] lies above every atom, so its survival is 0
    surv = [Fraction(1)] + [at_least(g) for g in grid[1:]]
    pmf = [surv[k] - surv[k + 1] for k in range(len(grid) - 1)]
    return DiscreteDistribution(tuple(grid[:-1]), tuple(pmf))


# ---------------------------------------------------------------- families


def point_mass(v) -> DiscreteDistribution:
    return DiscreteDistribution((as_fraction(v),), (Fraction(1),))


def uniform(values: Iterable) -> DiscreteDistribution:
    vals = sorted(as_fraction(v) for v in values)
    p = Fraction(1, len(vals))
    return DiscreteDistribution(tuple(vals), (p,) * len(vals))


def from_continuation(support: Sequence, stop: Sequence) -> DiscreteDistribution:
    """Build a pmf from conditional stopping probabilities.

    ``stop[k] = Pr[V = r_k | V >= r_k]``; the last entry is forced to 1.
    On a unit-spaced support the law is MHR iff ``stop`` is non-decreasing.
    """
    stop = [as_fraction(q) for q in stop]
    stop[-1] = Fraction(1)
    pmf, alive = [], Fraction(1)
    for q in stop:
        pmf.append(alive * q)
        alive *= 1 - q
    return DiscreteDistribution(tuple(as_fraction(v) for v in support), tuple(pmf))


def truncated_geometric(q, length: int) -> DiscreteDistribution:
    """Geometric law on {1..length} with the tail lumped on the top point."""
    return from_continuation(range(1, length + 1), [as_fraction(q)] * length)


def binomial_shaped(length: int, p) -> DiscreteDistribution:
    """``1 + Binomial(length - 1, p)``: log-concave, hence MHR."""
    p = as_fraction(p)
    n = length - 1
    pmf = [math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)]
    return DiscreteDistribution(tuple(Fraction(k + 1) for k in range(n + 1)), tuple(pmf))


def equal_revenue(n: int) -> DiscreteDistribution:
    """Pr[V >= r] = 1/r on {1..n}."""
    pmf = [Fraction(1, r) - Fraction(1, r + 1) for r in range(1, n)] + [Fraction(1, n)]
    return DiscreteDistribution(tuple(Fraction(r) for r in range(1, n + 1)), tuple(pmf))


def random_mhr(rng: np.random.Generator, length: int, start: int = 1,
               denominator: int = 64) -> DiscreteDistribution:
    """Random MHR law on the integers start..start+length-1."""
    qs = sorted(Fraction(int(k), denominator)
                for k in rng.integers(1, denominator, size=length))
    return from_continuation(range(start, start + length), qs)


def random_regular(rng: np.random.Generator, max_value: int) -> DiscreteDistribution:
    """Random regular, non-MHR law on {1..max_value} (shifted Pareto tails).

    Survival ``(a / (r + a - 1))**alpha``; alpha = 1 gives a flat virtual
    value, alpha = 2 an increasing one.
    """
    if max_value < 3:
        raise ValueError("need at least 3 support points")
    while True:
        a = int(rng.integers(1, 6))
        alpha = int(rng.integers(1, 3))
        surv = [Fraction(a, r + a - 1) ** alpha for r in range(1, max_value + 1)] + [Fraction(0)]
        pmf = [surv[k] - surv[k + 1] for k in range(max_value)]
        d = DiscreteDistribution(tuple(Fraction(r) for r in range(1, max_value + 1)), tuple(pmf))
        c = classify(d)
        if c.is_regular and not c.is_mhr:
            return d
