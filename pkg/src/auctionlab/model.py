"""Auction instances: correlated type tables and product (per-edge) laws."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import ClassVar, Sequence, Union

import numpy as np

from .dist import DiscreteDistribution, PMF_TOL, as_fraction, truncate

DEFAULT_PROFILE_CAP = 10_000


class TooLargeError(ValueError):
    """Enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class TypeEntry:
    prob: Fraction
    values: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "prob", as_fraction(self.prob))
        object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))


@dataclass(frozen=True)
class CorrelatedInstance:
    """Bidders with finite type tables; values may be correlated across items."""

    budgets: tuple[Fraction, ...]
    demands: tuple[int, ...]
    types: tuple[tuple[TypeEntry, ...], ...]
    n_items: int

    kind: ClassVar[str] = "correlated"

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(as_fraction(b) for b in self.budgets))
        object.__setattr__(self, "demands", tuple(int(d) for d in self.demands))
        object.__setattr__(self, "types", tuple(
            tuple(t if isinstance(t, TypeEntry) else TypeEntry(*t) for t in table)
            for table in self.types))

    @property
    def n_bidders(self) -> int:
        return len(self.budgets)

    def n_types(self, i: int) -> int:
        return len(self.types[i])

    @cached_property
    def type_probs(self) -> tuple[np.ndarray, ...]:
        return tuple(np.array([float(t.prob) for t in table]) for table in self.types)

    @cached_property
    def type_values(self) -> tuple[np.ndarray, ...]:
        """Per bidder, a (K_i, n) float array of valuations."""
        return tuple(np.array([[float(v) for v in t.values] for t in table]).reshape(len(table), self.n_items)
                     for table in self.types)


@dataclass(frozen=True)
class ProductInstance:
    """Independent per-edge valuation laws ``edges[i][j]``."""

    budgets: tuple[Fraction, ...]
    demands: tuple[int, ...]
    edges: tuple[tuple[DiscreteDistribution, ...], ...]

    kind: ClassVar[str] = "product"

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(as_fraction(b) for b in self.budgets))
        object.__setattr__(self, "demands", tuple(int(d) for d in self.demands))
        object.__setattr__(self, "edges", tuple(tuple(row) for row in self.edges))

    @property
    def n_bidders(self) -> int:
        return len(self.budgets)

    @property
    def n_items(self) -> int:
        return len(self.edges[0]) if self.edges else 0

    @cached_property
    def truncated(self) -> tuple[tuple[DiscreteDistribution, ...], ...]:
        """Laws of min(v_ij, B_i / 4)."""
        return tuple(tuple(truncate(d, b / 4) for d in row)
                     for b, row in zip(self.budgets, self.edges))

    @cached_property
    def max_value(self) -> Fraction:
        return max(d.max_value for row in self.edges for d in row)

    def to_correlated(self, cap: int = DEFAULT_PROFILE_CAP) -> CorrelatedInstance:
        """Expand each bidder's product law into an explicit type table."""
        tables = []
        for row in self.edges:
            size = 1
            for d in row:
                size *= len(d)
            if size > cap:
                raise TooLargeError(f"bidder type table would have {size} entries (cap {cap})")
            table = []
            for combo in itertools.product(*(range(len(d)) for d in row)):
                prob = Fraction(1)
                for d, k in zip(row, combo):
                    prob *= d.pmf[k]
                table.append(TypeEntry(prob, tuple(d.support[k] for d, k in zip(row, combo))))
            tables.append(tuple(table))
        return CorrelatedInstance(self.budgets, self.demands, tuple(tables), self.n_items)


Instance = Union[CorrelatedInstance, ProductInstance]


@dataclass(frozen=True)
class TypeProfile:
    """Realized types: type indices (correlated) or an (m, n) value matrix (product)."""

    types: tuple[int, ...] | None = None
    values: np.ndarray | None = field(default=None, compare=False)


def validate(instance: Instance) -> list[str]:
    """Every invariant violation found; empty when the instance is well formed."""
    problems: list[str] = []
    m = len(instance.budgets)
    if len(instance.demands) != m:
        problems.append("budgets and demands have different lengths")
    for i, b in enumerate(instance.budgets):
        if b <= 0:
            problems.append(f"bidder {i}: budget must be > 0")
    for i, n_i in enumerate(instance.demands):
        if n_i < 1:
            problems.append(f"bidder {i}: demand must be ≥ 1")
    if isinstance(instance, CorrelatedInstance):
        if len(instance.types) != m:
            problems.append("one type table per bidder required")
        for i, table in enumerate(instance.types):
            if not table:
                problems.append(f"bidder {i}: empty type table")
                continue
            total = sum(t.prob for t in table)
            if abs(float(total) - 1.0) > PMF_TOL:
                problems.append(f"bidder {i}: type probabilities sum ≠ 1 (got {float(total):.12g})")
            for k, t in enumerate(table):
                if t.prob <= 0:
                    problems.append(f"bidder {i} type {k}: probability must be > 0")
                if len(t.values) != instance.n_items:
                    problems.append(f"bidder {i} type {k}: expected {instance.n_items} values")
                if any(v < 0 for v in t.values):
                    problems.append(f"bidder {i} type {k}: valuations must be ≥ 0")
    else:
        if len(instance.edges) != m:
            problems.append("one row of edge distributions per bidder required")
        widths = {len(row) for row in instance.edges}
        if len(widths) > 1:
            problems.append("edge rows have different lengths")
        for i, row in enumerate(instance.edges):
            for j, d in enumerate(row):
                if not isinstance(d, DiscreteDistribution):
                    problems.append(f"edge ({i},{j}): not a distribution")
    return problems


def check(instance: Instance) -> Instance:
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    return instance


def enumerate_profiles(instance: CorrelatedInstance,
                       cap: int = DEFAULT_PROFILE_CAP) -> list[tuple[TypeProfile, Fraction]]:
    """All joint type profiles with their (exact) probabilities."""
    size = 1
    for table in instance.types:
        size *= len(table)
    if size > cap:
        raise TooLargeError(f"{size} joint profiles exceed cap {cap}")
    out = []
    for combo in itertools.product(*(range(len(t)) for t in instance.types)):
        prob = Fraction(1)
        for table, k in zip(instance.types, combo):
            prob *= table[k].prob
        out.append((TypeProfile(types=combo), prob))
    return out


def sample_types(instance: CorrelatedInstance, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, m) array of independently drawn type indices."""
    out = np.empty((size, instance.n_bidders), dtype=np.int64)
    for i, p in enumerate(instance.type_probs):
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        out[:, i] = np.searchsorted(cdf, rng.random(size), side="right")
    return out


def sample_values(instance: ProductInstance, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, m, n) array of independently drawn (untruncated) valuations."""
    out = np.empty((size, instance.n_bidders, instance.n_items))
    for i, row in enumerate(instance.edges):
        for j, d in enumerate(row):
            out[:, i, j] = d.sample_values(rng, size)
    return out


def sample_profile(instance: Instance, rng: np.random.Generator) -> TypeProfile:
    if isinstance(instance, CorrelatedInstance):
        return TypeProfile(types=tuple(int(t) for t in sample_types(instance, rng, 1)[0]))
    return TypeProfile(values=sample_values(instance, rng, 1)[0])


def correlated(budgets: Sequence, demands: Sequence, tables: Sequence, n_items: int | None = None
               ) -> CorrelatedInstance:
    """Convenience constructor; ``tables[i]`` lists ``(prob, values)`` pairs."""
    tables = tuple(tuple(TypeEntry(p, v) for p, v in table) for table in tables)
    if n_items is None:
        n_items = len(tables[0][0].values)
    return CorrelatedInstance(tuple(budgets), tuple(demands), tables, n_items)


def product(budgets: Sequence, demands: Sequence, edges: Sequence[Sequence[DiscreteDistribution]]
            ) -> ProductInstance:
    return ProductInstance(tuple(budgets), tuple(demands), tuple(tuple(r) for r in edges))
