"""Dense linear programs (maximize, ``<=`` rows, box bounds) and their solvers.

``solve`` defaults to a two-phase tableau simplex using Bland's rule.  The
``"highs"`` method hands the same program to scipy's HiGHS dual simplex;
it is used for the larger oracle programs and is cross-checked against the
tableau code in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    """Numerical failure inside a solver."""


@dataclass(frozen=True)
class LinearProgram:
    """maximize c.x  subject to  A x <= b,  lo <= x <= hi."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    var_labels: tuple[str, ...] = ()
    row_labels: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).ravel()
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("row count of A does not match b")
        if lo.size != n or hi.size != n:
            raise ValueError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("coefficients must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        var_labels = tuple(self.var_labels) or tuple(f"x{j}" for j in range(n))
        row_labels = tuple(self.row_labels) or tuple(f"row{k}" for k in range(b.size))
        if len(var_labels) != n or len(row_labels) != b.size:
            raise ValueError("label counts do not match the program")
        for name, val in (("c", c), ("A", A), ("b", b), ("lo", lo), ("hi", hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "var_labels", var_labels)
        object.__setattr__(self, "row_labels", row_labels)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size


class LPBuilder:
    """Incremental construction with labelled variables and sparse rows."""

    def __init__(self):
        self._c: list[float] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._vars: list[str] = []
        self._rows: list[dict[int, float]] = []
        self._rhs: list[float] = []
        self._row_labels: list[str] = []

    def add_var(self, label: str, lo: float = 0.0, hi: float = np.inf, obj: float = 0.0) -> int:
        self._vars.append(label)
        self._lo.append(lo)
        self._hi.append(hi)
        self._c.append(obj)
        return len(self._vars) - 1

    def add_row(self, label: str, coeffs: Mapping[int, float], rhs: float) -> int:
        row: dict[int, float] = {}
        for j, a in coeffs.items():
            row[j] = row.get(j, 0.0) + float(a)
        self._rows.append(row)
        self._rhs.append(float(rhs))
        self._row_labels.append(label)
        return len(self._rows) - 1

    def build(self) -> LinearProgram:
        n = len(self._vars)
        A = np.zeros((len(self._rows), n))
        for k, row in enumerate(self._rows):
            for j, a in row.items():
                A[k, j] = a
        return LinearProgram(np.array(self._c), A, np.array(self._rhs), np.array(self._lo),
                             np.array(self._hi), tuple(self._vars), tuple(self._row_labels))


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    objective: float
    status: str
    method: str = "simplex"
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violation: float
    where: str | None = None


def check_feasible(lp: LinearProgram, values: Sequence[float], tol: float = FEAS_TOL) -> Feasibility:
    """Largest bound or row violation of ``values``."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size != lp.n_vars:
        raise ValueError(f"expected {lp.n_vars} values, got {x.size}")
    worst, where = 0.0, None
    if lp.n_rows:
        slack = lp.A @ x - lp.b
        k = int(np.argmax(slack))
        if slack[k] > worst:
            worst, where = float(slack[k]), lp.row_labels[k]
    below = lp.lo - x
    above = x - lp.hi
    for arr, tag in ((below, "lower bound"), (above, "upper bound")):
        if arr.size:
            j = int(np.argmax(arr))
            if arr[j] > worst:
                worst, where = float(arr[j]), f"{tag} of {lp.var_labels[j]}"
    return Feasibility(worst <= tol, worst, where)


def solve(lp: LinearProgram, method: str = "simplex", max_iter: int = 50_000) -> LPSolution:
    if method == "simplex":
        return _solve_tableau(lp, max_iter)
    if method == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown method {method!r}")


def format_lp(lp: LinearProgram) -> str:
    """Human-readable dump with labelled rows."""

    def term(a: float, name: str) -> str:
        return f"{a:+.6g} {name}"

    lines = ["maximize"]
    obj = [term(a, lp.var_labels[j]) for j, a in enumerate(lp.c) if a != 0]
    lines.append("  " + (" ".join(obj) if obj else "0"))
    lines.append("subject to")
    for k in range(lp.n_rows):
        terms = [term(a, lp.var_labels[j]) for j, a in enumerate(lp.A[k]) if a != 0]
        lines.append(f"  {lp.row_labels[k]}: {' '.join(terms) or '0'} <= {lp.b[k]:.9g}")
    lines.append("bounds")
    for j in range(lp.n_vars):
        lines.append(f"  {lp.lo[j]:.9g} <= {lp.var_labels[j]} <= {lp.hi[j]:.9g}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ tableau


def _to_standard(lp: LinearProgram):
    """Rewrite as max c'y, A'y <= b', y >= 0 and return the back-map.

    Returns (c', A', b', const, M, shift) with x = M y + shift.
    """
    n = lp.n_vars
    cols, shift = [], np.zeros(n)
    rows_extra = []
    for j in range(n):
        lo, hi = lp.lo[j], lp.hi[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                rows_extra.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((n, len(cols)))
    for q, (j, s) in enumerate(cols):
        M[j, q] = s
    A1 = lp.A @ M
    b1 = lp.b - lp.A @ shift
    if rows_extra:
        E = np.zeros((len(rows_extra), len(cols)))
        for r, (q, cap) in enumerate(rows_extra):
            E[r, q] = 1.0
        A1 = np.vstack([A1, E])
        b1 = np.concatenate([b1, [cap for _, cap in rows_extra]])
    c1 = lp.c @ M
    const = float(lp.c @ shift)
    return c1, A1, b1, const, M, shift


def _pivot(T: np.ndarray, p: int, q: int) -> None:
    T[p] /= T[p, q]
    col = T[:, q].copy()
    col[p] = 0.0
    nz = np.nonzero(np.abs(col) > 0)[0]
    if nz.size:
        T[nz] -= np.outer(col[nz], T[p])
    T[:, q] = 0.0
    T[p, q] = 1.0


def _run_phase(T: np.ndarray, basis: list[int], n_allowed: int, max_iter: int) -> tuple[str, int]:
    """Bland's-rule iterations on tableau T (last row = reduced costs)."""
    m = T.shape[0] - 1
    for it in range(max_iter):
        reduced = T[-1, :n_allowed]
        candidates = np.nonzero(reduced > PIVOT_TOL)[0]
        if candidates.size == 0:
            return OPTIMAL, it
        q = int(candidates[0])
        col = T[:m, q]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        p = int(min(tied, key=lambda r: basis[r]))
        _pivot(T, p, q)
        basis[p] = q
    raise SolverError(f"simplex did not terminate within {max_iter} pivots")


def _solve_tableau(lp: LinearProgram, max_iter: int) -> LPSolution:
    c, A, b, const, M, shift = _to_standard(lp)
    m, n = A.shape
    # flip rows with negative rhs; those need artificials
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    needs_art = np.nonzero(sign < 0)[0]
    n_art = needs_art.size
    width = n + m + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.diag(sign)
    T[:m, -1] = b
    basis = [n + k for k in range(m)]
    for a, r in enumerate(needs_art):
        T[r, n + m + a] = 1.0
        basis[r] = n + m + a
    iterations = 0

    if n_art:
        T[-1, :] = 0.0
        T[-1, n + m:width] = -1.0
        for r in needs_art:
            T[-1] += T[r]
        T[-1, n + m:width] = 0.0
        status, it = _run_phase(T, basis, width, max_iter)
        iterations += it
        if status != OPTIMAL:
            raise SolverError("phase one did not reach optimality")
        if -T[-1, -1] < -FEAS_TOL * max(1.0, np.abs(b).max()):
            return LPSolution(np.full(lp.n_vars, np.nan), float("nan"), INFEASIBLE, "simplex", iterations)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n + m:
                row = T[r, :n + m]
                nz = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if nz.size:
                    q = int(nz[0])
                    _pivot(T, r, q)
                    basis[r] = q
                else:
                    keep[r] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = [bv for bv, k in zip(basis, keep) if k]
            m = len(basis)
        # slacks of dropped rows stay as ordinary columns
        T = np.hstack([T[:, :n + sign.size], T[:, -1:]])

    width = T.shape[1] - 1
    cost = np.zeros(width)
    cost[:n] = c
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for r, bv in enumerate(basis):
        if cost[bv] != 0.0:
            T[-1] -= cost[bv] * T[r]
    status, it = _run_phase(T, basis, width, max_iter)
    iterations += it
    if status == UNBOUNDED:
        return LPSolution(np.full(lp.n_vars, np.nan), float("inf"), UNBOUNDED, "simplex", iterations)
    y = np.zeros(width)
    for r, bv in enumerate(basis):
        y[bv] = T[r, -1]
    x = M @ y[:n] + shift
    x = np.clip(x, lp.lo, lp.hi)
    return LPSolution(x, float(lp.c @ x), OPTIMAL, "simplex", iterations)


# -------------------------------------------------------------------- highs


def _solve_highs(lp: LinearProgram) -> LPSolution:
    from scipy.optimize import linprog

    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(h) else h)
              for l, h in zip(lp.lo, lp.hi)]
    res = linprog(-lp.c, A_ub=lp.A if lp.n_rows else None, b_ub=lp.b if lp.n_rows else None,
                  bounds=bounds, method="highs-ds")
    if res.status == 2:
        return LPSolution(np.full(lp.n_vars, np.nan), float("nan"), INFEASIBLE, "highs", res.nit)
    if res.status == 3:
        return LPSolution(np.full(lp.n_vars, np.nan), float("inf"), UNBOUNDED, "highs", res.nit)
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}")
    x = np.clip(res.x, lp.lo, lp.hi)
    return LPSolution(x, float(lp.c @ x), OPTIMAL, "highs", int(res.nit))
