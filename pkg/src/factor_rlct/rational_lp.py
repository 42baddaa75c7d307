"""Exact linear programming over the rationals.

A small dense two-phase simplex method on :class:`fractions.Fraction`
tableaus using Bland's pivoting rule.  It is meant for the tiny programs that
arise from Newton polyhedra (tens of variables), where exactness matters and
speed does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

__all__ = [
    "LinearProgram",
    "Optimal",
    "Infeasible",
    "Unbounded",
    "solve_lp",
    "affine_rank",
    "as_fraction",
]


def as_fraction(value) -> Fraction:
    """Convert ints, Fractions and decimal strings to a Fraction.

    Floats are rejected: they would silently smuggle rounding into the
    exact code path.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def _frac_vec(values, n: int, what: str) -> tuple[Fraction, ...]:
    vec = tuple(as_fraction(v) for v in values)
    if len(vec) != n:
        raise ValueError(f"{what} has length {len(vec)}, expected {n}")
    return vec


@dataclass(frozen=True)
class LinearProgram:
    """``minimize objective . x`` subject to linear constraints.

    Parameters
    ----------
    num_vars : int
        Number of variables.
    objective : sequence of rationals
        Cost vector (minimized).
    eq_constraints : sequence of (coeffs, rhs)
        Constraints ``coeffs . x == rhs``.
    ineq_constraints : sequence of (coeffs, rhs)
        Constraints ``coeffs . x >= rhs``.
    nonnegative : bool
        If True all variables are implicitly ``>= 0``; otherwise they are
        free and the solver splits them internally.
    """

    num_vars: int
    objective: tuple
    eq_constraints: tuple = ()
    ineq_constraints: tuple = ()
    nonnegative: bool = False

    def __post_init__(self):
        n = self.num_vars
        if not isinstance(n, int) or n < 1:
            raise ValueError("num_vars must be a positive integer")
        object.__setattr__(self, "objective", _frac_vec(self.objective, n, "objective"))
        eqs = tuple(
            (_frac_vec(a, n, "equality row"), as_fraction(b)) for a, b in self.eq_constraints
        )
        ineqs = tuple(
            (_frac_vec(a, n, "inequality row"), as_fraction(b))
            for a, b in self.ineq_constraints
        )
        object.__setattr__(self, "eq_constraints", eqs)
        object.__setattr__(self, "ineq_constraints", ineqs)

    def is_satisfied_by(self, point: Sequence[Fraction]) -> bool:
        """Exact feasibility check of ``point``."""
        if len(point) != self.num_vars:
            return False
        if self.nonnegative and any(x < 0 for x in point):
            return False
        for a, b in self.eq_constraints:
            if sum(ai * xi for ai, xi in zip(a, point)) != b:
                return False
        for a, b in self.ineq_constraints:
            if sum(ai * xi for ai, xi in zip(a, point)) < b:
                return False
        return True


@dataclass(frozen=True)
class Optimal:
    value: Fraction
    point: tuple


@dataclass(frozen=True)
class Infeasible:
    pass


@dataclass(frozen=True)
class Unbounded:
    pass


@dataclass
class _Tableau:
    # rows: constraint rows [coeffs..., rhs]; basis[i] is the basic column of row i
    rows: list
    basis: list
    ncols: int
    cost: list = field(default_factory=list)

    def pivot(self, r: int, c: int) -> None:
        prow = self.rows[r]
        piv = prow[c]
        if piv != 1:
            prow = [v / piv for v in prow]
            self.rows[r] = prow
        for i, row in enumerate(self.rows):
            if i != r and row[c] != 0:
                f = row[c]
                self.rows[i] = [a - f * b for a, b in zip(row, prow)]
        if self.cost[c] != 0:
            f = self.cost[c]
            self.cost = [a - f * b for a, b in zip(self.cost, prow)]
        self.basis[r] = c

    def run(self, allowed: int) -> bool:
        """Bland's rule simplex on columns ``< allowed``; False if unbounded.

        ``cost`` holds reduced costs with the negated objective value in the
        last slot; optimality is reached when no reduced cost is negative.
        """
        while True:
            enter = next((j for j in range(allowed) if self.cost[j] < 0), None)
            if enter is None:
                return True
            best = None
            for i, row in enumerate(self.rows):
                a = row[enter]
                if a > 0:
                    ratio = row[-1] / a
                    key = (ratio, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return False
            self.pivot(best[1], enter)


def solve_lp(lp: LinearProgram):
    """Solve ``lp`` exactly.

    Returns
    -------
    Optimal | Infeasible | Unbounded
        ``Optimal`` carries the exact optimum and an optimal point that
        satisfies every constraint with rational equality.
    """
    n = lp.num_vars
    split = not lp.nonnegative
    # standard-form columns: x (or x+ and x-), then one slack per inequality
    nx = 2 * n if split else n
    n_ineq = len(lp.ineq_constraints)
    nstd = nx + n_ineq

    def expand(a):
        return list(a) + [-v for v in a] if split else list(a)

    rows = []
    for a, b in lp.eq_constraints:
        rows.append(expand(a) + [Fraction(0)] * n_ineq + [b])
    for s, (a, b) in enumerate(lp.ineq_constraints):
        slack = [Fraction(0)] * n_ineq
        slack[s] = Fraction(-1)
        rows.append(expand(a) + slack + [b])
    for row in rows:
        if row[-1] < 0:
            row[:] = [-v for v in row]

    m = len(rows)
    cost_std = expand(lp.objective) + [Fraction(0)] * n_ineq

    if m == 0:
        # no constraints: optimum 0 at the origin unless some direction descends
        descends = any(c != 0 for c in lp.objective) if split else any(c < 0 for c in cost_std)
        if descends:
            return Unbounded()
        return Optimal(Fraction(0), tuple(Fraction(0) for _ in range(n)))

    # phase one: artificial columns nstd .. nstd+m-1
    ncols = nstd + m
    full = []
    for i, row in enumerate(rows):
        art = [Fraction(0)] * m
        art[i] = Fraction(1)
        full.append(row[:-1] + art + [row[-1]])
    tab = _Tableau(rows=full, basis=[nstd + i for i in range(m)], ncols=ncols)
    cost = [Fraction(0)] * (ncols + 1)
    for row in full:
        for j in range(nstd):
            cost[j] -= row[j]
        cost[-1] -= row[-1]
    tab.cost = cost
    tab.run(nstd)
    if tab.cost[-1] != 0:
        return Infeasible()

    # drive remaining artificial variables out of the basis
    for i in range(m):
        if tab.basis[i] >= nstd:
            col = next((j for j in range(nstd) if tab.rows[i][j] != 0), None)
            if col is not None:
                tab.pivot(i, col)
    keep = [i for i in range(m) if tab.basis[i] < nstd]
    tab.rows = [tab.rows[i][:nstd] + [tab.rows[i][-1]] for i in keep]
    tab.basis = [tab.basis[i] for i in keep]
    tab.ncols = nstd

    # phase two
    cost = list(cost_std) + [Fraction(0)]
    for i, row in enumerate(tab.rows):
        cb = cost_std[tab.basis[i]]
        if cb != 0:
            cost = [c - cb * v for c, v in zip(cost, row)]
    tab.cost = cost
    if not tab.run(nstd):
        return Unbounded()

    xs = [Fraction(0)] * nstd
    for i, b in enumerate(tab.basis):
        xs[b] = tab.rows[i][-1]
    if split:
        point = tuple(xs[j] - xs[n + j] for j in range(n))
    else:
        point = tuple(xs[:n])
    value = sum((c * x for c, x in zip(lp.objective, point)), Fraction(0))
    return Optimal(value, point)


def affine_rank(points) -> int:
    """Dimension of the affine hull of ``points`` (exact Gaussian elimination)."""
    pts = [tuple(as_fraction(v) for v in p) for p in points]
    if not pts:
        raise ValueError("affine_rank needs at least one point")
    d = len(pts[0])
    if any(len(p) != d for p in pts):
        raise ValueError("points have unequal lengths")
    base = pts[0]
    rows = [[a - b for a, b in zip(p, base)] for p in pts[1:]]
    rank = 0
    for col in range(d):
        piv = next((i for i in range(rank, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        prow = rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][col] != 0:
                f = rows[i][col] / prow[col]
                rows[i] = [a - f * b for a, b in zip(rows[i], prow)]
        rank += 1
        if rank == len(rows):
            break
    return rank
