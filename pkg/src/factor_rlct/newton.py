"""RLCTs of monomial ideals via Newton polyhedra.

For a monomial ideal ``<w^a_1, ..., w^a_r>`` and a monomial amplitude
``w^tau`` the RLCT at the origin is ``(1/delta, mu)``, where ``delta`` is the
smallest ``t`` with ``t * (tau + 1)`` in the Newton polyhedron
``conv(a_i) + R^d_{>=0}`` and ``mu`` is the codimension of the face whose
relative interior contains that point.

Everything here is exact; the linear programs run on
:mod:`factor_rlct.rational_lp`.

Ideal file format
-----------------
A JSON object::

    {"dim": 3, "generators": [[1, 1, 0], [1, 0, 1], [0, 1, 1]], "tau": [0, 0, 0]}

``tau`` is optional and defaults to all zeros.  Exponents must be
non-negative integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .rational_lp import LinearProgram, Optimal, affine_rank, solve_lp
from .rlct import RlctPair

__all__ = [
    "MonomialIdeal",
    "UnitIdealError",
    "IdealFormatError",
    "tau_distance",
    "minimal_face_members",
    "tau_multiplicity",
    "rlct_monomial",
    "parse_ideal",
    "load_ideal",
]


class UnitIdealError(ValueError):
    """The ideal contains a constant; the Newton polyhedron method does not apply."""


class IdealFormatError(ValueError):
    """Malformed ideal document."""


def _int_vector(values, d, what) -> tuple[int, ...]:
    vec = tuple(values)
    if len(vec) != d:
        raise ValueError(f"{what} has length {len(vec)}, expected {d}")
    for v in vec:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"{what} entries must be integers, got {v!r}")
        if v < 0:
            raise ValueError(f"{what} entries must be non-negative, got {v}")
    return vec


@dataclass(frozen=True)
class MonomialIdeal:
    """A monomial ideal given by exponent vectors (deduplicated, order kept)."""

    dim: int
    generators: tuple

    def __post_init__(self):
        if isinstance(self.dim, bool) or not isinstance(self.dim, int) or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        gens = []
        for g in self.generators:
            vec = _int_vector(g, self.dim, "generator")
            if vec not in gens:
                gens.append(vec)
        if not gens:
            raise ValueError("an ideal needs at least one generator")
        if any(not any(g) for g in gens):
            raise UnitIdealError(
                "RLCT machinery inapplicable: the ideal contains the unit monomial"
            )
        object.__setattr__(self, "generators", tuple(gens))

    @property
    def num_generators(self) -> int:
        return len(self.generators)


def _tau(ideal: MonomialIdeal, tau) -> tuple[int, ...]:
    if tau is None:
        return (0,) * ideal.dim
    return _int_vector(tau, ideal.dim, "tau")


def tau_distance(ideal: MonomialIdeal, tau: Sequence[int] | None = None) -> Fraction:
    """Smallest ``t >= 0`` with ``t * (tau + 1)`` in the Newton polyhedron."""
    tau = _tau(ideal, tau)
    d, r = ideal.dim, ideal.num_generators
    # variables: t, theta_1..theta_r (all >= 0)
    ineqs = []
    for j in range(d):
        row = [tau[j] + 1] + [-g[j] for g in ideal.generators]
        ineqs.append((row, 0))
    eqs = [([0] + [1] * r, 1)]
    lp = LinearProgram(
        num_vars=r + 1,
        objective=[1] + [0] * r,
        eq_constraints=eqs,
        ineq_constraints=ineqs,
        nonnegative=True,
    )
    res = solve_lp(lp)
    assert isinstance(res, Optimal), res
    delta = res.value
    assert delta > 0
    return delta


def _membership_lp(ideal: MonomialIdeal, x, objective) -> LinearProgram:
    d, r = ideal.dim, ideal.num_generators
    # variables: theta_1..theta_r, mu_1..mu_d (all >= 0)
    eqs = []
    for j in range(d):
        row = [g[j] for g in ideal.generators] + [1 if jj == j else 0 for jj in range(d)]
        eqs.append((row, x[j]))
    eqs.append(([1] * r + [0] * d, 1))
    return LinearProgram(r + d, objective, eq_constraints=eqs, nonnegative=True)


def minimal_face_members(ideal: MonomialIdeal, x) -> tuple[frozenset, frozenset]:
    """Generators and coordinate rays spanning the minimal face through ``x``.

    Indices are 0-based.  Generator ``i`` belongs to the face iff some
    representation ``x = sum theta a + mu`` has ``theta_i > 0``; ray ``e_j``
    belongs iff some representation has ``mu_j > 0``.

    Raises
    ------
    ValueError
        If ``x`` is not in the Newton polyhedron.
    """
    d, r = ideal.dim, ideal.num_generators
    x = tuple(Fraction(v) for v in x)
    if len(x) != d:
        raise ValueError(f"point has length {len(x)}, expected {d}")
    first = solve_lp(_membership_lp(ideal, x, [0] * (r + d)))
    if not isinstance(first, Optimal):
        raise ValueError(f"point {tuple(map(str, x))} is not in the Newton polyhedron")
    # every feasible representation certifies its positive columns, so each
    # LP solved also settles the columns it happens to make positive
    positive = {c for c, v in enumerate(first.point) if v > 0}
    settled = set(positive)
    for col in range(r + d):
        if col in settled:
            continue
        obj = [0] * (r + d)
        obj[col] = -1
        res = solve_lp(_membership_lp(ideal, x, obj))
        assert isinstance(res, Optimal)
        hits = {c for c, v in enumerate(res.point) if v > 0}
        positive |= hits
        settled |= hits | {col}

    vertices = frozenset(i for i in range(r) if i in positive)
    rays = frozenset(j for j in range(d) if r + j in positive)
    return vertices, rays


def tau_multiplicity(ideal: MonomialIdeal, tau: Sequence[int] | None = None) -> int:
    tau = _tau(ideal, tau)
    delta = tau_distance(ideal, tau)
    x = [delta * (t + 1) for t in tau]
    vertices, rays = minimal_face_members(ideal, x)
    gens = ideal.generators
    anchor = gens[min(vertices)]
    points = [gens[i] for i in sorted(vertices)]
    for j in sorted(rays):
        points.append(tuple(a + (1 if jj == j else 0) for jj, a in enumerate(anchor)))
    return ideal.dim - affine_rank(points)


def rlct_monomial(ideal: MonomialIdeal, tau: Sequence[int] | None = None) -> RlctPair:
    """``(1/delta_tau, mu_tau)`` for the ideal with amplitude ``w^tau``."""
    return RlctPair(1 / tau_distance(ideal, tau), tau_multiplicity(ideal, tau))


def parse_ideal(text: str) -> tuple[MonomialIdeal, tuple[int, ...]]:
    """Parse an ideal document; returns the ideal and its ``tau``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IdealFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise IdealFormatError("top level must be an object")
    for key in ("dim", "generators"):
        if key not in doc:
            raise IdealFormatError(f"missing field {key!r}")
    unknown = set(doc) - {"dim", "generators", "tau"}
    if unknown:
        raise IdealFormatError(f"unknown field(s): {', '.join(sorted(unknown))}")
    gens = doc["generators"]
    if not isinstance(gens, list) or not all(isinstance(g, list) for g in gens):
        raise IdealFormatError("field 'generators' must be a list of integer lists")
    try:
        ideal = MonomialIdeal(doc["dim"], tuple(tuple(g) for g in gens))
    except UnitIdealError:
        raise
    except ValueError as exc:
        bad = next(
            (
                i
                for i, g in enumerate(gens)
                if len(g) != doc["dim"]
                or any(isinstance(v, bool) or not isinstance(v, int) or v < 0 for v in g)
            ),
            None,
        )
        where = f"generators[{bad}]: " if bad is not None else ""
        raise IdealFormatError(f"{where}{exc}") from None
    tau = doc.get("tau")
    if tau is not None:
        if not isinstance(tau, list):
            raise IdealFormatError("field 'tau' must be an integer list")
        try:
            tau = _int_vector(tau, ideal.dim, "tau")
        except ValueError as exc:
            raise IdealFormatError(f"tau: {exc}") from None
    return ideal, _tau(ideal, tau)


def load_ideal(path) -> tuple[MonomialIdeal, tuple[int, ...]]:
    with open(path, encoding="utf-8") as fh:
        return parse_ideal(fh.read())
