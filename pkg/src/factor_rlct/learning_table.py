"""Closed-form learning coefficients of the k-factor model.

``learning_coefficient(p, k, r)`` gives the generic learning coefficient
``l_kr`` (and its order ``m_kr`` where known) of the k-factor model at a
covariance matrix from the r-factor submodel.  Cells without an exact result
carry the general upper bound and no multiplicity.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from fractions import Fraction

from .factor_model import model_dimension
from .rlct import RlctPair

__all__ = [
    "Exactness",
    "LearningCoefficient",
    "bound",
    "learning_coefficient",
    "special_two_nonzero",
    "fiber_rlct_to_learning",
    "sbic_penalty_matrix",
    "table_rows",
    "table_to_csv",
    "table_to_json",
]


class Exactness(enum.Enum):
    EXACT = "Exact"
    UPPER_BOUND = "UpperBound"


@dataclass(frozen=True)
class LearningCoefficient:
    value: Fraction
    mult: int | None
    exactness: Exactness

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))
        if self.value <= 0:
            raise ValueError("learning coefficients are positive")
        if self.exactness is Exactness.EXACT and self.mult is None:
            raise ValueError("exact entries need a multiplicity")
        if self.exactness is Exactness.UPPER_BOUND and self.mult is not None:
            raise ValueError("upper-bound entries carry no multiplicity")

    @classmethod
    def exact(cls, value, mult: int = 1) -> "LearningCoefficient":
        return cls(Fraction(value), mult, Exactness.EXACT)

    @property
    def is_exact(self) -> bool:
        return self.exactness is Exactness.EXACT

    @property
    def penalty_mult(self) -> int:
        """Multiplicity used in sBIC penalties (1 for bound-only cells)."""
        return 1 if self.mult is None else self.mult


def _validate(p: int, k: int, r: int) -> None:
    if not (isinstance(p, int) and p >= 1):
        raise ValueError(f"p must be a positive integer, got {p!r}")
    if not (0 <= r <= k <= p):
        raise ValueError(f"need 0 <= r <= k <= p, got p={p}, k={k}, r={r}")


def _saturated(p: int, r: int) -> bool:
    return model_dimension(p, r)[0] > p * (p + 1) // 2


def bound(p: int, k: int, r: int) -> Fraction:
    """Upper bound ``(p(k+2) + r(p-k+1)) / 4`` valid when ``d_r <= p(p+1)/2``."""
    _validate(p, k, r)
    if _saturated(p, r):
        raise ValueError(
            f"d_r > p(p+1)/2 for p={p}, r={r}: the bound does not apply; "
            "use learning_coefficient for the exact value p(p+1)/4"
        )
    return Fraction(p * (k + 2) + r * (p - k + 1), 4)


def learning_coefficient(p: int, k: int, r: int) -> LearningCoefficient:
    _validate(p, k, r)
    full = Fraction(p * (p + 1), 4)
    if _saturated(p, r):
        return LearningCoefficient.exact(full)
    if r == k:
        return LearningCoefficient.exact(Fraction(model_dimension(p, k)[0], 2))
    if r == 0:
        if k == p:
            return LearningCoefficient.exact(Fraction(p * p + p + 1, 4))
        mult = p - 1 if k == p - 1 > 0 else 1
        return LearningCoefficient.exact(Fraction(p * (k + 2), 4), mult)
    if r == 1:
        if k >= p - 1:
            return LearningCoefficient.exact(full)
        return LearningCoefficient.exact(Fraction(p * k + 3 * p - k + 1, 4))
    return LearningCoefficient(bound(p, k, r), None, Exactness.UPPER_BOUND)


def special_two_nonzero(p: int) -> LearningCoefficient:
    """One-factor model at a covariance with exactly two non-zero off-diagonal entries."""
    if not (isinstance(p, int) and p >= 2):
        raise ValueError(f"need p >= 2, got {p!r}")
    return LearningCoefficient.exact(Fraction(2 * p - 1, 2))


def fiber_rlct_to_learning(pair: RlctPair, p: int) -> LearningCoefficient:
    """Shift a reduced-fiber RLCT by the ``p`` noise coordinates and halve it."""
    return LearningCoefficient.exact((pair.threshold + p) / 2, pair.mult)


def sbic_penalty_matrix(p: int, k_max: int) -> dict[tuple[int, int], LearningCoefficient]:
    """``{(s, r): learning_coefficient(p, s, r)}`` for ``0 <= r <= s <= k_max``."""
    if not (0 <= k_max <= p):
        raise ValueError(f"need 0 <= k_max <= p, got k_max={k_max}, p={p}")
    return {(s, r): learning_coefficient(p, s, r) for s in range(k_max + 1) for r in range(s + 1)}


TABLE_COLUMNS = ("p", "k", "r", "value_num", "value_den", "mult", "exactness")


def table_rows(p: int, k_max: int) -> list[dict]:
    rows = []
    for (s, r), lc in sbic_penalty_matrix(p, k_max).items():
        rows.append(
            {
                "p": p,
                "k": s,
                "r": r,
                "value_num": lc.value.numerator,
                "value_den": lc.value.denominator,
                "mult": lc.mult,
                "exactness": lc.exactness.value,
            }
        )
    return rows


def table_to_csv(p: int, k_max: int) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in table_rows(p, k_max):
        w.writerow({**row, "mult": "" if row["mult"] is None else row["mult"]})
    return buf.getvalue()


def table_to_json(p: int, k_max: int) -> str:
    rows = []
    for row in table_rows(p, k_max):
        rows.append(
            {
                "p": row["p"],
                "k": row["k"],
                "r": row["r"],
                "value": str(Fraction(row["value_num"], row["value_den"])),
                "mult": row["mult"],
                "exactness": row["exactness"],
            }
        )
    return json.dumps({"p": p, "k_max": k_max, "cells": rows}, indent=2) + "\n"
