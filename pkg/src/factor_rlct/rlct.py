"""Real log canonical threshold pairs and their calculus.

An RLCT is a pair ``(threshold, mult)``: the smallest pole of a zeta function
and its order.  Pairs are ordered lexicographically with the second
component reversed, so a larger multiplicity makes a pair *smaller*.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .rational_lp import as_fraction

__all__ = ["RlctPair", "Ordering", "compare", "sum_rule", "product_rule"]


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True, eq=True)
class RlctPair:
    """A pair ``(threshold, mult)`` with ``threshold > 0`` and ``mult >= 1``."""

    threshold: Fraction
    mult: int = 1

    def __post_init__(self):
        t = as_fraction(self.threshold)
        object.__setattr__(self, "threshold", t)
        if t <= 0:
            raise ValueError(f"threshold must be positive, got {t}")
        if isinstance(self.mult, bool) or not isinstance(self.mult, int) or self.mult < 1:
            raise ValueError(f"multiplicity must be an integer >= 1, got {self.mult!r}")

    def _key(self):
        return (self.threshold, -self.mult)

    def __lt__(self, other: "RlctPair") -> bool:
        return self._key() < other._key()

    def __le__(self, other: "RlctPair") -> bool:
        return self._key() <= other._key()

    def __gt__(self, other: "RlctPair") -> bool:
        return self._key() > other._key()

    def __ge__(self, other: "RlctPair") -> bool:
        return self._key() >= other._key()

    def to_json(self) -> dict:
        return {"lambda": str(self.threshold), "mult": self.mult}

    def __str__(self) -> str:
        return f"({self.threshold}, {self.mult})"


def compare(a: RlctPair, b: RlctPair) -> Ordering:
    if a == b:
        return Ordering.EQUAL
    return Ordering.LESS if a < b else Ordering.GREATER


def sum_rule(a: RlctPair, b: RlctPair) -> RlctPair:
    """RLCT of ``I + J`` for ideals in disjoint sets of variables."""
    return RlctPair(a.threshold + b.threshold, a.mult + b.mult - 1)


def product_rule(a: RlctPair, b: RlctPair) -> RlctPair:
    """RLCT of ``I * J`` for ideals in disjoint sets of variables."""
    if a.threshold < b.threshold:
        return a
    if b.threshold < a.threshold:
        return b
    return RlctPair(a.threshold, a.mult + b.mult)
