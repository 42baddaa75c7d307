"""Learning coefficients (real log canonical thresholds) of factor analysis models.

Exact results come from closed-form tables (:mod:`.learning_table`) and Newton
polyhedra of monomial ideals (:mod:`.newton`); numerical cross-checks from
level-set volumes (:mod:`.volume`) and marginal likelihoods (:mod:`.evidence`).
"""

__version__ = "0.1.0"

from .kernels import BACKEND
from .learning_table import Exactness, LearningCoefficient, learning_coefficient
from .newton import MonomialIdeal, rlct_monomial
from .rlct import RlctPair, compare, product_rule, sum_rule

__all__ = [
    "BACKEND",
    "Exactness",
    "LearningCoefficient",
    "MonomialIdeal",
    "RlctPair",
    "compare",
    "learning_coefficient",
    "product_rule",
    "rlct_monomial",
    "sum_rule",
]
