import csv
import io
import json
from fractions import Fraction

import pytest

from factor_rlct.factor_model import model_dimension
from factor_rlct.learning_table import (
    Exactness,
    LearningCoefficient,
    bound,
    fiber_rlct_to_learning,
    learning_coefficient,
    sbic_penalty_matrix,
    special_two_nonzero,
    table_to_csv,
    table_to_json,
)
from factor_rlct.rlct import RlctPair
from oracles import table_value

F = Fraction


def cells(p_max=12):
    for p in range(1, p_max + 1):
        for k in range(p + 1):
            for r in range(k + 1):
                yield p, k, r


def test_bound_examples():
    assert bound(5, 2, 0) == 5
    assert bound(5, 2, 2) == 7
    assert bound(5, 2, 1) == 6
    with pytest.raises(ValueError, match="exact value"):
        bound(3, 3, 3)  # d_3 = 9 > 6


def test_learning_coefficient_examples():
    assert learning_coefficient(5, 1, 0) == LearningCoefficient.exact(F(15, 4), 1)
    assert learning_coefficient(4, 3, 0) == LearningCoefficient.exact(5, 3)
    assert learning_coefficient(5, 2, 1) == LearningCoefficient.exact(6, 1)
    assert learning_coefficient(3, 2, 1) == LearningCoefficient.exact(3, 1)
    assert learning_coefficient(3, 3, 0) == LearningCoefficient.exact(F(13, 4), 1)
    lc = learning_coefficient(6, 4, 2)
    assert lc.exactness is Exactness.UPPER_BOUND and lc.mult is None and lc.penalty_mult == 1


def test_matches_transcribed_table():
    for p, k, r in cells():
        lc = learning_coefficient(p, k, r)
        value, mult = table_value(p, k, r)
        assert lc.value == value and lc.mult == mult, (p, k, r)
        assert lc.is_exact == (mult is not None)


def test_invalid_arguments():
    for args in [(0, 0, 0), (3, 4, 0), (3, 1, 2), (3, -1, 0)]:
        with pytest.raises(ValueError):
            learning_coefficient(*args)
    with pytest.raises(ValueError):
        LearningCoefficient(F(1), None, Exactness.EXACT)
    with pytest.raises(ValueError):
        LearningCoefficient(F(1), 1, Exactness.UPPER_BOUND)


def test_bound_identities():
    for p, k, r in cells():
        d_k = model_dimension(p, k)[0]
        if r == k and d_k <= p * (p + 1) // 2:
            assert bound(p, k, k) == F(d_k, 2)
        if r == 0 and k <= p - 1:
            assert learning_coefficient(p, k, 0).value == bound(p, k, 0)
        if r == 0 and k == p and p >= 2:  # p = 1 gives 3/4 on both sides
            assert learning_coefficient(p, p, 0).value < bound(p, p, 0)
        if r == 1 and k <= p - 2 and model_dimension(p, 1)[0] <= p * (p + 1) // 2:
            assert learning_coefficient(p, k, 1).value == bound(p, k, 1)
        if r == 1 and k >= p - 1 and model_dimension(p, 1)[0] <= p * (p + 1) // 2:
            assert learning_coefficient(p, k, 1).value <= bound(p, k, 1)


def test_values_below_half_dimension_and_bound():
    for p, k, r in cells():
        lc = learning_coefficient(p, k, r)
        assert 0 < lc.value <= F(model_dimension(p, k)[0], 2)
        if model_dimension(p, r)[0] <= p * (p + 1) // 2:
            assert lc.value <= bound(p, k, r)


def test_monotone_in_r_probe():
    # Nondecreasing in r holds except in two places, both pinned here:
    # at k = p the r = 0 value (p^2+p+1)/4 exceeds p(p+1)/4 at r = 1, and an
    # UpperBound cell right before saturation can exceed the capped p(p+1)/4.
    amb = lambda p: p * (p + 1) // 2  # noqa: E731
    for p in range(1, 13):
        for k in range(p + 1):
            vals = [learning_coefficient(p, k, r) for r in range(k + 1)]
            for r in range(k):
                a, b = vals[r], vals[r + 1]
                if a.value <= b.value:
                    continue
                full_rank = k == p and r == 0
                capped = not a.is_exact and model_dimension(p, r + 1)[0] > amb(p)
                assert full_rank or capped, (p, k, r)
                if capped:
                    assert b.value == F(amb(p), 2)


def test_small_p_specials_from_dispatch():
    assert learning_coefficient(2, 2, 1).value == F(3, 2)
    assert learning_coefficient(3, 2, 1).value == 3
    for p in range(4, 13):
        assert learning_coefficient(p, 2, 1).value == F(5 * p - 1, 4)


def test_special_two_nonzero():
    assert special_two_nonzero(3) == LearningCoefficient.exact(F(5, 2), 1)
    assert special_two_nonzero(5) == LearningCoefficient.exact(F(9, 2), 1)
    assert learning_coefficient(3, 1, 0).value < special_two_nonzero(3).value < learning_coefficient(3, 1, 1).value
    with pytest.raises(ValueError):
        special_two_nonzero(1)


def test_fiber_reduction():
    assert fiber_rlct_to_learning(RlctPair(F(3, 2)), 3) == LearningCoefficient.exact(F(9, 4), 1)
    assert fiber_rlct_to_learning(RlctPair(F(6), 3), 4) == LearningCoefficient.exact(5, 3)
    assert fiber_rlct_to_learning(RlctPair(F(4)), 4) == LearningCoefficient.exact(4, 1)


def test_penalty_matrix_and_exports():
    m = sbic_penalty_matrix(5, 1)
    assert m[(0, 0)].value == F(5, 2)
    assert m[(1, 0)].value == F(15, 4)
    assert m[(1, 1)].value == 5
    rows = list(csv.DictReader(io.StringIO(table_to_csv(5, 2))))
    assert len(rows) == 6
    row = next(r for r in rows if (r["k"], r["r"]) == ("2", "1"))
    assert (row["value_num"], row["value_den"], row["exactness"]) == ("6", "1", "Exact")
    doc = json.loads(table_to_json(5, 2))
    assert any(c["value"] == "15/4" for c in doc["cells"])
    assert "UpperBound" in table_to_csv(6, 4) and ",,UpperBound" in table_to_csv(6, 4)
