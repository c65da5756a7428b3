import itertools
import math
from functools import reduce

import numpy as np
import pytest
import sympy

from morse_action.engine.smith import is_unimodular, rank_mod2, smith_normal_form, verify_smith


def _random_matrices(count, max_size, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m, n = rng.integers(1, max_size + 1, size=2)
        mat = rng.integers(-9, 10, size=(m, n))
        # some rank-deficient cases
        if rng.random() < 0.3 and m > 1:
            mat[-1] = 2 * mat[0] - mat[-2] if m > 2 else 3 * mat[0]
        yield mat.tolist()


def _determinantal_divisor(mat, k):
    """ gcd of all k x k minors """
    rows, cols = len(mat), len(mat[0])
    minors = (int(sympy.Matrix([[mat[i][j] for j in cs] for i in rs]).det())
              for rs in itertools.combinations(range(rows), k)
              for cs in itertools.combinations(range(cols), k))
    return reduce(math.gcd, minors, 0)


def test_known_example():
    form = smith_normal_form([[2, 4, 4], [-6, 6, 12], [10, -4, -16]])
    assert form.diagonal == [2, 6, 12]
    assert form.rank == 3
    assert form.torsion == (2, 6, 12)
    assert verify_smith([[2, 4, 4], [-6, 6, 12], [10, -4, -16]], form)


def test_random_matrices_are_certified():
    for mat in _random_matrices(200, 8, seed=0):
        form = smith_normal_form(mat)
        assert verify_smith(mat, form), mat
        assert form.rank == np.linalg.matrix_rank(np.array(mat, dtype=float))


def test_invariant_factors_match_determinantal_divisors():
    for mat in _random_matrices(60, 4, seed=1):
        form = smith_normal_form(mat)
        nonzero = [d for d in form.diagonal if d]
        assert len(nonzero) == form.rank
        for k in range(1, form.rank + 1):
            assert math.prod(nonzero[:k]) == _determinantal_divisor(mat, k), mat


def test_empty_and_zero_matrices():
    form = smith_normal_form([], shape=(0, 3))
    assert form.rank == 0 and form.torsion == ()
    assert verify_smith([], form)
    zero = [[0, 0, 0], [0, 0, 0]]
    form = smith_normal_form(zero)
    assert form.rank == 0 and form.diagonal == [0, 0]
    assert verify_smith(zero, form)


def test_non_integer_entries_are_rejected():
    with pytest.raises(ValueError):
        smith_normal_form([[0.5, 1.0]])


def test_unimodularity():
    assert is_unimodular([[2, 1], [1, 1]])
    assert not is_unimodular([[2, 0], [0, 1]])


def test_rank_mod2():
    assert rank_mod2([[2, 0], [0, 1]]) == 1
    assert rank_mod2([[1, 1], [1, 1]]) == 1
    assert rank_mod2([[1, 0, 0], [0, 1, 0], [0, 0, 1]]) == 3
    assert rank_mod2([]) == 0
