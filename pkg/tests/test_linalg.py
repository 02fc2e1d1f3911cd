"""
奇异值内核与有限差分工具测试
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tensor_autodiff import (
    NumericalError,
    ShapeError,
    Tensor,
    central_difference,
    relative_error,
    singular_values,
)


class TestSingularValues:

    def test_identity(self):
        assert_allclose(singular_values(np.eye(2)), [1.0, 1.0])

    def test_diagonal_sorted_descending(self):
        assert_allclose(singular_values(np.diag([3.0, 4.0])), [4.0, 3.0])

    def test_matches_gram_eigenvalues(self, rng):
        m = rng.normal(size=(4, 3))
        expected = np.sqrt(np.sort(np.linalg.eigvalsh(m.T @ m))[::-1])
        assert_allclose(singular_values(m), expected, atol=1e-8)

    def test_wide_matrix_uses_smaller_side(self, rng):
        m = rng.normal(size=(2, 6))
        values = singular_values(m)
        assert len(values) == 2
        assert_allclose(values, np.linalg.svd(m, compute_uv=False), atol=1e-8)

    def test_row_permutation_invariance(self, rng):
        m = rng.normal(size=(5, 3))
        shuffled = m[rng.permutation(5)]
        assert_allclose(singular_values(m), singular_values(shuffled), atol=1e-10)

    def test_accepts_tensor(self):
        assert_allclose(singular_values(Tensor(np.diag([2.0, 1.0]))), [2.0, 1.0])

    def test_rank_deficient(self):
        m = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        values = singular_values(m)
        assert values[1] == pytest.approx(0.0, abs=1e-10)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericalError):
            singular_values(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_non_matrix_rejected(self):
        with pytest.raises(ShapeError):
            singular_values(np.ones(3))


class TestFiniteDifferences:

    def test_quadratic(self):
        grad = central_difference(lambda p: float((p ** 2).sum()), np.array([1.0, -2.0, 0.5]))
        assert_allclose(grad, [2.0, -4.0, 1.0], atol=1e-8)

    def test_selected_indices_only(self):
        grad = central_difference(lambda p: float(p.sum()), np.zeros(3), indices=[(1,)])
        assert_allclose(grad, [0.0, 1.0, 0.0], atol=1e-8)

    def test_input_not_modified(self):
        point = np.array([1.0, 2.0])
        central_difference(lambda p: float(p.prod()), point)
        assert_allclose(point, [1.0, 2.0])

    def test_relative_error_floor(self):
        err = relative_error(np.array([1e-7, 1.0]), np.array([2e-7, 1.1]), floor=1e-3)
        assert err[0] == pytest.approx(1e-4)
        assert err[1] == pytest.approx(0.1 / 1.1)
