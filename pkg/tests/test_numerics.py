import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import log_binomial_exact
from sess.errors import ConstantColumn, InvalidArgs
from sess.numerics import (least_squares, log_binomial, regularized_gram_inverse,
                           standardize_columns)


class TestStandardize:
    def test_one_two_three(self):
        out = standardize_columns(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(out[:, 0], [-math.sqrt(1.5), 0.0, math.sqrt(1.5)], atol=1e-15)

    def test_idempotent(self, rng):
        once = standardize_columns(rng.normal(size=(12, 4)))
        np.testing.assert_allclose(standardize_columns(once), once, atol=1e-12)

    def test_random_moments(self, rng):
        # [DERIVED] moments recomputed directly
        out = standardize_columns(rng.normal(3.0, 7.0, size=(10, 3)))
        for c in out.T:
            assert abs(sum(c)) < 1e-10
            assert abs(sum(v * v for v in c) - 10) < 1e-10

    def test_scaling_roundtrip(self, rng):
        m = rng.normal(size=(8, 3))
        out, sc = standardize_columns(m, return_scaling=True)
        np.testing.assert_allclose(out * sc.scale + sc.mean, m, atol=1e-12)

    def test_constant_column_reports_index(self):
        m = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
        with pytest.raises(ConstantColumn) as err:
            standardize_columns(m)
        assert err.value.index == 1

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
    def test_property_centered_unit(self, m):
        spread = m.max(axis=0) - m.min(axis=0)
        if np.any(spread < 1e-3):
            return
        out = standardize_columns(m)
        np.testing.assert_allclose(out.sum(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose((out**2).sum(axis=0), 6, rtol=1e-9)


class TestLeastSquares:
    def test_identity_design(self, rng):
        rhs = rng.normal(size=(3, 2))
        sol = least_squares(np.eye(3), rhs)
        np.testing.assert_allclose(sol.coefficients, rhs, atol=1e-14)
        np.testing.assert_allclose(sol.residuals, 0, atol=1e-14)
        assert sol.rank == 3

    def test_duplicated_column(self, rng):
        a = rng.normal(size=(10, 2))
        design = np.column_stack([a, a[:, 0]])
        sol = least_squares(design, rng.normal(size=10))
        assert sol.rank == 2
        assert np.all(np.isfinite(sol.coefficients))
        # minimum-norm solution splits weight equally across the copies
        assert abs(sol.coefficients[0, 0] - sol.coefficients[2, 0]) < 1e-10

    def test_residuals_orthogonal(self, rng):
        # [DERIVED] normal-equations oracle
        design = rng.normal(size=(20, 4))
        rhs = rng.normal(size=(20, 2))
        sol = least_squares(design, rhs)
        assert np.max(np.abs(design.T @ sol.residuals)) < 1e-8
        beta = np.linalg.solve(design.T @ design, design.T @ rhs)
        np.testing.assert_allclose(sol.coefficients, beta, atol=1e-10)

    def test_empty_design(self, rng):
        rhs = rng.normal(size=(5, 1))
        sol = least_squares(np.zeros((5, 0)), rhs)
        assert sol.coefficients.shape == (0, 1)
        np.testing.assert_array_equal(sol.residuals, rhs)


class TestGramInverse:
    def test_orthonormal(self):
        q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(7, 3)))
        np.testing.assert_allclose(regularized_gram_inverse(q), np.eye(3), atol=1e-12)

    def test_diagonal(self):
        m = np.array([[math.sqrt(2), 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(regularized_gram_inverse(m), [[0.5, 0], [0, 0.25]],
                                   atol=1e-14)

    def test_identical_columns_moore_penrose(self, rng):
        a = rng.normal(size=9)
        m = np.column_stack([a, a, rng.normal(size=9)])
        g = m.T @ m
        gi = regularized_gram_inverse(m)
        np.testing.assert_allclose(g @ gi @ g, g, atol=1e-8)


class TestLogBinomial:
    def test_k_zero(self):
        assert log_binomial(17, 0) == 0.0

    def test_five_choose_two(self):
        assert abs(log_binomial(5, 2) - 2.302585093) < 1e-9

    def test_big_integer_oracle(self):
        # [DERIVED] exact big-integer C(4000, 7)
        exact = log_binomial_exact(4000, 7)
        assert abs(log_binomial(4000, 7) - exact) <= 1e-9 * exact

    @pytest.mark.parametrize("n,k", [(3, 4), (-1, 0), (4, -1)])
    def test_invalid(self, n, k):
        with pytest.raises(InvalidArgs):
            log_binomial(n, k)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 3000).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
    def test_symmetry_and_oracle(self, nk):
        n, k = nk
        assert log_binomial(n, k) == log_binomial(n, n - k)
        exact = log_binomial_exact(n, k)
        assert abs(log_binomial(n, k) - exact) <= 1e-9 * max(exact, 1.0)
