import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esindy.bench import stls_reference
from esindy.exceptions import ParameterError, ShapeError
from esindy.regression import CoefficientMatrix, RegressionConfig, ridge_solve, sparsify_dynamics


def _problem(seed, m=80, D=8, n=2, noise=0.01):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, D))
    xi = np.zeros((D, n))
    xi[rng.choice(D, 3, replace=False), 0] = rng.uniform(1, 3, 3) * rng.choice([-1, 1], 3)
    xi[rng.choice(D, 2, replace=False), 1] = rng.uniform(1, 3, 2)
    return A, xi, A @ xi + noise * rng.normal(size=(m, n))


class TestRidge:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), lam=st.floats(1e-3, 10.0))
    def test_matches_normal_equations(self, seed, lam):
        rng = np.random.default_rng(seed)
        A, b = rng.normal(size=(50, 6)), rng.normal(size=(50, 2))
        oracle = np.linalg.solve(A.T @ A + lam * np.eye(6), A.T @ b)
        got = ridge_solve(A, b, lam)
        assert np.linalg.norm(got - oracle) <= 1e-10 * np.linalg.norm(oracle)

    def test_zero_lambda_is_least_squares(self):
        A, _, b = _problem(0)
        np.testing.assert_array_equal(ridge_solve(A, b), np.linalg.lstsq(A, b, rcond=None)[0])

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            ridge_solve(np.ones((5, 2)), np.ones(4))
        with pytest.raises(ParameterError):
            ridge_solve(np.ones((5, 2)), np.ones(5), -1.0)


class TestSparsify:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_stridge_zero_ridge_equals_stls_bitwise(self, seed):
        A, _, b = _problem(seed)
        ours = sparsify_dynamics(A, b, RegressionConfig(0.5, 0.0)).xi
        assert np.array_equal(ours, stls_reference(A, b, 0.5))

    @pytest.mark.parametrize("seed", range(5))
    def test_recovers_support(self, seed):
        A, xi, b = _problem(seed)
        got = sparsify_dynamics(A, b, RegressionConfig(0.5)).xi
        assert np.array_equal(got != 0, xi != 0)
        np.testing.assert_allclose(got, xi, atol=0.02)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), lam=st.floats(0.0, 2.0))
    def test_no_surviving_coefficient_below_threshold(self, seed, lam):
        A, _, b = _problem(seed, noise=0.5)
        xi = sparsify_dynamics(A, b, RegressionConfig(lam)).xi
        assert np.all((xi == 0) | (np.abs(xi) >= lam))

    def test_threshold_is_strict(self):
        # a coefficient exactly at the threshold survives
        A = np.eye(4)
        b = np.array([[0.5], [0.2], [0.0], [1.0]])
        xi = sparsify_dynamics(A, b, RegressionConfig(0.5)).xi[:, 0]
        assert np.array_equal(xi, [0.5, 0.0, 0.0, 1.0])

    def test_huge_threshold_gives_zero_model(self):
        A, _, b = _problem(1)
        assert not np.any(sparsify_dynamics(A, b, RegressionConfig(1e6)).xi)

    def test_normalization_threshold_in_original_units(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(100, 3)) * np.array([1.0, 100.0, 0.01])
        xi_true = np.array([[1.0], [0.05], [30.0]])
        b = A @ xi_true
        for normalize in (False, True):
            xi = sparsify_dynamics(A, b, RegressionConfig(0.1, normalize_columns=normalize)).xi
            assert np.array_equal(xi[:, 0] != 0, [True, False, True])

    def test_candidates_mask(self):
        A, xi, b = _problem(3)
        mask = np.ones(A.shape[1], bool)
        mask[np.flatnonzero(xi[:, 0])[0]] = False
        got = sparsify_dynamics(A, b, RegressionConfig(0.1), candidates=mask).xi
        assert np.all(got[~mask] == 0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sparsify_dynamics(np.ones((5, 2)), np.ones((4, 1)))

    @pytest.mark.parametrize("kwargs", [{"lambda1": -1}, {"lambda2": -0.1}, {"max_iterations": 0}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            RegressionConfig(**kwargs)


class TestCoefficientMatrix:
    def test_equations_and_round_trip(self):
        c = CoefficientMatrix(np.array([[0.0, 1.0], [-10.0, 0.0], [10.0, 2.5]]), ("1", "x", "y"), ("x", "y"))
        assert c.equations() == ["dx/dt = -10.000 x + 10.000 y", "dy/dt = 1.000 + 2.500 y"]
        back = CoefficientMatrix.from_dict(c.to_dict())
        assert np.array_equal(back.xi, c.xi) and back.term_labels == c.term_labels

    def test_zero_equation(self):
        c = CoefficientMatrix(np.zeros((2, 1)), ("1", "x"), ("x",))
        assert c.equations() == ["dx/dt = 0"]
