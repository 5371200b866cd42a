import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esindy.differentiation import differentiate
from esindy.ensemble import (
    EnsembleConfig,
    EnsembleResult,
    bagging,
    bootstrap_rows,
    bragging,
    default_ensemble_config,
    identify,
    inclusion_probabilities,
    library_bagging,
    run_ensemble,
    stability_selection,
    stability_subsets,
    threshold_by_ip,
)
from esindy.exceptions import ParameterError, ShapeError
from esindy.library import build_library
from esindy.regression import RegressionConfig, sparsify_dynamics
from esindy.systems import LORENZ_U0, add_noise, lorenz, simulate_ode


@pytest.fixture(scope="module")
def lorenz_problem():
    sys_ = lorenz()
    data = add_noise(simulate_ode(sys_, LORENZ_U0, 5.0, 0.01), 0.001, 0)
    return sys_, build_library(data, sys_.library_spec), differentiate(data)


REG = RegressionConfig(0.2)


class TestBootstrap:
    @settings(max_examples=20, deadline=None)
    @given(m=st.integers(1, 500), seed=st.integers(0, 2**31))
    def test_indices_in_range(self, m, seed):
        rows = bootstrap_rows(m, seed)
        assert rows.shape == (m,) and rows.min() >= 0 and rows.max() < m

    def test_distinct_fraction_near_one_minus_inverse_e(self):
        m = 100_000
        fracs = [np.unique(bootstrap_rows(m, s)).size / m for s in range(10)]
        assert abs(np.mean(fracs) - (1 - np.exp(-1))) < 0.005

    def test_rejects_empty(self):
        with pytest.raises(ParameterError):
            bootstrap_rows(0, 0)


class TestInclusionProbabilities:
    def test_counts_nonzeros(self):
        stack = np.zeros((4, 2, 1))
        stack[:3, 0, 0] = 1.0
        np.testing.assert_array_equal(inclusion_probabilities(stack)[:, 0], [0.75, 0.0])

    def test_conditional_on_candidacy(self):
        stack = np.zeros((4, 2, 1))
        stack[0, 0, 0] = 1.0
        cand = np.array([[1, 1], [1, 0], [0, 1], [0, 1]], bool)
        np.testing.assert_array_equal(inclusion_probabilities(stack, cand)[:, 0], [0.5, 0.0])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_bounded(self, seed):
        rng = np.random.default_rng(seed)
        stack = rng.normal(size=(7, 4, 2)) * (rng.random((7, 4, 2)) < 0.5)
        ip = inclusion_probabilities(stack, rng.random((7, 4)) < 0.7)
        assert np.all((ip >= 0) & (ip <= 1))

    def test_threshold_by_ip(self):
        out = threshold_by_ip(np.array([[1.0], [2.0]]), np.array([[0.5], [0.7]]), 0.6)
        np.testing.assert_array_equal(out, [[0.0], [2.0]])
        with pytest.raises(ShapeError):
            threshold_by_ip(np.ones((2, 1)), np.ones((3, 1)), 0.5)


class TestEnsembles:
    @pytest.mark.parametrize("fn", [bagging, bragging, library_bagging])
    def test_recovers_lorenz(self, lorenz_problem, fn):
        sys_, theta, ut = lorenz_problem
        ens = default_ensemble_config(fn.__name__, n_models=30)
        res = fn(theta, ut, REG, ens)
        assert np.array_equal(res.aggregated.xi != 0, sys_.true_coefficients.xi != 0)

    def test_single_full_bootstrap_equals_sindy(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        m = theta.shape[0]
        res = bagging(theta, ut, REG, EnsembleConfig(ip_threshold=0.0), bootstraps=[np.arange(m)])
        np.testing.assert_array_equal(res.aggregated.xi, sparsify_dynamics(theta, ut, REG).xi)

    def test_bragging_is_median(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        res = bragging(theta, ut, REG, EnsembleConfig(n_models=11, ip_threshold=0.0))
        np.testing.assert_array_equal(res.aggregated.xi, np.median(res.coefficient_stack, axis=0))

    def test_bagging_threshold_rule(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        res = bagging(theta, ut, REG, EnsembleConfig(n_models=20, ip_threshold=0.6))
        expected = np.where(res.inclusion_probabilities < 0.6, 0.0, res.coefficient_stack.mean(axis=0))
        np.testing.assert_array_equal(res.aggregated.xi, expected)

    def test_library_bagging_sub_library_size(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        res = library_bagging(theta, ut, REG, EnsembleConfig(n_models=10, ip_threshold=0.4, library_fraction=0.6))
        sets = res.library_stage["column_sets"]
        assert sets.shape == (10, 6)
        assert all(len(set(s)) == 6 for s in sets)

    def test_library_fraction_too_small(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        with pytest.raises(ParameterError):
            library_bagging(theta, ut, REG, EnsembleConfig(library_fraction=0.01))

    @pytest.mark.parametrize("method", ["bagging", "bragging", "library_bagging"])
    def test_thread_count_does_not_change_result(self, lorenz_problem, method):
        _, theta, ut = lorenz_problem
        ens = EnsembleConfig(n_models=12, seed=5)
        a = run_ensemble(method, theta, ut, REG, ens, threads=1)
        b = run_ensemble(method, theta, ut, REG, ens, threads=4)
        assert a.coefficient_stack.tobytes() == b.coefficient_stack.tobytes()

    def test_seed_changes_members(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        a = bagging(theta, ut, REG, EnsembleConfig(n_models=5, seed=1))
        b = bagging(theta, ut, REG, EnsembleConfig(n_models=5, seed=2))
        assert not np.array_equal(a.coefficient_stack, b.coefficient_stack)

    def test_serialization_round_trip(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        res = library_bagging(theta, ut, REG, EnsembleConfig(n_models=5, ip_threshold=0.4))
        back = EnsembleResult.from_dict(res.to_dict(include_stack=True))
        np.testing.assert_array_equal(back.coefficient_stack, res.coefficient_stack)
        np.testing.assert_array_equal(back.aggregated.xi, res.aggregated.xi)
        with pytest.raises(ShapeError):
            EnsembleResult.from_dict(res.to_dict())


class TestStabilitySelection:
    def test_recovers_lorenz(self, lorenz_problem):
        sys_, theta, ut = lorenz_problem
        xi = stability_selection(theta, ut, REG, EnsembleConfig(n_models=20))
        assert np.array_equal(xi.xi != 0, sys_.true_coefficients.xi != 0)

    @pytest.mark.parametrize("replace,size", [(False, 50), (True, 100)])
    def test_subset_sizes(self, replace, size):
        subsets = stability_subsets(100, EnsembleConfig(n_models=3), replace)
        assert all(len(s) == size for s in subsets)
        if not replace:
            assert all(len(set(s)) == size for s in subsets)


class TestConfigAndDispatch:
    @pytest.mark.parametrize("method,tol", [("bagging", 0.6), ("bragging", 0.6), ("library_bagging", 0.4),
                                            ("library-bagging", 0.4)])
    def test_default_thresholds(self, method, tol):
        assert default_ensemble_config(method).ip_threshold == tol

    @pytest.mark.parametrize("kwargs", [{"n_models": 0}, {"aggregation": "mode"}, {"ip_threshold": 1.5},
                                        {"library_fraction": 0.0}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            EnsembleConfig(**kwargs)

    def test_unknown_method(self, lorenz_problem):
        _, theta, ut = lorenz_problem
        with pytest.raises(ParameterError):
            run_ensemble("boosting", theta, ut, REG, EnsembleConfig())

    def test_identify_sindy_has_no_ensemble(self):
        sys_ = lorenz()
        data = simulate_ode(sys_, LORENZ_U0, 2.0, 0.01)
        xi, res = identify("sindy", data, sys_.library_spec, REG)
        assert res is None and xi.xi.shape == (10, 3)
