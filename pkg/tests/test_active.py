import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esindy.active import ActiveConfig, active_loop, candidate_variances, forecast_variance, write_history
from esindy.ensemble import EnsembleConfig, bagging
from esindy.exceptions import ParameterError
from esindy.forecasting import integrate_batch
from esindy.io import read_json
from esindy.library import build_library, library_terms
from esindy.differentiation import differentiate
from esindy.regression import RegressionConfig
from esindy.systems import LORENZ_U0, add_noise, lorenz, simulate_ode


@pytest.fixture(scope="module")
def lorenz_ensemble():
    sys_ = lorenz()
    data = add_noise(simulate_ode(sys_, LORENZ_U0, 1.0, 0.01), 0.05, 1)
    res = bagging(build_library(data, sys_.library_spec), differentiate(data), RegressionConfig(0.2),
                  EnsembleConfig(n_models=15, seed=2))
    return sys_, res


SMALL = dict(n_candidate_ics=20, n_iterations=2, initial_data_budget=50, probe_samples=10)


class TestVariance:
    @pytest.mark.parametrize("steps", [1, 3])
    def test_matches_covariance_oracle(self, lorenz_ensemble, steps):
        sys_, res = lorenz_ensemble
        ic = np.array([5.0, -3.0, 20.0])
        terms = library_terms(sys_.library_spec, 3, sys_.state_names)
        traj, _ = integrate_batch(terms, res.coefficient_stack, ic, steps * 0.01, 0.01)
        ends = traj[:, -1]
        oracle = np.trace(np.cov(ends.T, bias=True))
        assert forecast_variance(res, sys_.library_spec, ic, steps) == pytest.approx(oracle, rel=1e-9)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_batch_equals_single(self, lorenz_ensemble, seed):
        sys_, res = lorenz_ensemble
        ics = np.random.default_rng(seed).uniform(-10, 10, size=(4, 3))
        batch = candidate_variances(res, sys_.library_spec, ics)
        single = [forecast_variance(res, sys_.library_spec, ic) for ic in ics]
        np.testing.assert_allclose(batch, single, rtol=1e-12)
        assert np.all(batch >= 0)

    def test_identical_members_have_zero_spread(self, lorenz_ensemble):
        sys_, res = lorenz_ensemble
        d = res.to_dict(include_stack=True)
        d["coefficient_stack"] = np.repeat(res.coefficient_stack[:1], 5, axis=0)
        from esindy.ensemble import EnsembleResult
        same = EnsembleResult.from_dict(d)
        assert forecast_variance(same, sys_.library_spec, [1.0, 1.0, 1.0], 5) == 0.0

    def test_bad_horizon(self, lorenz_ensemble):
        sys_, res = lorenz_ensemble
        with pytest.raises(ParameterError):
            candidate_variances(res, sys_.library_spec, [[1.0, 1.0, 1.0]], 0)


class TestLoop:
    def test_argmax_selection(self):
        hist = active_loop(cfg=ActiveConfig(**SMALL, seed=3))
        assert [h.iteration for h in hist] == [0, 1, 2]
        for h in hist[1:]:
            assert h.chosen_index is not None
            assert h.variance_summary["max"] >= h.variance_summary["mean_finite"]
        assert hist[-1].n_samples == 50 + 2 * 10

    def test_random_baseline_takes_first_candidate(self):
        hist = active_loop(cfg=ActiveConfig(**SMALL, selection="random"))
        assert all(h.chosen_index == 0 for h in hist[1:])

    def test_deterministic_and_thread_independent(self, tmp_path):
        cfg = ActiveConfig(**SMALL, seed=9)
        a = active_loop(cfg=cfg)
        b = active_loop(cfg=cfg, threads=3)
        for x, y in zip(a, b):
            assert x.result.coefficient_stack.tobytes() == y.result.coefficient_stack.tobytes()
        write_history(tmp_path / "h.json", a, cfg)
        assert read_json(tmp_path / "h.json")["config"]["seed"] == 9

    def test_zero_iterations(self):
        assert len(active_loop(cfg=ActiveConfig(**{**SMALL, "n_iterations": 0}))) == 1

    @pytest.mark.parametrize("kwargs", [{"n_candidate_ics": 0}, {"probe_samples": 4}, {"selection": "greedy"},
                                        {"ic_sampling_region": ((1.0, 0.0),)}, {"noise": -1.0}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            ActiveConfig(**kwargs)

    def test_region_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            active_loop(cfg=ActiveConfig(**SMALL, ic_sampling_region=((0.0, 1.0),)))
