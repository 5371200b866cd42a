import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from esindy.exceptions import ParameterError
from esindy.mpc import (
    MpcConfig,
    closed_loop,
    excitation_signal,
    horizon_cost,
    mpc_step,
    predict_batch,
    run_mpc_experiment,
    solve_horizon,
)
from esindy.systems import SystemDefinition, forced_lorenz

TARGET = MpcConfig().target


def _linear_system(A, B):
    def rhs(s, u, p):
        u = np.asarray(0.0 if u is None else u, dtype=float)
        return s @ p["A"].T + np.multiply.outer(u, p["B"])

    return SystemDefinition("linear", A.shape[0], rhs, {"A": A, "B": B}, control_dim=1)


def _rk4_discretization(A, B, dt):
    # RK4 applied to x' = A x + B u with u held constant
    n = A.shape[0]
    Ad, Bd, term = np.eye(n), np.zeros(n), np.eye(n)
    for k in range(1, 5):
        term = term @ (dt * A) / k
        Ad = Ad + term
    term = dt * np.eye(n)
    for k in range(1, 5):
        Bd = Bd + term @ B
        term = term @ (dt * A) / (k + 1)
    return Ad, Bd


class TestHorizon:
    def test_predict_matches_stepwise(self):
        plant = forced_lorenz()
        useqs = np.array([[1.0, -2.0, 3.0], [0.0, 0.0, 0.0]])
        pred = predict_batch(plant, [1.0, 2.0, 3.0], useqs, 0.01)
        x = np.array([1.0, 2.0, 3.0])
        for k, u in enumerate(useqs[0]):
            x = predict_batch(plant, x, np.array([[u]]), 0.01)[0, 0]
            np.testing.assert_allclose(pred[0, k], x, rtol=1e-14)

    @settings(max_examples=10, deadline=None)
    @given(lo=st.floats(-30, -0.5), hi=st.floats(0.5, 30), seed=st.integers(0, 100))
    def test_bounds_respected(self, lo, hi, seed):
        cfg = MpcConfig(control_bounds=(lo, hi), horizon_steps=5)
        x = np.asarray(TARGET) + np.random.default_rng(seed).normal(size=3) * 10
        sol = solve_horizon(forced_lorenz(), x, cfg)
        assert np.all(sol.sequence >= lo) and np.all(sol.sequence <= hi)

    def test_zero_control_at_fixed_point(self):
        u = mpc_step(forced_lorenz(), np.asarray(TARGET))
        assert abs(u) < 1e-3

    def test_cost_of_zero_control_at_fixed_point(self):
        assert horizon_cost(forced_lorenz(), TARGET, np.zeros(10), MpcConfig()) == pytest.approx(0.0, abs=1e-20)

    def test_lqr_oracle(self):
        # linearization of the forced system at the target fixed point
        s = math.sqrt(72.0)
        A = np.array([[-10.0, 10.0, 0.0], [1.0, -1.0, -s], [s, s, -8.0 / 3.0]])
        B = np.array([1.0, 0.0, 0.0])
        cfg = MpcConfig(horizon_steps=20, target=(0.0, 0.0, 0.0), max_nfev=200)
        Ad, Bd = _rk4_discretization(A, B, cfg.dt)
        Q, R = np.eye(3), np.array([[cfg.control_weight]])
        P = scipy.linalg.solve_discrete_are(Ad, Bd[:, None], Q, R)
        K = np.linalg.solve(R + Bd @ P @ Bd[None].T, Bd[None] @ P @ Ad)
        x0 = np.array([0.5, -0.3, 0.2])
        x, lqr_seq = x0.copy(), []
        for _ in range(cfg.horizon_steps):
            u = float(-(K @ x)[0])
            lqr_seq.append(u)
            x = Ad @ x + Bd * u
        model = _linear_system(A, B)
        j_lqr = horizon_cost(model, x0, lqr_seq, cfg)
        sol = solve_horizon(model, x0, cfg)
        assert sol.cost <= 1.2 * j_lqr
        assert sol.sequence[0] == pytest.approx(lqr_seq[0], rel=0.2)

    @pytest.mark.parametrize("kwargs", [{"horizon_steps": 0}, {"control_bounds": (1.0, -1.0)},
                                        {"control_weight": -1.0}, {"target": (0.0, 0.0)}, {"dt": 0.0}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ParameterError):
            MpcConfig(**kwargs)


class TestClosedLoop:
    def test_true_model_converges(self):
        plant = forced_lorenz()
        cfg = MpcConfig(total_steps=150)
        states, controls, J = closed_loop(plant, plant, (-8.0, 8.0, 27.0), cfg)
        assert np.all(np.abs(states[-1] - TARGET) <= 0.5)
        assert np.isfinite(J) and controls.shape == (150,)

    def test_diverging_plant_gives_inf(self):
        blowup = SystemDefinition("blowup", 3, lambda s, u, p: s**3, control_dim=1)
        _, _, J = closed_loop(blowup, forced_lorenz(), (50.0, 50.0, 50.0), MpcConfig(total_steps=50, horizon_steps=2))
        assert J == float("inf")

    def test_experiment_with_given_model(self, tmp_path):
        exp = run_mpc_experiment(50, model=forced_lorenz(), cfg=MpcConfig(total_steps=20))
        assert exp.identified and exp.states.shape == (21, 3)
        exp.write(tmp_path / "m")
        assert (tmp_path / "m.csv").read_text().startswith("t,x,y,z,u")


class TestExperiment:
    def test_identified_model_deterministic(self):
        cfg = MpcConfig(total_steps=5)
        a = run_mpc_experiment(60, method="esindy", cfg=cfg, seed=2, n_models=10)
        b = run_mpc_experiment(60, method="esindy", cfg=cfg, seed=2, n_models=10)
        assert a.mean_cost == b.mean_cost and a.config["noise_mode"] == "variance_over_rms"

    def test_short_training_warns(self):
        with pytest.warns(RuntimeWarning, match="underdetermined"):
            run_mpc_experiment(10, method="sindy", cfg=MpcConfig(total_steps=2))

    @pytest.mark.parametrize("kwargs", [{"method": "lqr"}, {"train_steps": 3}])
    def test_bad_arguments(self, kwargs):
        with pytest.raises(ParameterError):
            run_mpc_experiment(**{"train_steps": 50, **kwargs})

    def test_excitation_peak(self):
        u = excitation_signal(1000, 0.01, 0)
        assert 3.0 < np.abs(u).max() < 15.0
        np.testing.assert_array_equal(u, excitation_signal(1000, 0.01, 0))
