import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esindy.exceptions import InputError, ParameterError, SpecError
from esindy.library import DataMatrix, LibrarySpec
from esindy.metrics import coefficient_error, support_success
from esindy.systems import simulate_pde
from esindy.weak import WeakConfig, assemble_weak_system, bump, discover_pde, pde_true_coefficients, weak_fit

SPEC = LibrarySpec(2, include_constant=True, spatial_derivative_order=3, include_mixed_terms=True)


@pytest.fixture(scope="module")
def burgers():
    return simulate_pde("burgers", save_every=2)


class TestBump:
    @pytest.mark.parametrize("degree", [2, 4, 6])
    def test_vanishes_at_ends(self, degree):
        for order in range(degree):
            v = bump(51, degree, order)
            assert abs(v[0]) < 1e-12 and abs(v[-1]) < 1e-12

    def test_derivative_matches_finite_difference(self):
        xb = np.linspace(-1, 1, 2001)
        v, dv = bump(2001, 4), bump(2001, 4, 1)
        np.testing.assert_allclose(np.gradient(v, xb)[5:-5], dv[5:-5], atol=1e-5)

    def test_physical_length_scaling(self):
        np.testing.assert_allclose(bump(11, 4, 2, length=4.0), bump(11, 4, 2) * 0.25)


class TestWeakSystem:
    def test_exact_on_manufactured_field(self):
        # u = sin(x - t) solves u_t = -u_x exactly
        t = np.linspace(0, 2, 201)
        x = np.linspace(0, 2 * np.pi, 128, endpoint=False)
        field = DataMatrix(np.sin(x[None] - t[:, None]), t[1] - t[0], dx=x[1] - x[0])
        spec = LibrarySpec(1, include_constant=False, spatial_derivative_order=2)
        ws = assemble_weak_system(field, spec, WeakConfig(n_domains=40, seed=1))
        xi = np.linalg.lstsq(ws.Q, ws.q0, rcond=None)[0]
        np.testing.assert_allclose(xi, [0.0, -1.0, 0.0], atol=1e-3)

    def test_offsets_deterministic(self, burgers):
        a = assemble_weak_system(burgers, SPEC, WeakConfig(n_domains=16, seed=4))
        b = assemble_weak_system(burgers, SPEC, WeakConfig(n_domains=16, seed=4))
        assert np.array_equal(a.offsets, b.offsets) and a.Q.tobytes() == b.Q.tobytes()

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 1000), K=st.integers(1, 64))
    def test_shapes(self, burgers, seed, K):
        ws = assemble_weak_system(burgers, SPEC, WeakConfig(n_domains=K, seed=seed))
        assert ws.Q.shape == (K, 8) and ws.q0.shape == (K,)

    def test_errors(self, burgers):
        with pytest.raises(InputError):
            assemble_weak_system(DataMatrix(np.ones((10, 10)), 0.1), SPEC)
        with pytest.raises(SpecError):
            assemble_weak_system(burgers, SPEC, WeakConfig(test_function_degree=3))
        with pytest.raises(ParameterError):
            assemble_weak_system(burgers, SPEC, WeakConfig(domain_size=(2, 2)))
        with pytest.raises(ParameterError):
            WeakConfig(n_domains=0)


class TestDiscovery:
    @pytest.mark.parametrize("name,save_every", [("burgers", 2), ("kdv", 40)])
    def test_clean_recovery(self, name, save_every):
        field = simulate_pde(name, save_every=save_every)
        true = pde_true_coefficients(name, SPEC)
        xi = weak_fit(field, SPEC)
        assert support_success(true, xi)
        assert coefficient_error(true, xi) < 0.05

    def test_ensemble_recovery_with_noise(self, burgers):
        from esindy.systems import add_noise

        true = pde_true_coefficients("burgers", SPEC)
        res = discover_pde(add_noise(burgers, 0.02, 0), SPEC, WeakConfig(seed=0))
        assert support_success(true, res.aggregated)

    def test_true_coefficients_need_terms(self):
        with pytest.raises(SpecError):
            pde_true_coefficients("kdv", LibrarySpec(2, spatial_derivative_order=1, include_mixed_terms=True))
