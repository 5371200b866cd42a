import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esindy.exceptions import InputError, InsufficientDataError, ShapeError, SpecError
from esindy.library import (
    DataMatrix,
    LibrarySpec,
    build_library,
    evaluate_terms,
    fd_weights,
    library_terms,
    polynomial_evaluator,
    spatial_derivative,
)


def _data(seed=0, m=20, n=3):
    return DataMatrix(np.random.default_rng(seed).normal(size=(m, n)), 0.1)


class TestTerms:
    def test_graded_lex_order_lorenz(self):
        labels = [t.label for t in library_terms(LibrarySpec(2), 3)]
        assert labels == ["1", "x", "y", "z", "x^2", "x y", "x z", "y^2", "y z", "z^2"]

    @pytest.mark.parametrize("n,degree,expected", [(1, 3, 4), (2, 2, 6), (3, 2, 10), (3, 3, 20), (4, 2, 15)])
    def test_term_count_is_binomial(self, n, degree, expected):
        assert len(library_terms(LibrarySpec(degree), n)) == expected

    def test_controls_expand_with_states_and_go_last(self):
        labels = [t.label for t in library_terms(LibrarySpec(2, control_inputs=1), 3)]
        assert len(labels) == 15
        assert labels[:10] == [t.label for t in library_terms(LibrarySpec(2), 3)]
        assert labels[10:] == ["u", "x u", "y u", "z u", "u^2"]

    def test_pde_library_labels(self):
        spec = LibrarySpec(2, spatial_derivative_order=3, include_mixed_terms=True)
        assert [t.label for t in library_terms(spec)] == ["1", "u", "u^2", "u_x", "u_xx", "u_xxx", "u u_x", "u^2 u_x"]

    def test_trig_terms(self):
        labels = [t.label for t in library_terms(LibrarySpec(1, False, trig_frequencies=(1.0, 2.0)), 2)]
        assert labels == ["x", "y", "sin(x)", "sin(y)", "cos(x)", "cos(y)", "sin(2x)", "sin(2y)", "cos(2x)", "cos(2y)"]

    @pytest.mark.parametrize("kwargs", [
        {"polynomial_degree": -1},
        {"spatial_derivative_order": 5},
        {"include_mixed_terms": True},
        {"spatial_derivative_order": 1, "control_inputs": 1},
    ])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(SpecError):
            LibrarySpec(**kwargs)

    def test_empty_library_rejected(self):
        with pytest.raises(SpecError):
            library_terms(LibrarySpec(0, include_constant=False), 2)

    def test_spec_round_trip(self):
        spec = LibrarySpec(3, False, (1.0,), 0, False, 2)
        assert LibrarySpec.from_dict(spec.to_dict()) == spec


class TestBuildLibrary:
    def test_columns_match_labels(self):
        d = _data()
        lib = build_library(d, LibrarySpec(2))
        x, y, z = d.values.T
        assert np.array_equal(lib.theta[:, lib.term_labels.index("x z")], x * z)
        assert np.array_equal(lib.theta[:, lib.term_labels.index("y^2")], y * y)
        assert np.all(lib.theta[:, 0] == 1.0)

    def test_deterministic(self):
        d = _data(3)
        a = build_library(d, LibrarySpec(3)).theta
        b = build_library(d, LibrarySpec(3)).theta
        assert a.tobytes() == b.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(c=st.floats(0.1, 10.0), col=st.integers(0, 2), seed=st.integers(0, 1000))
    def test_monomial_scaling(self, c, col, seed):
        d = _data(seed)
        scaled = d.values.copy()
        scaled[:, col] *= c
        spec = LibrarySpec(3)
        a = build_library(d, spec)
        b = build_library(DataMatrix(scaled, d.dt), spec)
        for j, t in enumerate(a.terms):
            k = t.exponents[col]
            np.testing.assert_allclose(b.theta[:, j], a.theta[:, j] * c**k, rtol=1e-12, atol=1e-300)

    def test_control_columns(self):
        d = _data()
        u = np.arange(d.m, dtype=float)
        lib = build_library(d, LibrarySpec(2, control_inputs=1), u)
        assert np.array_equal(lib.theta[:, lib.term_labels.index("x u")], d.values[:, 0] * u)

    def test_control_errors(self):
        d = _data()
        with pytest.raises(InputError):
            build_library(d, LibrarySpec(2, control_inputs=1))
        with pytest.raises(InputError):
            build_library(d, LibrarySpec(2), np.ones(d.m))
        with pytest.raises(ShapeError):
            build_library(d, LibrarySpec(2, control_inputs=1), np.ones(d.m - 1))

    def test_pde_mode_needs_dx(self):
        with pytest.raises(InputError):
            build_library(DataMatrix(np.ones((5, 16)), 0.1), LibrarySpec(2, spatial_derivative_order=1))

    def test_pde_flatten_column_major(self):
        rng = np.random.default_rng(1)
        f = DataMatrix(rng.normal(size=(6, 32)), 0.1, dx=0.2)
        lib = build_library(f, LibrarySpec(1, False, spatial_derivative_order=1))
        assert np.array_equal(lib.theta[:, 0], f.values.ravel(order="F"))


class TestFastEvaluator:
    @pytest.mark.parametrize("degree,ctrl", [(2, 0), (3, 0), (2, 1), (4, 2)])
    def test_matches_reference_bitwise(self, degree, ctrl):
        rng = np.random.default_rng(degree + ctrl)
        terms = library_terms(LibrarySpec(degree, control_inputs=ctrl), 3)
        x = rng.normal(size=(11, 3)) * 5
        u = rng.normal(size=(11, ctrl)) if ctrl else None
        aug = np.concatenate([x, u], axis=1) if ctrl else x
        fast = polynomial_evaluator(terms)
        assert np.array_equal(fast(aug), evaluate_terms(terms, x, u))
        if ctrl:
            assert np.array_equal(fast(x, u), evaluate_terms(terms, x, u))

    def test_none_for_non_polynomial(self):
        assert polynomial_evaluator(library_terms(LibrarySpec(1, trig_frequencies=(1.0,)), 2)) is None


class TestSpatialDerivatives:
    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_exact_on_low_degree_polynomials(self, order):
        # second-order stencils are exact up to degree order + 1
        x = np.linspace(0, 1, 41)
        dx = x[1] - x[0]
        for p in range(order + 2):
            u = x**p
            exact = np.zeros_like(x) if p < order else np.prod(np.arange(p - order + 1, p + 1)) * x ** (p - order)
            np.testing.assert_allclose(spatial_derivative(u[None], dx, order)[0], exact, atol=1e-6 * 10**order)

    def test_second_order_convergence_periodic_sine(self):
        errs = []
        for n in (64, 128):
            x = np.linspace(0, 2 * np.pi, n, endpoint=False)
            d = spatial_derivative(np.sin(x)[None], x[1] - x[0], 1)[0]
            errs.append(np.max(np.abs(d - np.cos(x))[5:-5]))
        assert 3.5 < errs[0] / errs[1] < 4.5

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            spatial_derivative(np.ones((1, 4)), 0.1, 3)

    def test_fd_weights_classic_stencil(self):
        np.testing.assert_allclose(fd_weights(0.0, np.array([-1.0, 0.0, 1.0]), 2), [1, -2, 1])


class TestDataMatrix:
    @pytest.mark.parametrize("values,dt,exc", [
        (np.ones((1, 2)), 0.1, InsufficientDataError),
        (np.ones((3, 2)), 0.0, InputError),
        (np.array([[1.0, np.nan], [1.0, 2.0]]), 0.1, InputError),
        (np.ones((2, 2, 2)), 0.1, ShapeError),
    ])
    def test_rejects_bad_input(self, values, dt, exc):
        with pytest.raises(exc):
            DataMatrix(values, dt)

    def test_read_only_and_times(self):
        d = DataMatrix(np.ones((4, 2)), 0.5, t0=1.0)
        assert not d.values.flags.writeable
        assert np.array_equal(d.times, [1.0, 1.5, 2.0, 2.5])
