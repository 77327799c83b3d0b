"""Tests for the double-well spectral backend.

The frozen reference numbers (eigenvalues, the delta-step image of
(1, 0.5, 2)) were cross-checked against an independent dense
finite-difference discretization of the generator on a finer grid.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from efree.efcore import SolverConfig, implicit_flow
from efree.errors import ConditioningError
from efree.fpspectral import (DoubleWellParams, approx_flow_linear,
                              build_spectral_model, default_basis,
                              eigen_coefficients, evolve_density,
                              exact_flow_linear, fp_micro_system,
                              gauss_exact_flow, gauss_residual_decomposition,
                              generator_apply, lift_gauss, lift_linear,
                              linear_error_components, linear_maps,
                              potential_and_drift,
                              projected_phase_portrait_1d, restrict_moments,
                              t_gauss, weighted_inner)

LAMBDA_3 = -5.7119
LAMBDA_4 = -10.3057


@pytest.fixture(scope="module")
def model():
    return build_spectral_model(DoubleWellParams())


def test_params_validation():
    with pytest.raises(ValueError):
        DoubleWellParams(sigma=0.0)
    with pytest.raises(ValueError):
        build_spectral_model(DoubleWellParams(), n=100)


def test_potential_and_drift_values():
    p = DoubleWellParams()
    v, f = potential_and_drift(p, np.array([0.0, 1.0]))
    assert v[0] == 0.0
    assert np.isclose(v[1], 0.25 - 3.0 + 0.3)
    assert np.isclose(f[1], -(1.0 - 6.0 + 0.3))


def test_spectrum_reference_values(model):
    lam = model.eigenvalues
    assert abs(lam[0]) < 1e-6
    assert -1e-6 < lam[1] < 0.0
    assert abs(lam[2] - LAMBDA_3) < 0.01 * abs(LAMBDA_3)
    assert abs(lam[3] - LAMBDA_4) < 0.01 * abs(LAMBDA_4)
    # strictly descending spectrum
    assert np.all(np.diff(lam) < 0)


def test_stationary_is_discrete_null_vector(model):
    res = generator_apply(model, model.stationary)
    assert np.max(np.abs(res)) < 1e-10


def test_eigenpairs_satisfy_generator(model):
    for j in (1, 2, 3):
        phi = model.eigenfunctions[j]
        res = generator_apply(model, phi) - model.eigenvalues[j] * phi
        assert np.max(np.abs(res)) < 1e-8


def test_eigenfunctions_orthonormal(model):
    gram = np.array([[weighted_inner(model, a, b)
                      for b in model.eigenfunctions[:4]]
                     for a in model.eigenfunctions[:4]])
    assert np.allclose(gram, np.eye(4), atol=1e-9)


def test_restrict_moments_of_gaussian(model):
    x = np.array([1.0, 0.5, 2.0])
    mom = restrict_moments(model, lift_gauss(model, x))
    assert np.allclose(mom, [1.0, 0.5, 2.0 + 0.25], atol=1e-6)


def test_lift_gauss_rejects_nonpositive_variance(model):
    with pytest.raises(ValueError):
        lift_gauss(model, np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        t_gauss(model, np.array([1.0, 0.0, -1.0]))


def test_evolve_density_conserves_mass(model):
    rho = lift_gauss(model, np.array([1.0, -0.3, 0.5]))
    for t in (0.1, 1.0, 5.0):
        out = evolve_density(model, t, rho)
        assert abs(restrict_moments(model, out)[0] - 1.0) < 1e-8


def test_evolved_density_reaches_metastable_plateau(model):
    # by t = 5 only the two nearly-frozen modes survive, so the moments
    # sit on a plateau that barely moves between t = 5 and t = 50
    rho = lift_gauss(model, np.array([1.0, 0.5, 2.0]))
    m5 = restrict_moments(model, evolve_density(model, 5.0, rho))
    m50 = restrict_moments(model, evolve_density(model, 50.0, rho))
    assert np.allclose(m5, m50, atol=1e-4)


def test_gauss_exact_flow_reference_value(model):
    y = gauss_exact_flow(model, 0.1, np.array([1.0, 0.5, 2.0]))
    target = np.array([1.0, 0.8459, 6.4556])
    assert np.linalg.norm(y - target) / np.linalg.norm(target) < 1e-2


@settings(max_examples=15, deadline=None)
@given(mass=st.floats(0.5, 2.0), mean=st.floats(-2.0, 2.0),
       var=st.floats(0.05, 2.0))
def test_gauss_flow_delta_zero_roundtrip(model, mass, mean, var):
    # delta = 0 exercises the full transform-invert roundtrip
    x = np.array([mass, mean, var])
    y = gauss_exact_flow(model, 0.0, x)
    assert np.allclose(y, x, rtol=1e-6, atol=1e-8)


def test_linear_flow_matrix_delta_zero_is_identity(model):
    basis = default_basis(model)
    assert np.allclose(approx_flow_linear(model, basis, 1.0, 0.0),
                       np.eye(3), atol=1e-12)
    assert np.allclose(exact_flow_linear(model, basis, 0.0),
                       np.eye(3), atol=1e-10)


def test_linear_approx_converges_to_exact(model):
    basis = default_basis(model)
    exact = exact_flow_linear(model, basis, 0.1)
    errs = [np.linalg.norm(approx_flow_linear(model, basis, t, 0.1) - exact)
            for t in (0.5, 1.5, 2.5)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_matrix_path_equals_newton_path(model):
    # the same approximate flow through the matrix expression and through
    # the generic implicit solve over the linear-lifting micro system
    basis = default_basis(model)
    sys = fp_micro_system(model, "linear", basis)
    x = np.array([1.0, 0.3, 1.2])
    for t_skip in (0.5, 1.0):
        mat = approx_flow_linear(model, basis, t_skip, 0.1)
        res = implicit_flow(sys, t_skip, 0.1, x,
                            SolverConfig(tolerance=1e-12, fd_step=1e-7))
        assert res.converged
        assert np.allclose(mat @ x, res.y, atol=1e-7)


def test_linear_flow_conditioning_error_deep_in_floor(model):
    basis = default_basis(model)
    with pytest.raises(ConditioningError):
        approx_flow_linear(model, basis, 30.0, 0.1)


def test_linear_error_components_decay(model):
    basis = default_basis(model)
    n1, r1, s1 = linear_error_components(model, basis, 0.5)
    n2, r2, s2 = linear_error_components(model, basis, 1.5)
    assert r2 < r1
    assert s2 < s1
    assert n2 > n1
    # one decade of healing shrinks the residual by roughly e^(lambda_4)
    assert np.isclose(np.log(r2 / r1), LAMBDA_4, rtol=0.2)


def test_lift_linear_combines_basis(model):
    basis = default_basis(model)
    x = np.array([0.2, 0.3, 0.5])
    rho = lift_linear(model, basis, x)
    assert np.allclose(rho, basis.densities.T @ x)


def test_newton_and_fixed_point_agree(model):
    sys = fp_micro_system(model, "gauss")
    x = np.array([1.0, 0.5, 2.0])
    for t_skip in (0.5, 1.0):
        newton = implicit_flow(sys, t_skip, 0.1, x,
                               SolverConfig(tolerance=1e-10, fd_step=1e-7))
        fixed = implicit_flow(sys, t_skip, 0.1, x,
                              SolverConfig(tolerance=1e-12,
                                           mode="fixed_point"))
        assert newton.converged and fixed.converged
        assert np.allclose(newton.y, fixed.y, atol=1e-8)


def test_micro_system_delta_zero_identity(model):
    basis = default_basis(model)
    for sys in (fp_micro_system(model, "gauss"),
                fp_micro_system(model, "linear", basis)):
        x = np.array([1.0, 0.5, 2.0])
        res = implicit_flow(sys, 1.0, 0.0, x,
                            SolverConfig(tolerance=1e-11, fd_step=1e-7))
        assert res.converged
        assert np.allclose(res.y, x, atol=1e-6)


def test_residual_decomposition_heals(model):
    x = np.array([1.0, 0.5, 2.0])
    y = gauss_exact_flow(model, 0.1, x)
    res1 = gauss_residual_decomposition(model, 1.0, 0.1, x, y)
    res2 = gauss_residual_decomposition(model, 2.0, 0.1, x, y)
    # the healed residual parts shrink as t_skip grows
    assert np.linalg.norm(res2[2]) < np.linalg.norm(res1[2])
    assert np.linalg.norm(res2[3]) < np.linalg.norm(res1[3])


def test_projected_portrait_three_sign_changes(model):
    points = projected_phase_portrait_1d(model, 0.04,
                                         np.arange(-3.0, 3.5, 1.0), 1e-3)
    drifts = np.array([d for _, d in points])
    assert np.all(np.isfinite(drifts))
    signs = np.sign(drifts)
    assert int(np.sum(signs[1:] != signs[:-1])) == 3


def test_eigen_coefficients_biorthogonal_and_idempotent(model):
    # adjoint modes are biorthogonal to the eigenfunctions, so analyzing
    # an eigenfunction returns a unit coefficient vector and analyzing a
    # reconstruction returns the same coefficients (projection property)
    for j in range(4):
        coef = eigen_coefficients(model, model.eigenfunctions[j])
        unit = np.zeros(model.n_modes)
        unit[j] = 1.0
        assert np.allclose(coef, unit, atol=1e-8)
    rho = lift_gauss(model, np.array([1.0, -0.2, 0.8]))
    recon = eigen_coefficients(model, rho) @ model.eigenfunctions
    assert np.allclose(eigen_coefficients(model, recon),
                       eigen_coefficients(model, rho), atol=1e-9)
