import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankflow.errors import (DegenerateDrift, DimensionTooSmall, NonPositiveSigma,
                             UnstableModel)
from rankflow.model import (ModelParams, alpha_tilde, beta_constant,
                            centered_poincare_constant, check_equal_variance_increments,
                            compute_alphas, derive, difference_matrix, lambda_n,
                            poincare_constant_nu, poincare_constant_skew, reflection_matrix,
                            skew_symmetry_residual, spacings_covariance, spacings_drift,
                            validate)


def sig2(*v):
    return np.sqrt(np.asarray(v, dtype=float))


def test_validate():
    validate(ModelParams(2, [1, 0], [1, 1]))
    with pytest.raises(NonPositiveSigma):
        validate(ModelParams(2, [1, 0], [0, 1]))
    with pytest.raises(DimensionTooSmall):
        validate(ModelParams(1, [0], [1]))


def test_params_are_immutable_and_roundtrip():
    p = ModelParams.atlas(4)
    with pytest.raises(ValueError):
        p.delta[0] = 3
    q = ModelParams.from_json(p.to_json())
    assert q == p and hash(q) == hash(p)


def test_alphas_examples():
    a, stable = compute_alphas(ModelParams.atlas(4))
    assert a.tolist() == [1.5, 1.0, 0.5] and stable
    a, stable = compute_alphas(ModelParams(2, [0, 1], [1, 1]))
    assert a.tolist() == [-1.0] and not stable
    a, stable = compute_alphas(ModelParams(3, [0.3] * 3, [1] * 3))
    assert a.tolist() == [0.0, 0.0] and not stable


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=12))
def test_alphas_match_exact_rationals(delta):
    n = len(delta)
    a, _ = compute_alphas(ModelParams(n, delta, np.ones(n)))
    exact = [Fraction(d) for d in delta]
    mean = sum(exact) / n
    for k in range(n - 1):
        assert a[k] == float(2 * sum(e - mean for e in exact[: k + 1]))


def test_alpha_tilde_unit_sigma_equals_alpha():
    p = ModelParams(5, [2, 1, 0, -1, 0.5], np.ones(5))
    a, _ = compute_alphas(p)
    assert np.array_equal(alpha_tilde(p, a), a)


def test_alpha_tilde_general_sigma():
    p = ModelParams(3, [1, 0, 0], sig2(1, 2, 3))
    a, _ = compute_alphas(p)
    np.testing.assert_allclose(alpha_tilde(p), [2 * a[0] / 3, 2 * a[1] / 5], rtol=1e-15)


def test_equal_variance_increments():
    assert check_equal_variance_increments(ModelParams(4, np.zeros(4), np.ones(4)))
    assert check_equal_variance_increments(ModelParams(4, np.zeros(4), sig2(1, 2, 3, 4)))
    assert not check_equal_variance_increments(ModelParams(4, np.zeros(4), sig2(1, 2, 4, 8)),
                                               tol=1e-12)


def test_lambda_n_examples():
    assert lambda_n(2) == pytest.approx(0.5, abs=1e-15)
    assert lambda_n(3) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 10, 25, 50])
def test_lambda_n_eigen_oracle(n):
    a = difference_matrix(n)
    lam_min = np.linalg.eigvalsh(a.T @ a)[0]
    assert abs(lambda_n(n) * lam_min - 1) < 1e-12


def test_difference_matrix_gradient_map():
    # d/dx of f(y(x)) with y = spacings equals A grad_y f for ordered x
    a = difference_matrix(4)
    assert a.shape == (4, 3)
    np.testing.assert_array_equal(a.sum(axis=0), 0)


def test_beta_examples():
    assert beta_constant(derive(ModelParams.atlas(2))) == pytest.approx(2.0, rel=1e-15)
    assert beta_constant(derive(ModelParams.atlas(4))) == pytest.approx(16 / (2 - math.sqrt(2)),
                                                                        rel=1e-14)
    with pytest.raises(UnstableModel):
        beta_constant(derive(ModelParams(3, [0, 0, 1], np.ones(3))))


def test_poincare_nu_examples():
    assert poincare_constant_nu(derive(ModelParams.atlas(2))) == 4
    assert poincare_constant_nu(derive(ModelParams.atlas(4))) == 16
    p = ModelParams(3, [1, 0, -1], np.ones(3))
    assert compute_alphas(p)[0].tolist() == [2.0, 2.0]
    assert poincare_constant_nu(derive(p)) == 1


def test_poincare_skew_reduces_to_beta():
    p = ModelParams.atlas(6)
    assert poincare_constant_skew(p) == pytest.approx(beta_constant(derive(p)), rel=1e-12)


def test_centered_poincare():
    assert centered_poincare_constant(ModelParams.atlas(2)) == 2
    assert centered_poincare_constant(ModelParams.atlas(4)) == pytest.approx(4 / 3, rel=1e-15)
    with pytest.raises(DegenerateDrift):
        centered_poincare_constant(ModelParams(3, [0.7] * 3, np.ones(3)))


def test_spacings_covariance_examples():
    np.testing.assert_array_equal(spacings_covariance(ModelParams.atlas(3)), [[2, -1], [-1, 2]])
    np.testing.assert_allclose(spacings_covariance(ModelParams(2, [1, 0], [1, 2])), [[5]])
    assert np.all(np.linalg.eigvalsh(spacings_covariance(ModelParams.atlas(4))) > 0)


def test_spacings_covariance_matches_simulation_definition():
    # Y_k = X_(k+1) - X_(k) has increments sigma_{k+1} dW - sigma_k dW'
    sigma = np.array([0.5, 1.2, 0.9, 2.0])
    a = difference_matrix(4)
    np.testing.assert_allclose(spacings_covariance(ModelParams(4, np.zeros(4), sigma)),
                               a.T @ np.diag(sigma**2) @ a, atol=1e-15)


@given(st.lists(st.floats(0.1, 5), min_size=2, max_size=10))
def test_xi_positive_definite(sigma):
    n = len(sigma)
    xi = spacings_covariance(ModelParams(n, np.zeros(n), sigma))
    np.testing.assert_array_equal(xi, xi.T)
    assert np.all(np.diag(np.linalg.cholesky(xi)) > 0)


def test_reflection_matrix_shape_and_invertible():
    r = reflection_matrix(5)
    np.testing.assert_array_equal(np.diag(r), 1)
    np.testing.assert_array_equal(np.diag(r, 1), -0.5)
    np.testing.assert_array_equal(np.diag(r, -1), -0.5)
    assert np.count_nonzero(r) == 4 + 3 + 3
    for n in range(2, 51):
        r = reflection_matrix(n)
        b = np.arange(1.0, n)
        assert np.max(np.abs(r @ np.linalg.solve(r, b) - b)) < 1e-10


def test_spacings_drift_is_gamma():
    np.testing.assert_array_equal(spacings_drift(ModelParams.atlas(4)), [-1, 0, 0])


def test_derived_unstable_omits_beta():
    d = derive(ModelParams(3, [0, 0, 1], np.ones(3))).to_dict()
    assert d["stable"] is False and "beta" not in d and "c_nu" not in d


@pytest.mark.parametrize("s2", [(1, 1, 1), (1, 2, 3), (1, 2, 3, 4, 5), (2, 2.5, 3, 3.5)])
@pytest.mark.parametrize("root", ["cholesky", "symmetric"])
def test_skew_symmetry_holds_for_equal_increments(s2, root):
    p = ModelParams(len(s2), np.zeros(len(s2)), sig2(*s2))
    dec = skew_symmetry_residual(p, root=root)
    assert dec.residual < 1e-10
    np.testing.assert_allclose(np.linalg.norm(dec.n_matrix, axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(dec.sigma_root, axis=1),
                               np.sqrt(np.diag(spacings_covariance(p))), atol=1e-12)


def test_skew_symmetry_fails_off_condition():
    p = ModelParams(3, np.zeros(3), sig2(1, 2, 5))
    chol = skew_symmetry_residual(p, "cholesky").residual
    sym = skew_symmetry_residual(p, "symmetric").residual
    assert chol > 1e-3
    # exact symbolic evaluation of the off-diagonal entry gives 1/sqrt(21)
    assert chol == pytest.approx(1 / math.sqrt(21), rel=1e-12)
    assert sym == pytest.approx(chol, rel=1e-9)


@settings(max_examples=40)
@given(st.integers(2, 9), st.floats(0.1, 3), st.floats(0.0, 2))
def test_skew_symmetry_property(n, base, inc):
    s2 = base + inc * np.arange(n)
    p = ModelParams(n, np.zeros(n), np.sqrt(s2))
    if check_equal_variance_increments(p):
        assert skew_symmetry_residual(p).residual < 1e-10
