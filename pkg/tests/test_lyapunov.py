import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rankflow.errors import DimensionMismatch, EpsOutOfRange, NTooSmall, SingularR
from rankflow.lyapunov import (certificate_for, explicit_v, farkas_criterion,
                               verify_certificate)
from rankflow.model import ModelParams, reflection_matrix, spacings_drift


def test_farkas_scalar_case():
    assert farkas_criterion(np.array([[1.0]]), np.array([-1.0])) is False
    assert farkas_criterion(np.array([[1.0]]), np.array([1.0])) is True


def test_farkas_constructed_counterexample():
    r = reflection_matrix(5)
    w = np.array([0.3, 1.0, 2.0, 0.1])
    assert farkas_criterion(r, -r @ w) is False


def test_farkas_singular():
    with pytest.raises(SingularR):
        farkas_criterion(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 0.0]))


def test_farkas_atlas3_solution_lies_in_orthant():
    # -R^{-1} gamma for gamma = (-1, 0) solves [[1,-1/2],[-1/2,1]] x = (1, 0): x = (4/3, 2/3),
    # which is inside the orthant, so no linear certificate exists for this R
    r, g = reflection_matrix(3), spacings_drift(ModelParams.atlas(3))
    np.testing.assert_allclose(-np.linalg.solve(r, g), [4 / 3, 2 / 3], rtol=1e-14)
    assert farkas_criterion(r, g) is False


@pytest.mark.parametrize("n", [4, 6, 10, 20])
def test_atlas_solution_is_alpha(n):
    from rankflow.model import compute_alphas

    p = ModelParams.atlas(n)
    x = -np.linalg.solve(reflection_matrix(n), spacings_drift(p))
    np.testing.assert_allclose(x, compute_alphas(p)[0], rtol=1e-12)


def test_explicit_v_examples():
    np.testing.assert_allclose(explicit_v(4, 0.5), [0.5, 1.5, 0.5])
    with pytest.raises(EpsOutOfRange):
        explicit_v(4, 2.0)
    with pytest.raises(EpsOutOfRange):
        explicit_v(4, 0.0)
    with pytest.raises(NTooSmall):
        explicit_v(3, 0.1)
    v = explicit_v(6, 1.0)
    np.testing.assert_allclose(v, [1, 4, 5, 4, 1])
    assert np.all(v > 0) and np.all(np.diff(v, 2) < 0)


@given(st.integers(4, 30), st.floats(0.01, 0.99))
def test_explicit_v_symmetric_positive(n, frac):
    limit = (n / 2 - 1) ** 2 - (n / 2 - 2) ** 2
    v = explicit_v(n, frac * limit)
    np.testing.assert_allclose(v, v[::-1], atol=1e-12)
    assert np.all(v > 0)


def test_verify_examples():
    c = verify_certificate(np.ones(2), reflection_matrix(3), np.array([-1.0, 0.0]))
    np.testing.assert_allclose(c.reflection_inners, [0.5, 0.5])
    assert not c.valid
    c = verify_certificate(np.ones(2), reflection_matrix(3), np.zeros(2))
    assert c.drift_inner == 0 and not c.valid
    with pytest.raises(DimensionMismatch):
        verify_certificate(np.ones(3), reflection_matrix(3), np.zeros(2))


def test_explicit_v_atlas4_inner_products():
    # hand computation: R'v = (0.5 - 0.75, 1.5 - 0.5, 0.5 - 0.75), <gamma, v> = -0.5
    c = certificate_for(ModelParams.atlas(4), 0.5)
    np.testing.assert_allclose(c.reflection_inners, [-0.25, 1.0, -0.25])
    assert c.drift_inner == -0.5
    assert not c.valid
    assert c.to_dict()["valid"] is False


@given(st.integers(3, 25), st.lists(st.floats(0.01, 10), min_size=24, max_size=24))
def test_no_positive_v_meets_reflection_condition(n, raw):
    # columns of R sum so that sum_j <r_j, v> = (v_1 + v_{n-1}) / 2 > 0
    v = np.asarray(raw[: n - 1])
    inner = reflection_matrix(n).T @ v
    assert inner.sum() == pytest.approx((v[0] + v[-1]) / 2)
    assert not verify_certificate(v, reflection_matrix(n), -np.ones(n - 1)).valid


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.lists(st.floats(0.1, 3), min_size=2, max_size=2),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_valid_certificate_implies_farkas(r_flat, v, g):
    r = np.asarray(r_flat).reshape(2, 2)
    assume(abs(np.linalg.det(r)) > 1e-3)
    if verify_certificate(v, r, g).valid:
        assert farkas_criterion(r, g)


def test_valid_certificate_for_generic_r():
    r = np.array([[1.0, -2.0], [-2.0, 1.0]])
    g = np.array([-1.0, -1.0])
    c = verify_certificate([1.0, 1.0], r, g)
    assert c.valid and farkas_criterion(r, g)
