import dataclasses

import numpy as np
import pytest

from tools.checks import dense_jacobian
from tools.errors import DivergedError, DomainError
from tools.forward_models import (
    NonlinearCsModel,
    OperatorForm,
    finite_difference_jacobian_apply,
    rescale_matrix,
    spectral_norm,
)

GRID = [(c, d, form) for c in (1, 2, 3) for d in (1, 2, 3) for form in OperatorForm]


def random_instance(seed, m=5, n=8, **kwargs):
    rng = np.random.default_rng(seed)
    model = NonlinearCsModel(matrix=rng.standard_normal((m, n)), **kwargs)
    return model, rng


def test_additive_identity_example():
    model = NonlinearCsModel(matrix=np.eye(2), c=1, d=1, form="additive")
    np.testing.assert_array_equal(model.apply([1.0, 2.0]), [4.0, 8.0])
    np.testing.assert_array_equal(model.jacobian_apply([1.0, 2.0], [1.0, 0.0]), [4.0, 0.0])
    np.testing.assert_array_equal(model.jacobian_adjoint_apply([1.0, 2.0], [1.0, 0.0]), [4.0, 0.0])


def test_intensity_example():
    model = NonlinearCsModel(matrix=[[1.0, 1.0]], c=2, d=1, form="pure_power")
    np.testing.assert_array_equal(model.apply([1.0, 2.0]), [9.0])
    np.testing.assert_array_equal(model.jacobian_apply([1.0, 2.0], [1.0, 1.0]), [12.0])


def test_apply_matches_straight_line_evaluation():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((1, 2))
    x = np.array([0.3, -0.4])
    model = NonlinearCsModel(matrix=A, c=2, d=3)

    u = A[0, 0] * (x[0] + x[0] ** 3) + A[0, 1] * (x[1] + x[1] ** 3)
    np.testing.assert_allclose(model.apply(x), [u + u ** 2], rtol=1e-14)


@pytest.mark.parametrize("c,d,form", GRID)
def test_jacobian_matches_central_differences(c, d, form):
    model, rng = random_instance(100 + 10 * c + d, c=c, d=d, form=form)
    for _ in range(5):
        x = rng.uniform(-1.0, 1.0, 8)
        v = rng.standard_normal(8)
        analytic = model.jacobian_apply(x, v)
        numeric = finite_difference_jacobian_apply(model, x, v, h=1e-5)
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * np.linalg.norm(analytic)


@pytest.mark.parametrize("c,d,form", GRID)
def test_adjoint_identity(c, d, form):
    model, rng = random_instance(200 + 10 * c + d, c=c, d=d, form=form)
    for _ in range(5):
        x = rng.uniform(-1.0, 1.0, 8)
        v = rng.standard_normal(8)
        w = rng.standard_normal(5)
        left = float(np.dot(model.jacobian_apply(x, v), w))
        right = float(np.dot(v, model.jacobian_adjoint_apply(x, w)))
        scale = np.linalg.norm(model.jacobian_apply(x, v)) * np.linalg.norm(w)
        assert abs(left - right) <= 1e-10 * max(scale, 1.0)


def test_adjoint_matches_dense_transpose():
    model, rng = random_instance(3, c=3, d=2)
    x = rng.uniform(-1.0, 1.0, 8)
    w = rng.standard_normal(5)
    J = dense_jacobian(model, x)
    np.testing.assert_allclose(model.jacobian_adjoint_apply(x, w), J.T @ w, rtol=1e-10, atol=1e-12)


def test_linear_pure_power_is_the_matrix():
    model, rng = random_instance(4, c=1, d=1, form=OperatorForm.PURE_POWER)
    x = rng.standard_normal(8)
    v = rng.standard_normal(8)
    np.testing.assert_allclose(model.apply(x), model.matrix @ x, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(finite_difference_jacobian_apply(model, x, v), model.matrix @ v, rtol=1e-8, atol=1e-9)


def test_pure_power_scale_covariance():
    model, rng = random_instance(5, c=2, d=1, form=OperatorForm.PURE_POWER)
    x = rng.standard_normal(8)
    np.testing.assert_allclose(model.apply(3.0 * x), 9.0 * model.apply(x), rtol=1e-12, atol=1e-12)


def test_finite_difference_error_shrinks_with_h():
    model, rng = random_instance(6, c=2, d=3)
    x = rng.uniform(-1.0, 1.0, 8)
    v = rng.standard_normal(8)
    analytic = model.jacobian_apply(x, v)
    coarse = np.linalg.norm(finite_difference_jacobian_apply(model, x, v, h=1e-3) - analytic)
    fine = np.linalg.norm(finite_difference_jacobian_apply(model, x, v, h=1e-5) - analytic)
    assert fine < coarse
    assert fine <= 1e-5 * np.linalg.norm(analytic)


def test_finite_difference_rejects_bad_step():
    model, _ = random_instance(7)
    with pytest.raises(DomainError):
        finite_difference_jacobian_apply(model, np.zeros(8), np.ones(8), h=0.0)


def test_rescale_matrix():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(rescale_matrix(A, 1.0), A)
    np.testing.assert_array_equal(rescale_matrix(A, 0.5), [[0.5, 1.0], [1.5, 2.0]])
    with pytest.raises(DomainError):
        rescale_matrix(A, 0.0)


def test_rescale_brings_gaussian_norm_near_one():
    A = np.random.default_rng(8).standard_normal((80, 200))
    assert 18.0 <= spectral_norm(A) <= 28.0
    assert 0.9 <= spectral_norm(rescale_matrix(A, 0.05)) <= 1.4


def test_dimension_mismatch_is_a_domain_error():
    model, _ = random_instance(9)
    with pytest.raises(DomainError):
        model.apply(np.ones(7))
    with pytest.raises(DomainError):
        model.jacobian_adjoint_apply(np.ones(8), np.ones(4))


def test_overflow_is_reported_as_divergence():
    model = NonlinearCsModel(matrix=[[1.0]], c=2, d=2, form="pure_power")
    with pytest.raises(DivergedError):
        model.apply([1e200])


def test_invalid_degrees_and_matrices():
    with pytest.raises(DomainError):
        NonlinearCsModel(matrix=np.eye(2), c=0)
    with pytest.raises(DomainError):
        NonlinearCsModel(matrix=np.eye(2), d=1.5)
    with pytest.raises(DomainError):
        NonlinearCsModel(matrix=[1.0, 2.0])
    with pytest.raises(DomainError):
        NonlinearCsModel(matrix=[[np.nan]])


def test_model_is_immutable():
    model, _ = random_instance(10)
    assert not model.matrix.flags.writeable
    with pytest.raises(dataclasses.FrozenInstanceError):
        model.c = 4
    assert model.dims() == (8, 5)
