import numpy as np
import pytest
from pydantic import ValidationError

from tools.checks import grid_inner_minimizer
from tools.errors import DomainError
from tools.regularizer import (
    RegularizationParams,
    as_signal,
    is_zero,
    objective,
    one_hot,
    regularizer,
    soft_threshold_scalar,
    soft_threshold_vector,
    support_size,
)

CASES = 10_000


def params(alpha, beta, q=2.0):
    return RegularizationParams(alpha=alpha, eta=0.0 if alpha == 0 else beta / alpha, q=q)


def test_regularizer_examples():
    assert regularizer(one_hot(5, 4), params(1.0, 1.0)) == 0.0
    assert regularizer(np.zeros(3), params(2.0, 1.0)) == 0.0
    assert regularizer([3.0, 4.0], params(1.0, 0.5)) == pytest.approx(4.5, abs=1e-15)


def test_objective_examples():
    assert objective(np.zeros(2), 2.0, params(0.7, 0.3)) == pytest.approx(2.0)
    assert objective([1.0, 0.0], 0.0, params(1.0, 1.0)) == 0.0
    assert objective([3.0, 4.0], 1.0, params(1.0, 0.5, q=1.0)) == pytest.approx(5.5)


def test_objective_rejects_negative_residual():
    with pytest.raises(DomainError):
        objective([1.0], -0.1, params(1.0, 0.0))
    with pytest.raises(DomainError):
        objective([1.0], float("nan"), params(1.0, 0.0))


def test_soft_threshold_scalar_branches():
    assert soft_threshold_scalar(1.2, 0.5) == pytest.approx(0.7)
    assert soft_threshold_scalar(0.3, 0.5) == 0.0
    assert soft_threshold_scalar(-1.2, 0.5) == pytest.approx(-0.7)
    with pytest.raises(DomainError):
        soft_threshold_scalar(1.0, -0.1)


def test_soft_threshold_vector_examples():
    np.testing.assert_allclose(soft_threshold_vector([1.2, 0.3, -1.2], 0.5), [0.7, 0.0, -0.7], atol=1e-15)
    x = np.array([0.25, -3.0, 7.5])
    np.testing.assert_array_equal(soft_threshold_vector(x, 0.0), x)
    np.testing.assert_array_equal(soft_threshold_vector(np.zeros(4), 2.0), np.zeros(4))


def test_soft_threshold_vector_matches_scalar():
    rng = np.random.default_rng(11)
    t = rng.normal(scale=2.0, size=500)
    tau = 0.4
    expected = [soft_threshold_scalar(float(v), tau) for v in t]
    np.testing.assert_allclose(soft_threshold_vector(t, tau), expected, rtol=0, atol=1e-15)


def test_soft_threshold_is_nonexpansive():
    rng = np.random.default_rng(1)
    a = rng.normal(scale=3.0, size=CASES)
    b = rng.normal(scale=3.0, size=CASES)
    tau = rng.uniform(0.0, 2.0)
    gap = np.abs(soft_threshold_vector(a, tau) - soft_threshold_vector(b, tau))
    assert np.all(gap <= np.abs(a - b) + 1e-12 * (1.0 + np.abs(a) + np.abs(b)))


def test_soft_threshold_is_odd():
    rng = np.random.default_rng(2)
    t = rng.normal(scale=3.0, size=CASES)
    for tau in (0.0, 0.5, 2.5):
        np.testing.assert_array_equal(soft_threshold_vector(-t, tau), -soft_threshold_vector(t, tau))


def test_soft_threshold_shrinks():
    rng = np.random.default_rng(3)
    t = rng.normal(scale=3.0, size=CASES)
    tau = 0.75
    np.testing.assert_array_equal(np.abs(soft_threshold_vector(t, tau)), np.maximum(np.abs(t) - tau, 0.0))


def test_regularizer_bounded_below_by_l2_gap():
    rng = np.random.default_rng(4)
    for _ in range(200):
        x = rng.normal(size=rng.integers(1, 30))
        alpha = rng.uniform(0.0, 3.0)
        beta = alpha * rng.uniform(0.0, 1.0)
        value = regularizer(x, params(alpha, beta))
        assert value >= (alpha - beta) * np.linalg.norm(x) - 1e-12 * (1.0 + alpha * np.abs(x).sum())
        assert value >= 0.0


def test_non_coercive_when_alpha_equals_beta():
    tail = np.array([0.5, -1.5, 2.0])
    p = params(1.0, 1.0)
    for t in (1e3, 1e6):
        x = np.concatenate([[t], tail, np.zeros(4)])
        assert np.linalg.norm(x) >= t
        assert regularizer(x, p) <= np.abs(tail).sum() + 1e-6


def test_one_hot_sequence_has_zero_value():
    # e_n converges weakly to 0 and R(e_n) = R(0), yet ‖e_n‖ = 1
    p = params(2.0, 2.0)
    for n in (1, 10, 1000):
        e = one_hot(n, n - 1)
        assert regularizer(e, p) == 0.0
        assert np.linalg.norm(e) == 1.0


def test_soft_threshold_is_the_l1_prox():
    rng = np.random.default_rng(5)
    lam = 3.0
    for alpha in (0.1, 1.0, 4.0):
        u = rng.normal(scale=2.0, size=200)
        # (λ/2)(z − u)² + α|z| equals −λu·z + (λ/2)z² + α|z| up to a constant
        oracle = grid_inner_minimizer(-lam * u, lam, alpha)
        np.testing.assert_allclose(soft_threshold_vector(u, alpha / lam), oracle, rtol=0, atol=1e-6)


def test_as_signal_freezes_and_validates():
    x = as_signal([1, 2, 3])
    assert x.dtype == np.float64
    assert not x.flags.writeable
    with pytest.raises(DomainError):
        as_signal([1.0, float("inf")])
    with pytest.raises(DomainError):
        as_signal([])
    with pytest.raises(DomainError):
        as_signal([[1.0, 2.0]])


def test_zero_and_support_helpers():
    assert is_zero(np.zeros(3))
    assert not is_zero(np.array([0.0, 1e-300]))
    assert support_size(np.array([0.0, -2.0, 0.0, 3.0])) == 2


def test_params_validate_ranges():
    assert params(2.0, 1.0).beta == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        RegularizationParams(alpha=-1.0, eta=0.5)
    with pytest.raises(ValidationError):
        RegularizationParams(alpha=1.0, eta=1.5)
    with pytest.raises(ValidationError):
        RegularizationParams(alpha=1.0, eta=0.5, q=0.5)
