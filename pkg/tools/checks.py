"""
Verification routines behind `check-jacobian` and `check-direction`.

Both compare an analytic quantity with an independent oracle: central finite
differences for Jacobian-vector products, and a refined grid search of the
one-dimensional subproblem for each component of the descent direction.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from tools.forward_models import ForwardModel, finite_difference_jacobian_apply
from tools.regularizer import RegularizationParams
from tools.st_solver import SolverConfig, descent_direction, g_gradient

logger = logging.getLogger(__name__)

JACOBIAN_THRESHOLD = 1e-4
DIRECTION_THRESHOLD = 1e-6


@dataclass
class CheckResult:
    passed: bool
    max_error: float
    threshold: float
    samples: int
    worst: dict = field(default_factory=dict)


def dense_jacobian(model: ForwardModel, x) -> np.ndarray:
    """F'(x) built column by column from jacobian_apply on basis vectors."""
    n, m = model.dims()
    J = np.empty((m, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        J[:, j] = model.jacobian_apply(x, e)
    return J


def check_jacobian(
    model: ForwardModel,
    rng: np.random.Generator,
    samples: int = 20,
    h: float = 1e-5,
    threshold: float = JACOBIAN_THRESHOLD,
) -> CheckResult:
    """Max relative error of F'(x)v against central differences over random x ∈ [−1, 1]^n, v."""
    n, _ = model.dims()
    worst_error, worst = 0.0, {}
    for i in range(samples):
        x = rng.uniform(-1.0, 1.0, n)
        v = rng.standard_normal(n)
        analytic = model.jacobian_apply(x, v)
        numeric = finite_difference_jacobian_apply(model, x, v, h)
        error = float(np.linalg.norm(analytic - numeric)) / max(float(np.linalg.norm(analytic)), 1e-300)
        if error > worst_error or not worst:
            worst_error = error
            worst = {"sample": i, "x": x.tolist(), "v": v.tolist(), "relative_error": error}
    passed = worst_error <= threshold
    logger.info(f"Jacobian check: max relative error {worst_error:.3e} over {samples} samples "
                f"({'pass' if passed else 'FAIL'})")
    return CheckResult(passed, worst_error, threshold, samples, worst)


def grid_inner_minimizer(grad, lam: float, alpha: float, points: int = 201, rounds: int = 6) -> np.ndarray:
    """
    Per-component minimizer of g·t + (λ/2)t² + α|t| by repeated grid refinement.

    The objective is strongly convex, so the true minimizer stays within one
    spacing of the grid argmin; each round zooms onto that neighbourhood.
    Values are taken relative to the current center to keep them resolvable
    once the grid spacing is far below the objective's magnitude.
    """
    grad = np.asarray(grad, dtype=np.float64)
    center = np.zeros_like(grad)
    radius = np.abs(grad) / lam + 1.0
    offsets = np.linspace(-1.0, 1.0, points)
    rows = np.arange(grad.size)
    for _ in range(rounds):
        c = center[:, None]
        step = radius[:, None] * offsets[None, :]
        values = grad[:, None] * step + 0.5 * lam * step * (2.0 * c + step) + alpha * (np.abs(c + step) - np.abs(c))
        center = center + step[rows, np.argmin(values, axis=1)]
        radius = radius * 4.0 / (points - 1)
    return center


def check_direction(
    model: ForwardModel,
    y_obs,
    rng: np.random.Generator,
    samples: int = 20,
    lam: float = 4.0,
    eta: float = 1.0,
    threshold: float = DIRECTION_THRESHOLD,
) -> CheckResult:
    """Closed-form descent direction against the grid oracle over samples × n components."""
    n, _ = model.dims()
    worst_error, worst = 0.0, {}
    for i in range(samples):
        alpha = float(rng.uniform(0.01, 1.0))
        cfg = SolverConfig(reg=RegularizationParams(alpha=alpha, eta=eta), lam=lam)
        x = rng.standard_normal(n) * rng.uniform(0.01, 0.5)
        z = descent_direction(model, x, y_obs, cfg)
        oracle = grid_inner_minimizer(g_gradient(model, x, y_obs, cfg), lam, alpha)
        errors = np.abs(z - oracle)
        j = int(np.argmax(errors))
        if errors[j] > worst_error or not worst:
            worst_error = float(errors[j])
            worst = {"sample": i, "component": j, "alpha": alpha, "z": float(z[j]), "oracle": float(oracle[j])}
    passed = worst_error <= threshold
    logger.info(f"Direction check: max abs error {worst_error:.3e} over {samples * n} components "
                f"({'pass' if passed else 'FAIL'})")
    return CheckResult(passed, worst_error, threshold, samples * n, worst)
