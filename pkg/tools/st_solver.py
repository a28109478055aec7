"""
Iterative soft thresholding for

    min_x  ½‖F(x) − y‖² + α‖x‖₁ − β‖x‖₂

run as a generalized conditional gradient method on the splitting J = G + Φ with

    G(x) = ½‖F(x) − y‖² − λ/2‖x‖² − β‖x‖₂,    Φ(x) = λ/2‖x‖² + α‖x‖₁.

G is not differentiable at 0, so a zero iterate takes one classical ISTA step
instead of the conditional gradient update.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tools.errors import DivergedError, DomainError, PreconditionError
from tools.forward_models import ForwardModel
from tools.regularizer import (
    RegularizationParams,
    as_signal,
    is_zero,
    objective,
    soft_threshold_vector,
    support_size,
)

logger = logging.getLogger(__name__)

GAP_ROUNDOFF = 1e-10
DEFAULT_GRAD_TOL_FACTOR = 1e-8


class StepRule(BaseModel):
    """Either a fixed relaxation s^k = size or a grid search of J over s ∈ [0, 1].

    A bare number is accepted as shorthand for a fixed step.
    """

    rule: Literal["fixed", "exact_line_search"] = "fixed"
    size: float = Field(default=1.0, gt=0.0)
    grid_points: int = Field(default=64, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    @model_validator(mode="before")
    @classmethod
    def _from_number(cls, value):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return {"rule": "fixed", "size": value}
        return value


class SolverConfig(BaseModel):
    reg: RegularizationParams
    lam: float = Field(alias="lambda", gt=0.0)
    step: StepRule = StepRule()
    max_iters: int = Field(default=500, ge=1)
    grad_tol: float | None = Field(default=None, ge=0.0)
    divergence_guard: float = Field(default=1e12, gt=0.0)
    log_every: int = Field(default=25, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True, allow_inf_nan=False)

    @field_validator("reg")
    @classmethod
    def _quadratic_misfit(cls, reg: RegularizationParams) -> RegularizationParams:
        if reg.q != 2.0:
            raise ValueError("the thresholding iteration is only defined for q = 2")
        return reg

    @property
    def threshold(self) -> float:
        return self.reg.alpha / self.lam

    def with_alpha(self, alpha: float) -> "SolverConfig":
        return self.model_copy(update={"reg": self.reg.model_copy(update={"alpha": alpha})})


class SolveStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class IterationRecord:
    k: int
    objective: float
    residual: float
    gap: float | None   # None at a zero iterate, where Ψ is undefined
    support: int
    step: float         # step taken from x^k; 0.0 on the final record


@dataclass
class SolverTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: SolveStatus = SolveStatus.MAX_ITERS
    final: np.ndarray | None = None
    message: str = ""

    @property
    def iterations(self) -> int:
        return self.records[-1].k if self.records else 0

    @property
    def final_residual(self) -> float | None:
        return self.records[-1].residual if self.records else None

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def is_monotone(self, tol: float = 1e-10) -> bool:
        """J(x^{k+1}) ≤ J(x^k) + tol for every consecutive recorded pair."""
        values = self.objectives()
        return bool(np.all(np.diff(values) <= tol))


def _misfit(model: ForwardModel, x: np.ndarray, y_obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual F(x) − y and the data gradient F'(x)*(F(x) − y)."""
    residual = model.apply(x) - y_obs
    return residual, model.jacobian_adjoint_apply(x, residual)


def _nonzero(x) -> np.ndarray:
    x = as_signal(x)
    if is_zero(x):
        raise PreconditionError("G is not differentiable at x = 0; take the zero-iterate step instead")
    return x


def _phi(v: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Componentwise terms of Φ(v) = λ/2‖v‖² + α‖v‖₁."""
    return 0.5 * cfg.lam * v * v + cfg.reg.alpha * np.abs(v)


def _finite_or_diverged(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise DivergedError(f"{what} has non-finite entries")
    return values


def _gradient(model: ForwardModel, x: np.ndarray, y_obs: np.ndarray, cfg: SolverConfig):
    """Returns (G'(x), F'(x)*(F(x) − y), ‖x‖₂) for a nonzero x."""
    _, data_grad = _misfit(model, x, y_obs)
    norm = float(np.linalg.norm(x))
    with np.errstate(over="ignore", invalid="ignore"):
        grad = data_grad - cfg.lam * x - (cfg.reg.beta / norm) * x
    return _finite_or_diverged(grad, "G'(x)"), data_grad, norm


def _argument(x: np.ndarray, data_grad: np.ndarray, norm: float, cfg: SolverConfig) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        u = (cfg.reg.beta / (cfg.lam * norm) + 1.0) * x - data_grad / cfg.lam
    return _finite_or_diverged(u, "thresholding argument")


def _direction(model: ForwardModel, x: np.ndarray, y_obs: np.ndarray, cfg: SolverConfig):
    """Returns (z, G'(x)) for a nonzero x."""
    grad, data_grad, norm = _gradient(model, x, y_obs, cfg)
    return soft_threshold_vector(_argument(x, data_grad, norm, cfg), cfg.threshold), grad


def _gap(x: np.ndarray, z: np.ndarray, grad: np.ndarray, cfg: SolverConfig) -> float:
    """
    Ψ from its separable terms. Round-off may push it below zero; the allowed
    negative slack is GAP_ROUNDOFF scaled by (1 + the magnitude of the terms).
    """
    with np.errstate(over="ignore", invalid="ignore"):
        terms = grad * (x - z) + _phi(x, cfg) - _phi(z, cfg)
        value = float(np.sum(terms))
        scale = float(np.sum(np.abs(grad * x)) + np.sum(np.abs(grad * z)) + np.sum(_phi(x, cfg)) + np.sum(_phi(z, cfg)))
    if not (math.isfinite(value) and math.isfinite(scale)):
        raise DivergedError("stationarity gap is non-finite")
    if value < -GAP_ROUNDOFF * (1.0 + scale):
        raise DomainError(f"stationarity gap is negative ({value}); z is not the inner minimizer")
    return max(value, 0.0)


def evaluate_objective(model: ForwardModel, x, y_obs, cfg: SolverConfig) -> tuple[float, float]:
    """(J(x), ‖F(x) − y‖). A misfit or penalty too large to represent is a divergence."""
    x = as_signal(x)
    with np.errstate(over="ignore", invalid="ignore"):
        residual = float(np.linalg.norm(model.apply(x) - y_obs))
        l1 = float(np.sum(np.abs(x)))
        l2 = float(np.linalg.norm(x))
    if not (math.isfinite(residual) and math.isfinite(l1) and math.isfinite(l2)):
        raise DivergedError(f"objective is not representable (residual {residual:.3e}, l1 {l1:.3e})")
    value = objective(x, residual, cfg.reg)
    if not math.isfinite(value):
        raise DivergedError(f"objective is non-finite ({value})")
    return value, residual


def g_gradient(model: ForwardModel, x, y_obs, cfg: SolverConfig) -> np.ndarray:
    """G'(x) = F'(x)*(F(x) − y) − λx − βx/‖x‖₂, defined for x ≠ 0."""
    x = _nonzero(x)
    grad, _, _ = _gradient(model, x, as_signal(y_obs, "y_obs"), cfg)
    return as_signal(grad, "G'(x)")


def thresholding_argument(model: ForwardModel, x, y_obs, cfg: SolverConfig) -> np.ndarray:
    """u = (β/(λ‖x‖₂) + 1)·x − F'(x)*(F(x) − y)/λ, the vector the direction thresholds."""
    x = _nonzero(x)
    _, data_grad = _misfit(model, x, as_signal(y_obs, "y_obs"))
    return as_signal(_argument(x, data_grad, float(np.linalg.norm(x)), cfg), "u")


def descent_direction(model: ForwardModel, x, y_obs, cfg: SolverConfig) -> np.ndarray:
    """z = S_{α/λ}(u): the minimizer of ⟨G'(x), z⟩ + Φ(z)."""
    x = _nonzero(x)
    z, _ = _direction(model, x, as_signal(y_obs, "y_obs"), cfg)
    return z


def stationarity_gap(model: ForwardModel, x, y_obs, cfg: SolverConfig) -> float:
    """Ψ(x) = ⟨G'(x), x − z⟩ + Φ(x) − Φ(z); zero exactly at stationary points."""
    x = _nonzero(x)
    z, grad = _direction(model, x, as_signal(y_obs, "y_obs"), cfg)
    return _gap(x, z, grad, cfg)


def zero_iterate_step(model: ForwardModel, y_obs, cfg: SolverConfig) -> np.ndarray:
    """One classical ISTA step from 0: S_{α/λ}(−F'(0)*(F(0) − y)/λ)."""
    n, _ = model.dims()
    zero = np.zeros(n)
    _, data_grad = _misfit(model, zero, as_signal(y_obs, "y_obs"))
    with np.errstate(over="ignore", invalid="ignore"):
        u = -data_grad / cfg.lam
    return soft_threshold_vector(_finite_or_diverged(u, "thresholding argument"), cfg.threshold)


def line_search(model: ForwardModel, x, z, y_obs, cfg: SolverConfig) -> float:
    if cfg.step.rule == "fixed":
        return cfg.step.size
    x = as_signal(x)
    z = as_signal(z, "z")
    if x.size != z.size:
        raise DomainError(f"x and z differ in length ({x.size} vs {z.size})")
    grid = np.linspace(0.0, 1.0, cfg.step.grid_points + 1)
    values = np.full(grid.size, np.inf)
    for i, s in enumerate(grid):
        try:
            values[i], _ = evaluate_objective(model, x + s * (z - x), y_obs, cfg)
        except DivergedError:
            continue
    if not np.any(np.isfinite(values)):
        raise DivergedError("objective is non-finite on the whole line-search segment")
    # ties go to the larger step
    best = np.flatnonzero(values == values.min())[-1]
    return float(grid[best])


def _check_guard(x: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DivergedError("iterate has non-finite entries")
    norm = float(np.linalg.norm(x))
    if norm > cfg.divergence_guard:
        raise DivergedError(f"iterate norm {norm:.3e} exceeded guard {cfg.divergence_guard:.1e}")
    return as_signal(x)


def solve(
    model: ForwardModel,
    y_obs,
    x0,
    cfg: SolverConfig,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolverTrace]:
    """
    Runs the two-branch iteration from x0 until Ψ(x^k) ≤ grad_tol, max_iters
    updates have been taken, or an evaluation diverges.

    Every visited iterate gets one IterationRecord, the final one included.
    `callback(k, x^k)` is invoked after each record is appended.
    """
    n, m = model.dims()
    y_obs = as_signal(y_obs, "y_obs")
    x = as_signal(x0, "x0")
    if x.size != n or y_obs.size != m:
        raise DomainError(f"dimension mismatch: model is {n} -> {m}, got x0 {x.size}, y {y_obs.size}")

    trace = SolverTrace(final=x)
    tol = cfg.grad_tol

    def record(k, value, residual, gap, step):
        trace.records.append(IterationRecord(k, value, residual, gap, support_size(x), step))
        if callback is not None:
            callback(k, x)
        if k % cfg.log_every == 0:
            logger.debug(f"k={k} J={value:.6e} residual={residual:.3e} gap={gap} support={support_size(x)}")

    try:
        for k in range(cfg.max_iters + 1):
            value, residual = evaluate_objective(model, x, y_obs, cfg)
            if value > cfg.divergence_guard:
                raise DivergedError(f"objective {value:.3e} exceeded guard {cfg.divergence_guard:.1e}")
            if tol is None:
                tol = DEFAULT_GRAD_TOL_FACTOR * (1.0 + abs(value))

            if is_zero(x):
                if k == cfg.max_iters:
                    record(k, value, residual, None, 0.0)
                    break
                nxt = zero_iterate_step(model, y_obs, cfg)
                if is_zero(nxt):
                    record(k, value, residual, None, 0.0)
                    trace.status = SolveStatus.CONVERGED
                    trace.message = "zero residual direction at x = 0; 0 is the solution"
                    break
                record(k, value, residual, None, 1.0)
            else:
                z, grad = _direction(model, x, y_obs, cfg)
                gap = _gap(x, z, grad, cfg)
                if gap <= tol:
                    record(k, value, residual, gap, 0.0)
                    trace.status = SolveStatus.CONVERGED
                    break
                if k == cfg.max_iters:
                    record(k, value, residual, gap, 0.0)
                    break
                step = line_search(model, x, z, y_obs, cfg)
                record(k, value, residual, gap, step)
                nxt = z if step == 1.0 else x + step * (z - x)
            x = _check_guard(nxt, cfg)
    except DivergedError as e:
        trace.status = SolveStatus.DIVERGED
        trace.message = str(e)
        logger.info(f"Solve diverged after {len(trace.records)} recorded iterations: {e}")

    trace.final = x
    if trace.status is not SolveStatus.DIVERGED:
        logger.info(f"Solve finished: status={trace.status.value} iterations={trace.iterations} "
                    f"J={trace.records[-1].objective:.6e}")
    return x, trace
