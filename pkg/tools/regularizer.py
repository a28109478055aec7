"""
Signals, the α‖x‖₁ − β‖x‖₂ regularization functional, the composite objective
and soft thresholding.

A Signal is a finite, one-dimensional float64 numpy array. `as_signal` is the
single gate every operation passes its inputs through: it copies, checks
finiteness and freezes the buffer so values can be shared between threads.
"""
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tools.errors import DomainError

# Relative slack under which a negative regularizer value is treated as round-off
NONNEGATIVE_SLACK = 1e-12


class RegularizationParams(BaseModel):
    """α, η = β/α and the residual exponent q of the regularized objective."""

    alpha: float = Field(ge=0.0)
    eta: float = Field(ge=0.0, le=1.0)
    q: float = Field(default=2.0, ge=1.0)

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    @property
    def beta(self) -> float:
        return self.eta * self.alpha


def as_signal(values, name: str = "x") -> np.ndarray:
    """Returns a frozen float64 copy of `values`, rejecting anything non-finite."""
    try:
        x = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DomainError(f"{name} is not a real vector: {e}") from e
    if x.ndim != 1 or x.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite entries")
    x.flags.writeable = False
    return x


def one_hot(n: int, i: int) -> np.ndarray:
    """The basis vector e_i of R^n."""
    e = np.zeros(n)
    e[i] = 1.0
    return as_signal(e, "e_i")


def is_zero(x: np.ndarray) -> bool:
    """True iff every component is exactly zero."""
    return not np.any(x)


def support_size(x: np.ndarray) -> int:
    return int(np.count_nonzero(x))


def regularizer(x, p: RegularizationParams) -> float:
    """R_{α,β}(x) = α‖x‖₁ − β‖x‖₂, never negative for α ≥ β."""
    x = as_signal(x)
    l1 = float(np.sum(np.abs(x)))
    l2 = float(np.linalg.norm(x))
    value = p.alpha * l1 - p.beta * l2
    if value < 0.0:
        if -value <= NONNEGATIVE_SLACK * p.alpha * l1:
            return 0.0
        raise DomainError(f"regularizer is negative ({value}); alpha >= beta violated")
    return value


def objective(x, residual_norm: float, p: RegularizationParams) -> float:
    """J(x) = (1/q)·‖F(x) − y‖^q + R_{α,β}(x), with the residual norm supplied by the caller."""
    if not math.isfinite(residual_norm) or residual_norm < 0.0:
        raise DomainError(f"residual_norm must be a finite nonnegative number, got {residual_norm}")
    return residual_norm ** p.q / p.q + regularizer(x, p)


def soft_threshold_scalar(t: float, tau: float) -> float:
    if tau < 0.0:
        raise DomainError(f"threshold must be nonnegative, got {tau}")
    if not (math.isfinite(t) and math.isfinite(tau)):
        raise DomainError("soft threshold of a non-finite value")
    if t >= tau:
        return t - tau
    if t <= -tau:
        return t + tau
    return 0.0


def soft_threshold_vector(x, tau: float) -> np.ndarray:
    """Componentwise soft thresholding S_τ(x_i) = sign(x_i)·max(|x_i| − τ, 0)."""
    if tau < 0.0 or not math.isfinite(tau):
        raise DomainError(f"threshold must be a finite nonnegative number, got {tau}")
    x = as_signal(x)
    return as_signal(np.sign(x) * np.maximum(np.abs(x) - tau, 0.0), "S(x)")
