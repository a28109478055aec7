"""
Discrepancy-principle choice of α with β = ηα held proportional.

Trials run at α_j = alpha0 / 2^j, each warm-started from the previous
successful solution. The first α_j whose residual drops into the band
‖F(x) − y‖ ≤ τδ, after a trial that was outside it, is accepted.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from tools.errors import DivergedError
from tools.forward_models import ForwardModel
from tools.st_solver import SolverConfig, SolverTrace, SolveStatus, solve

logger = logging.getLogger(__name__)


class DiscrepancyConfig(BaseModel):
    alpha0: float = Field(default=1.0, gt=0.0)
    tau: float = Field(default=1.1, ge=1.0)
    delta: float = Field(ge=0.0)
    max_halvings: int = Field(default=12, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    @property
    def bound(self) -> float:
        return self.tau * self.delta


class SelectionOutcome(str, Enum):
    BRACKETED = "bracketed"
    IMMEDIATE = "band-entered-immediately"
    NOT_BRACKETED = "not-bracketed"


class AlphaTrial(BaseModel):
    """One tried α_j and what the solve at it returned."""

    j: int
    alpha: float
    status: str
    residual: float | None = None
    iterations: int = 0
    within_band: bool = False


@dataclass
class AlphaSelection:
    alpha: float
    solution: np.ndarray
    trace: SolverTrace
    trials: list[AlphaTrial]
    outcome: SelectionOutcome
    start: np.ndarray  # iterate the accepted solve was warm-started from


def apriori_alpha(delta: float, q: float = 2.0, scale: float = 0.25) -> float:
    """α = scale·δ^{q−1}, the a-priori rule used by the rate study."""
    return scale * delta ** (q - 1.0)


def select_alpha(
    model: ForwardModel,
    y_obs,
    x0,
    solver_cfg: SolverConfig,
    disc: DiscrepancyConfig,
) -> AlphaSelection:
    bound = disc.bound
    trials: list[AlphaTrial] = []
    start = x0
    last = None
    seen_outside = False

    for j in range(disc.max_halvings + 1):
        alpha = disc.alpha0 / 2 ** j
        x, trace = solve(model, y_obs, start, solver_cfg.with_alpha(alpha))

        if trace.status is SolveStatus.DIVERGED:
            logger.warning(f"[alpha {alpha:.6g}] solve diverged, halving again: {trace.message}")
            trials.append(AlphaTrial(j=j, alpha=alpha, status=trace.status.value, iterations=trace.iterations))
            continue

        residual = trace.final_residual
        inside = residual <= bound
        trials.append(AlphaTrial(j=j, alpha=alpha, status=trace.status.value, residual=residual,
                                 iterations=trace.iterations, within_band=inside))
        logger.info(f"[alpha {alpha:.6g}] residual={residual:.6e} bound={bound:.6e} inside={inside}")

        if inside:
            outcome = SelectionOutcome.BRACKETED if seen_outside else SelectionOutcome.IMMEDIATE
            return AlphaSelection(alpha, x, trace, trials, outcome, start)

        seen_outside = True
        last = (alpha, x, trace, start)
        start = x

    if last is None:
        raise DivergedError(f"every discrepancy trial diverged ({len(trials)} tried)")
    alpha, x, trace, accepted_start = last
    logger.warning(f"Discrepancy search not bracketed after {disc.max_halvings} halvings; keeping alpha={alpha:.6g}")
    return AlphaSelection(alpha, x, trace, trials, SelectionOutcome.NOT_BRACKETED, accepted_start)
