import numpy as np
import pytest
from pydantic import ValidationError

from tools.discrepancy import DiscrepancyConfig, SelectionOutcome, apriori_alpha, select_alpha
from tools.errors import DivergedError
from tools.forward_models import NonlinearCsModel
from tools.regularizer import RegularizationParams
from tools.st_solver import SolverConfig

# F(x) = x in one dimension: the solution at α is S_α(1) = 1 − α and its residual is α
IDENTITY = NonlinearCsModel(matrix=[[1.0]], c=1, d=1, form="pure_power")


def solver_config(**kwargs):
    return SolverConfig(reg=RegularizationParams(alpha=1.0, eta=0.0), lam=1.0, **kwargs)


def test_first_alpha_inside_the_band_after_one_outside_is_selected():
    selection = select_alpha(IDENTITY, [1.0], [1e-6], solver_config(), DiscrepancyConfig(delta=0.1, tau=1.1))

    assert selection.outcome is SelectionOutcome.BRACKETED
    assert selection.alpha == pytest.approx(0.0625)
    assert selection.solution[0] == pytest.approx(0.9375, abs=1e-12)
    assert [t.alpha for t in selection.trials] == [1.0, 0.5, 0.25, 0.125, 0.0625]
    for trial in selection.trials[:-1]:
        assert trial.residual == pytest.approx(trial.alpha, abs=1e-12)
        assert not trial.within_band
    assert selection.trials[-1].within_band
    assert selection.trace.final_residual <= 1.1 * 0.1


def test_noise_free_search_runs_out_of_halvings():
    disc = DiscrepancyConfig(delta=0.0, max_halvings=12)
    selection = select_alpha(IDENTITY, [1.0], [1e-6], solver_config(), disc)

    assert selection.outcome is SelectionOutcome.NOT_BRACKETED
    assert len(selection.trials) == 13
    assert selection.alpha == pytest.approx(1.0 / 2 ** 12)
    assert selection.solution[0] == pytest.approx(1.0 - 1.0 / 2 ** 12, abs=1e-12)


def test_band_entered_on_the_first_trial_is_flagged():
    selection = select_alpha(IDENTITY, [1.0], [1e-6], solver_config(), DiscrepancyConfig(delta=1.0, tau=1.1))

    assert selection.outcome is SelectionOutcome.IMMEDIATE
    assert selection.alpha == 1.0
    assert len(selection.trials) == 1


def test_trials_are_warm_started_from_the_previous_solution():
    selection = select_alpha(IDENTITY, [1.0], [1e-6], solver_config(), DiscrepancyConfig(delta=0.1))
    np.testing.assert_allclose(selection.start, [0.875], atol=1e-12)


def test_diverged_trials_are_skipped():
    # an over-relaxed step makes every trial blow up
    cfg = solver_config(step=3.0)
    with pytest.raises(DivergedError):
        select_alpha(IDENTITY, [1.0], [1e-6], cfg, DiscrepancyConfig(delta=0.1, max_halvings=3))


def test_apriori_rule():
    assert apriori_alpha(0.1) == pytest.approx(0.025)
    assert apriori_alpha(0.1, q=3.0, scale=1.0) == pytest.approx(0.01)
    assert apriori_alpha(0.5, q=1.0) == pytest.approx(0.25)


def test_config_validation():
    assert DiscrepancyConfig(delta=0.2, tau=1.5).bound == pytest.approx(0.3)
    with pytest.raises(ValidationError):
        DiscrepancyConfig(delta=0.1, tau=0.9)
    with pytest.raises(ValidationError):
        DiscrepancyConfig(delta=-0.1)
    with pytest.raises(ValidationError):
        DiscrepancyConfig(delta=0.1, alpha0=0.0)
