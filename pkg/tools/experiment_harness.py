"""
Synthetic nonlinear compressive-sensing experiments.

An instance is fully determined by (seed, trial index): the Gaussian matrix,
the sparse signal and the noise each come from their own Philox stream keyed
by (seed, trial, purpose). Trials share no state, so they can run in worker
processes and be collected in any order.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel
from scipy import stats

from tools.discrepancy import AlphaTrial, apriori_alpha, select_alpha
from tools.errors import DivergedError, DomainError
from tools.experiment_specs import ExperimentSpec, SweepSpec, derive_spec
from tools.forward_models import NonlinearCsModel, rescale_matrix
from tools.regularizer import as_signal, support_size
from tools.report_writer import failure_entry, log_failures
from tools.st_solver import SolveStatus, solve

logger = logging.getLogger(__name__)

PURPOSE_TAGS = {"matrix": 0, "signal": 1, "noise": 2, "check": 3}

# −10·log10 of the smallest positive double ratio is ~308 dB
SNR_CAP_DB = 310.0

# a true spike counts as recovered when x* has its sign and is within 50% of it
RECALL_TOLERANCE = 0.5


# -- instances and metrics ---------------------------------------------------

def rng_stream(seed: int, trial_index: int, purpose: str) -> np.random.Generator:
    """Counter-based Philox stream keyed by (master seed, trial index, purpose tag)."""
    key = np.random.SeedSequence([seed, trial_index, PURPOSE_TAGS[purpose]])
    return np.random.Generator(np.random.Philox(key))


def generate_instance(spec: ExperimentSpec, trial_index: int):
    """Returns (model, x_true, y_clean) for one trial of `spec`."""
    n, m, s = spec.n, spec.m, spec.s
    A = rng_stream(spec.seed, trial_index, "matrix").standard_normal((m, n))
    model = NonlinearCsModel(
        matrix=rescale_matrix(A, spec.model.rescale),
        c=spec.model.c,
        d=spec.model.d,
        form=spec.model.form,
    )

    rng = rng_stream(spec.seed, trial_index, "signal")
    positions = rng.choice(n, size=s, replace=False)
    x = np.zeros(n)
    x[positions] = rng.standard_normal(s)
    x_true = as_signal(x, "x_true")
    return model, x_true, model.apply(x_true)


def add_noise_db(y_clean, noise_db, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """White Gaussian noise scaled so that 10·log10(‖y‖²/‖e‖²) = noise_db. Returns (y_obs, ‖e‖)."""
    y_clean = as_signal(y_clean, "y_clean")
    if noise_db is None or noise_db == "none":
        return y_clean, 0.0
    if not math.isfinite(noise_db):
        raise DomainError(f"noise level must be finite dB or 'none', got {noise_db}")
    norm_y = float(np.linalg.norm(y_clean))
    if norm_y == 0.0:
        raise DomainError("cannot set a dB noise level relative to zero data")
    e = rng.standard_normal(y_clean.size)
    e *= norm_y * 10.0 ** (-noise_db / 20.0) / np.linalg.norm(e)
    return as_signal(y_clean + e, "y_obs"), float(np.linalg.norm(e))


def _error_ratio(x_star, x_true) -> float:
    x_true = as_signal(x_true, "x_true")
    norm_true = float(np.linalg.norm(x_true))
    if norm_true == 0.0:
        raise DomainError("x_true is zero; SNR and relative error are undefined")
    return float(np.linalg.norm(as_signal(x_star, "x_star") - x_true)) / norm_true


def snr_db(x_star, x_true) -> float:
    """−10·log10(‖x* − x†‖² / ‖x†‖²), capped at SNR_CAP_DB for an exact recovery."""
    ratio = _error_ratio(x_star, x_true) ** 2
    if ratio == 0.0:
        return SNR_CAP_DB
    return min(-10.0 * math.log10(ratio), SNR_CAP_DB)


def relative_error(x_star, x_true) -> float:
    return _error_ratio(x_star, x_true)


def signed_recall(x_star, x_true) -> tuple[float | None, float | None]:
    """Fraction of positive and of negative true spikes recovered with the right sign."""
    x_star = np.asarray(x_star)
    x_true = np.asarray(x_true)
    recovered = (np.sign(x_star) == np.sign(x_true)) & (
        np.abs(x_star - x_true) <= RECALL_TOLERANCE * np.abs(x_true)
    )
    result = []
    for mask in (x_true > 0, x_true < 0):
        total = int(np.count_nonzero(mask))
        result.append(float(np.count_nonzero(recovered & mask)) / total if total else None)
    return result[0], result[1]


# -- report schemas -----------------------------------------------------------

class TraceRow(BaseModel):
    k: int
    objective: float
    residual: float
    gap: float | None
    support: int
    step: float
    relative_error: float | None = None
    snr: float | None = None


class TrialRecord(BaseModel):
    trial: int
    seed: int
    status: str
    message: str = ""
    alpha: float | None = None
    alpha_outcome: str | None = None
    alpha_trials: list[AlphaTrial] = []
    delta: float | None = None
    snr: float | None = None
    relative_error: float | None = None
    error_norm: float | None = None
    iterations: int | None = None
    final_residual: float | None = None
    support_size: int | None = None
    true_support_size: int | None = None
    positive_recall: float | None = None
    negative_recall: float | None = None
    x_star: list[float] | None = None
    x_true: list[float] | None = None


class Aggregates(BaseModel):
    trials: int
    success_count: int
    diverged_count: int
    error_count: int
    snr_median: float | None = None
    snr_mean: float | None = None
    snr_q1: float | None = None
    snr_q3: float | None = None
    relative_error_median: float | None = None
    iterations_median: float | None = None
    positive_recall_mean: float | None = None
    negative_recall_mean: float | None = None


class ExperimentReport(BaseModel):
    spec: dict
    trials: list[TrialRecord]
    aggregates: Aggregates
    traced_trial: int | None = None
    trace: list[TraceRow] | None = None


@dataclass
class TrialRun:
    record: TrialRecord
    history: list[TraceRow] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    x_true: np.ndarray | None = None
    x_star: np.ndarray | None = None
    y_clean: np.ndarray | None = None
    y_obs: np.ndarray | None = None
    failure: dict | None = None   # failure-log entry, written by the collecting process


@dataclass
class ExperimentResult:
    report: ExperimentReport
    traced: TrialRun | None = None


class _History:
    """Per-iteration ground-truth metrics and snapshots; a new entry starts at every k = 0."""

    def __init__(self, x_true: np.ndarray, snapshot_iters):
        self.x_true = x_true
        self.wanted = set(snapshot_iters)
        self.solves: list[tuple[dict, dict]] = []

    def __call__(self, k: int, x: np.ndarray) -> None:
        if k == 0:
            self.solves.append(({}, {}))
        metrics, snapshots = self.solves[-1]
        metrics[k] = (relative_error(x, self.x_true), snr_db(x, self.x_true))
        if k in self.wanted:
            snapshots[k] = np.array(x)


def _trace_rows(trace, metrics: dict) -> list[TraceRow]:
    rows = []
    for r in trace.records:
        rel, snr = metrics.get(r.k, (None, None))
        rows.append(TraceRow(k=r.k, objective=r.objective, residual=r.residual, gap=r.gap,
                             support=r.support, step=r.step, relative_error=rel, snr=snr))
    return rows


# -- trials and experiments ---------------------------------------------------

def run_trial(spec: ExperimentSpec, trial_index: int, traced: bool = False) -> TrialRun:
    """
    Generates, solves and scores one trial. Never raises; failures become
    statuses, and an `error` carries its failure-log entry in `run.failure`.
    """
    record = TrialRecord(trial=trial_index, seed=spec.seed, status="error")
    run = TrialRun(record=record)
    try:
        model, x_true, y_clean = generate_instance(spec, trial_index)
        y_obs, delta = add_noise_db(y_clean, spec.noise_db, rng_stream(spec.seed, trial_index, "noise"))
        run.x_true, run.y_clean, run.y_obs = x_true, y_clean, y_obs
        record.delta = delta
        record.true_support_size = support_size(x_true)
        record.x_true = x_true.tolist()

        x0 = np.full(spec.n, spec.solver.x0_scale)
        history = _History(x_true, spec.snapshot_iters) if traced else None

        if spec.alpha == "discrepancy":
            selection = select_alpha(model, y_obs, x0, spec.solver_config(spec.discrepancy.alpha0),
                                     spec.discrepancy_config(delta))
            alpha, x_star, trace = selection.alpha, selection.solution, selection.trace
            record.alpha_outcome = selection.outcome.value
            record.alpha_trials = selection.trials
            if history is not None:
                # replay the accepted solve from its warm start; solves are deterministic
                solve(model, y_obs, selection.start, spec.solver_config(alpha), callback=history)
        else:
            alpha = apriori_alpha(delta, 2.0, spec.apriori_scale) if spec.alpha == "a-priori" else spec.alpha
            x_star, trace = solve(model, y_obs, x0, spec.solver_config(alpha), callback=history)

        record.alpha = alpha
        record.status = trace.status.value
        record.message = trace.message
        record.iterations = trace.iterations
        record.final_residual = trace.final_residual
        run.x_star = x_star

        if history is not None:
            metrics, run.snapshots = history.solves[-1] if history.solves else ({}, {})
            run.history = _trace_rows(trace, metrics)

        if trace.status is SolveStatus.DIVERGED:
            logger.warning(f"[trial {trial_index}] diverged at k={trace.iterations}: {trace.message}")
        else:
            record.snr = snr_db(x_star, x_true)
            record.relative_error = relative_error(x_star, x_true)
            record.error_norm = float(np.linalg.norm(x_star - x_true))
            record.support_size = support_size(x_star)
            record.positive_recall, record.negative_recall = signed_recall(x_star, x_true)
            record.x_star = x_star.tolist()
            logger.info(f"[trial {trial_index}] {record.status} alpha={alpha:.6g} SNR={record.snr:.4f} dB "
                        f"iterations={record.iterations}")

    except DivergedError as e:
        record.status = SolveStatus.DIVERGED.value
        record.message = str(e)
        logger.warning(f"[trial {trial_index}] diverged before solving: {e}")
    except Exception as e:
        record.status = "error"
        record.message = f"{type(e).__name__}: {e}"
        run.failure = failure_entry({"spec": spec.to_document(), "trial": trial_index}, record.message)
    return run


def _trial_job(args) -> TrialRun:
    spec, trial_index, traced = args
    return run_trial(spec, trial_index, traced)


def _median(values) -> float | None:
    return float(np.median(values)) if len(values) else None


def aggregate(records: list[TrialRecord]) -> Aggregates:
    records = sorted(records, key=lambda r: r.trial)
    scored = [r for r in records if r.snr is not None]
    snrs = np.array([r.snr for r in scored])
    positive = [r.positive_recall for r in scored if r.positive_recall is not None]
    negative = [r.negative_recall for r in scored if r.negative_recall is not None]
    found = Aggregates(
        trials=len(records),
        success_count=sum(r.status in (SolveStatus.CONVERGED.value, SolveStatus.MAX_ITERS.value) for r in records),
        diverged_count=sum(r.status == SolveStatus.DIVERGED.value for r in records),
        error_count=sum(r.status == "error" for r in records),
        relative_error_median=_median([r.relative_error for r in scored]),
        iterations_median=_median([r.iterations for r in scored]),
        positive_recall_mean=float(np.mean(positive)) if positive else None,
        negative_recall_mean=float(np.mean(negative)) if negative else None,
    )
    if snrs.size:
        q1, median, q3 = np.percentile(snrs, [25, 50, 75])
        found.snr_median = float(median)
        found.snr_mean = float(np.mean(snrs))
        found.snr_q1 = float(q1)
        found.snr_q3 = float(q3)
    return found


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> ExperimentResult:
    """Runs every trial of `spec` (in `jobs` worker processes) and aggregates the records."""
    logger.info(f"Running experiment '{spec.name}': {spec.trials} trials, n={spec.n} m={spec.m} s={spec.s}")
    work = [(spec, i, i == spec.trace_trial) for i in range(spec.trials)]
    if jobs > 1 and spec.trials > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, spec.trials)) as pool:
            runs = list(pool.map(_trial_job, work))
    else:
        runs = [_trial_job(item) for item in work]
    runs.sort(key=lambda r: r.record.trial)
    log_failures([r.failure for r in runs if r.failure is not None])

    traced = next((r for r in runs if r.record.trial == spec.trace_trial), None)
    report = ExperimentReport(
        spec=spec.to_document(),
        trials=[r.record for r in runs],
        aggregates=aggregate([r.record for r in runs]),
        traced_trial=spec.trace_trial,
        trace=traced.history if traced is not None else None,
    )
    return ExperimentResult(report=report, traced=traced)


# -- sweeps -------------------------------------------------------------------

@dataclass
class SweepCell:
    row: int | None
    column: int
    spec: ExperimentSpec
    result: ExperimentResult | None = None


@dataclass
class SweepResult:
    sweep: SweepSpec
    cells: list[SweepCell]

    def cell(self, row: int | None, column: int) -> SweepCell:
        return next(c for c in self.cells if c.row == row and c.column == column)

    def _metric(self, row: int | None, column: int):
        agg = self.cell(row, column).result.report.aggregates
        value = agg.snr_median if self.sweep.metric == "snr" else agg.relative_error_median
        return _or_nan(value)

    def table(self) -> tuple[list[str], list[list]]:
        """Table-shaped rows mirroring the published layouts; divergent cells read 'NaN'."""
        columns = self.sweep.columns
        labels = [columns.label(j) for j in range(len(columns))]
        if self.sweep.rows is None:
            header = [columns.key] + labels
            metric = [self.sweep.metric] + [self._metric(None, j) for j in range(len(columns))]
            its = ["iterations"] + [_or_nan(self.cell(None, j).result.report.aggregates.iterations_median)
                                    for j in range(len(columns))]
            return header, [metric, its]
        rows = self.sweep.rows
        header = [f"{rows.key} \\ {columns.key}"] + labels
        body = [[rows.label(i)] + [self._metric(i, j) for j in range(len(columns))] for i in range(len(rows))]
        return header, body


def _or_nan(value):
    return "NaN" if value is None else value


def sweep_cells(sweep: SweepSpec) -> list[SweepCell]:
    """Builds and validates every cell spec before anything runs."""
    row_indices = [None] if sweep.rows is None else list(range(len(sweep.rows)))
    cells = []
    for i in row_indices:
        for j in range(len(sweep.columns)):
            overrides = dict(sweep.columns.overrides(j))
            label = sweep.columns.label(j)
            if i is not None:
                overrides.update(sweep.rows.overrides(i))
                label = f"{sweep.rows.label(i)}|{label}"
            spec = derive_spec(sweep.base, overrides, name=f"{sweep.name}[{label}]")
            cells.append(SweepCell(row=i, column=j, spec=spec))
    return cells


def run_sweep(sweep: SweepSpec, jobs: int = 1) -> SweepResult:
    cells = sweep_cells(sweep)
    logger.info(f"Running sweep '{sweep.name}': {len(cells)} cells")
    for cell in cells:
        cell.result = run_experiment(cell.spec, jobs)
        agg = cell.result.report.aggregates
        logger.info(f"[{cell.spec.name}] median SNR={agg.snr_median} diverged={agg.diverged_count}/{agg.trials}")
    return SweepResult(sweep=sweep, cells=cells)


# -- convergence-rate study ---------------------------------------------------

class PowerLawFit(BaseModel):
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    confidence: float
    points: int


class RateLevel(BaseModel):
    noise_db: float
    trials: int
    usable: int
    excluded: bool = False
    reason: str = ""
    delta_median: float | None = None
    error_median: float | None = None
    alpha_median: float | None = None


class RateStudyReport(BaseModel):
    alpha_rule: str
    base: dict
    levels: list[RateLevel]
    fit: PowerLawFit | None = None
    note: str = "rates are asymptotic and instance-dependent; the slope is reported, not judged"


def fit_power_law(deltas, errors, confidence: float = 0.95) -> PowerLawFit:
    """Least-squares slope of log(error) against log(δ) with a t-based confidence interval."""
    deltas = np.asarray(deltas, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if deltas.size != errors.size or deltas.size < 3:
        raise DomainError("a power-law fit needs at least 3 (delta, error) pairs")
    if np.any(deltas <= 0) or np.any(errors <= 0):
        raise DomainError("a log-log fit needs positive deltas and errors")
    fit = stats.linregress(np.log(deltas), np.log(errors))
    half = float(stats.t.ppf(0.5 + confidence / 2.0, deltas.size - 2)) * float(fit.stderr)
    return PowerLawFit(slope=float(fit.slope), intercept=float(fit.intercept), stderr=float(fit.stderr),
                       ci_low=float(fit.slope) - half, ci_high=float(fit.slope) + half,
                       confidence=confidence, points=int(deltas.size))


def rate_study(base: ExperimentSpec, noise_levels, alpha_rule: str = "a-priori", jobs: int = 1) -> RateStudyReport:
    """Median ‖x* − x†‖ against δ over noise levels, and the fitted log-log slope."""
    if alpha_rule not in ("a-priori", "discrepancy"):
        raise DomainError(f"alpha_rule must be 'a-priori' or 'discrepancy', got {alpha_rule}")
    levels = [float(level) for level in noise_levels]
    if len(levels) < 3 or not all(math.isfinite(level) for level in levels):
        raise DomainError("a rate study needs at least 3 finite noise levels")

    found = []
    for level in levels:
        spec = derive_spec(base, {"noise_db": level, "alpha": alpha_rule, "trace_trial": None},
                           name=f"{base.name}@{level:g}dB")
        report = run_experiment(spec, jobs).report
        usable = [t for t in report.trials if t.error_norm is not None]
        row = RateLevel(noise_db=level, trials=len(report.trials), usable=len(usable))
        if not usable:
            row.excluded = True
            row.reason = "every trial diverged or failed"
            logger.warning(f"[rate study] {level:g} dB excluded from the fit: {row.reason}")
        else:
            row.delta_median = _median([t.delta for t in usable])
            row.error_median = _median([t.error_norm for t in usable])
            row.alpha_median = _median([t.alpha for t in usable])
            if row.error_median <= 0.0:
                row.excluded = True
                row.reason = "zero reconstruction error"
        found.append(row)

    points = [r for r in found if not r.excluded]
    fit = None
    if len(points) >= 3:
        fit = fit_power_law([r.delta_median for r in points], [r.error_median for r in points])
        logger.info(f"[rate study] slope={fit.slope:.4f} CI=[{fit.ci_low:.4f}, {fit.ci_high:.4f}]")
    else:
        logger.warning(f"[rate study] only {len(points)} usable levels; no slope fitted")
    return RateStudyReport(alpha_rule=alpha_rule, base=base.to_document(), levels=found, fit=fit)
