"""
Batch command-line front end.

    python -m tools.recovery_cli solve --spec experiments/benchmark.json --out out
    python -m tools.recovery_cli experiment --preset step_size --jobs 4
    python -m tools.recovery_cli rate-study --spec experiments/benchmark.json --levels 20,30,40,50
    python -m tools.recovery_cli check-jacobian --spec experiments/benchmark.json
    python -m tools.recovery_cli check-direction --spec experiments/benchmark.json

Exit codes: 0 success, 1 usage / spec / IO error, 2 diverged solve or failed check.
"""
import argparse
import json
import logging
import re
import sys
from pathlib import Path

from tools.checks import check_direction, check_jacobian
from tools.errors import RecoveryError, SpecError
from tools.experiment_harness import (
    generate_instance,
    add_noise_db,
    rate_study,
    rng_stream,
    run_experiment,
    run_sweep,
    run_trial,
)
from tools.experiment_specs import (
    build_experiment_spec,
    build_sweep_spec,
    is_sweep_document,
    read_json,
)
from tools.presets import get_preset
from tools.report_writer import log_failures, write_csv, write_json, write_trace_csv
from tools.settings import get_settings
from tools.st_solver import SolveStatus

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; usage errors here are exit 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="experiment (or sweep) spec JSON file")
    common.add_argument("--out", default=settings.output_dir, help="output directory")
    common.add_argument("--format", choices=["json", "csv", "both"], default="both")
    common.add_argument("--jobs", type=_positive_int, default=settings.jobs, help="worker processes for trials")
    common.add_argument("--seed", type=_seed, default=None, help="override the spec's master seed")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override into the spec, e.g. solver.lambda=4.0 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = _Parser(prog="recovery", description="Sparse recovery with alpha*l1 - beta*l2 regularization")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", parents=[common], help="solve one trial and write report + trace")
    solve.add_argument("--trial", type=int, default=0, help="trial index of the spec to solve")

    experiment = sub.add_parser("experiment", parents=[common], help="run all trials of a spec or a sweep")
    experiment.add_argument("--preset", help="built-in sweep instead of --spec")

    rate = sub.add_parser("rate-study", parents=[common], help="error against noise level with a log-log fit")
    rate.add_argument("--levels", default="20,30,40,50", help="comma-separated noise levels in dB")
    rate.add_argument("--alpha-rule", choices=["a-priori", "discrepancy"], default="a-priori")

    jac = sub.add_parser("check-jacobian", parents=[common], help="analytic Jacobian against finite differences")
    jac.add_argument("--samples", type=_positive_int, default=20)
    jac.add_argument("--h", type=float, default=1e-5)

    direction = sub.add_parser("check-direction", parents=[common], help="descent direction against a grid oracle")
    direction.add_argument("--samples", type=_positive_int, default=20)
    return parser


def _require_spec(args) -> dict:
    if not args.spec:
        raise UsageError(f"{args.command}: --spec is required")
    return read_json(args.spec)


def _wants(args, kind: str) -> bool:
    return args.format in (kind, "both")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_") or "cell"


def _write_trial_files(directory: Path, args, run) -> None:
    if not _wants(args, "csv"):
        return
    write_trace_csv(directory / "trace.csv", run.history)
    if run.x_true is not None and run.x_star is not None:
        write_csv(directory / "signals.csv", ["index", "x_true", "x_star"],
                  ([i, float(a), float(b)] for i, (a, b) in enumerate(zip(run.x_true, run.x_star))))
    if run.y_clean is not None:
        write_csv(directory / "measurements.csv", ["index", "y_clean", "y_obs"],
                  ([i, float(a), float(b)] for i, (a, b) in enumerate(zip(run.y_clean, run.y_obs))))
    if run.snapshots:
        ks = sorted(run.snapshots)
        write_csv(directory / "snapshots.csv", ["index"] + [f"k={k}" for k in ks],
                  ([i] + [float(run.snapshots[k][i]) for k in ks] for i in range(len(run.snapshots[ks[0]]))))


def cmd_solve(args) -> int:
    spec = build_experiment_spec(_require_spec(args), args.overrides, args.seed)
    if not 0 <= args.trial < spec.trials:
        raise UsageError(f"solve: --trial must lie in 0..{spec.trials - 1}")
    run = run_trial(spec, args.trial, traced=True)
    if run.failure is not None:
        log_failures([run.failure])
    directory = Path(args.out) / _slug(spec.name)
    if _wants(args, "json"):
        payload = {
            "spec": spec.to_document(),
            "trial": run.record.model_dump(mode="json"),
            "trace": [row.model_dump(mode="json") for row in run.history],
        }
        write_json(directory / "report.json", payload)
    _write_trial_files(directory, args, run)

    record = run.record
    print(f"{spec.name} trial {record.trial}: status={record.status} alpha={record.alpha} "
          f"SNR={record.snr} iterations={record.iterations}", file=sys.stderr)
    if record.status == SolveStatus.DIVERGED.value:
        return EXIT_FAILED
    if record.status == "error":
        print(f"solve failed: {record.message}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.preset:
        preset = get_preset(args.preset)
        document = preset.model_dump(mode="json", by_alias=True)
        sweep = build_sweep_spec(document, args.overrides, args.seed)
    else:
        document = _require_spec(args)
        if not is_sweep_document(document):
            return _run_single_experiment(args, build_experiment_spec(document, args.overrides, args.seed))
        sweep = build_sweep_spec(document, args.overrides, args.seed)

    result = run_sweep(sweep, args.jobs)
    directory = Path(args.out) / _slug(sweep.name)
    if _wants(args, "json"):
        write_json(directory / "report.json", {
            "sweep": sweep.model_dump(mode="json", by_alias=True),
            "cells": [
                {
                    "row": None if c.row is None else sweep.rows.label(c.row),
                    "column": sweep.columns.label(c.column),
                    "report": c.result.report.model_dump(mode="json"),
                }
                for c in result.cells
            ],
        })
    if _wants(args, "csv"):
        header, rows = result.table()
        write_csv(directory / "table.csv", header, rows)
        for cell in result.cells:
            if cell.result.traced is not None:
                write_trace_csv(directory / "traces" / f"{_slug(cell.spec.name)}.csv", cell.result.traced.history)
    print(f"sweep {sweep.name}: {len(result.cells)} cells written to {directory}", file=sys.stderr)
    return EXIT_OK


def _run_single_experiment(args, spec) -> int:
    result = run_experiment(spec, args.jobs)
    directory = Path(args.out) / _slug(spec.name)
    if _wants(args, "json"):
        write_json(directory / "report.json", result.report.model_dump(mode="json"))
    if _wants(args, "csv"):
        agg = result.report.aggregates
        write_csv(directory / "table.csv", ["metric", "value"], [
            ["snr_median", agg.snr_median if agg.snr_median is not None else "NaN"],
            ["snr_mean", agg.snr_mean if agg.snr_mean is not None else "NaN"],
            ["relative_error_median", agg.relative_error_median],
            ["iterations_median", agg.iterations_median],
            ["success_count", agg.success_count],
            ["diverged_count", agg.diverged_count],
        ])
    if result.traced is not None:
        _write_trial_files(directory, args, result.traced)
    print(f"experiment {spec.name}: median SNR={result.report.aggregates.snr_median} "
          f"diverged={result.report.aggregates.diverged_count}/{spec.trials}", file=sys.stderr)
    return EXIT_OK


def cmd_rate_study(args) -> int:
    spec = build_experiment_spec(_require_spec(args), args.overrides, args.seed)
    try:
        levels = [float(v) for v in args.levels.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"rate-study: bad --levels '{args.levels}': {e}") from e
    report = rate_study(spec, levels, args.alpha_rule, args.jobs)
    directory = Path(args.out) / _slug(f"{spec.name}_rate_study")
    if _wants(args, "json"):
        write_json(directory / "rate_study.json", report.model_dump(mode="json"))
    if _wants(args, "csv"):
        write_csv(directory / "rate_study.csv",
                  ["noise_db", "delta_median", "error_median", "alpha_median", "usable", "excluded"],
                  ([r.noise_db, r.delta_median, r.error_median, r.alpha_median, r.usable, r.excluded]
                   for r in report.levels))
    slope = "none" if report.fit is None else f"{report.fit.slope:.4f} [{report.fit.ci_low:.4f}, {report.fit.ci_high:.4f}]"
    print(f"rate study ({args.alpha_rule}): slope={slope}", file=sys.stderr)
    return EXIT_OK


def cmd_check_jacobian(args) -> int:
    spec = build_experiment_spec(_require_spec(args), args.overrides, args.seed)
    model, _, _ = generate_instance(spec, 0)
    result = check_jacobian(model, rng_stream(spec.seed, 0, "check"), args.samples, args.h)
    print(f"max relative error {result.max_error:.3e} (threshold {result.threshold:.0e})")
    if not result.passed:
        print(f"check-jacobian FAILED on sample: {json.dumps(result.worst)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_check_direction(args) -> int:
    spec = build_experiment_spec(_require_spec(args), args.overrides, args.seed)
    model, _, y_clean = generate_instance(spec, 0)
    y_obs, _ = add_noise_db(y_clean, spec.noise_db, rng_stream(spec.seed, 0, "noise"))
    result = check_direction(model, y_obs, rng_stream(spec.seed, 0, "check"), args.samples,
                             lam=spec.solver.lam, eta=spec.solver.eta)
    print(f"max abs error {result.max_error:.3e} over {result.samples} components (threshold {result.threshold:.0e})")
    if not result.passed:
        print(f"check-direction FAILED on sample: {json.dumps(result.worst)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "experiment": cmd_experiment,
    "rate-study": cmd_rate_study,
    "check-jacobian": cmd_check_jacobian,
    "check-direction": cmd_check_direction,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    level = logging.DEBUG if args.verbose else get_settings().log_level
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        return COMMANDS[args.command](args)
    except (UsageError, SpecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RecoveryError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
