"""
Writes reports, tables and traces to disk.

Every file is written to a temporary sibling first and moved into place with
os.replace, so a reader never sees a half-written report. Floats are written
in shortest round-trip form (repr).
"""
import csv
import io
import json
import logging
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "objective", "residual", "gap", "support", "step", "relative_error", "snr"]


def format_cell(value) -> str:
    """CSV cell text: '' for missing values, 'NaN' for non-finite floats, repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else "NaN"
    return str(value)


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.info(f"Wrote {path}")
    return path


def write_json(path, payload) -> Path:
    return write_atomic(path, json.dumps(payload, indent=2, allow_nan=False) + "\n")


def write_csv(path, header: list[str], rows) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return write_atomic(path, buffer.getvalue())


def write_trace_csv(path, trace_rows) -> Path:
    """Trace rows are TraceRow models (or dicts) keyed by TRACE_COLUMNS."""
    rows = []
    for row in trace_rows:
        data = row if isinstance(row, dict) else row.model_dump()
        rows.append([data.get(column) for column in TRACE_COLUMNS])
    return write_csv(path, TRACE_COLUMNS, rows)


def failure_entry(context: dict, error_message: str) -> dict:
    return {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "error": error_message,
        "context": context,
    }


def log_failures(entries: list[dict], failure_file: str | None = None) -> Path | None:
    """
    Fallback: appends failed trials to the local JSON failure log so no result is lost silently.

    Only the process that collected the trials calls this; workers hand their
    entries back instead of touching the file.
    """
    if not entries:
        return None
    if failure_file is None:
        from tools.settings import get_settings
        failure_file = get_settings().failure_log

    path = Path(failure_file)
    for entry in entries:
        logger.error(f"Logging failure to {path}: {entry['error']}")

    failures = []
    if path.exists():
        with open(path, "r", encoding="utf-8") as f:
            try:
                failures = json.load(f)
            except json.JSONDecodeError:
                failures = []
    if not isinstance(failures, list):
        failures = [failures]

    failures.extend(entries)
    return write_atomic(path, json.dumps(failures, indent=2, default=str) + "\n")
