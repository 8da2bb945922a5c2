"""Serialization of experiment reports, suite summaries and run configs."""

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from pathlaw.experiments import ExperimentReport
from pathlaw.util import ConfigError

log = logging.getLogger("pathlaw")

CSV_COLUMNS = (
    "experiment_id",
    "test_name",
    "statistic",
    "p_value",
    "n_lhs",
    "n_rhs",
    "passed",
    "threshold",
    "details",
)


def to_plain(value: Any) -> Any:
    """Convert numpy scalars, tuples and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def report_to_dict(report: ExperimentReport) -> dict[str, Any]:
    return to_plain(
        {
            "spec": report.spec.to_dict(),
            "tests": [t.to_dict() for t in report.tests],
            "overall_pass": report.overall_pass,
            "wall_time_s": report.wall_time_s,
            "sides": report.sides,
        }
    )


def dumps_json(obj: Any) -> str:
    """UTF-8 JSON with sorted keys; floats keep their shortest round-trip form."""
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _csv_cell(value: Any) -> Any:
    value = to_plain(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def reports_to_csv(reports: list[ExperimentReport]) -> str:
    """One RFC-4180 row per test, CRLF line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        for test in report.tests:
            writer.writerow(
                [
                    report.spec.id.value,
                    test.test_name,
                    _csv_cell(test.statistic),
                    _csv_cell(test.p_value),
                    test.n_lhs,
                    test.n_rhs,
                    "true" if test.passed else "false",
                    _csv_cell(test.threshold),
                    json.dumps(to_plain(test.details), sort_keys=True, separators=(",", ":")),
                ]
            )
    return buffer.getvalue()


def suite_summary(reports: list[ExperimentReport], seed: int, build: str) -> dict[str, Any]:
    return to_plain(
        {
            "build_id": build,
            "seed": seed,
            "overall_pass": all(r.overall_pass for r in reports),
            "experiments": [
                {
                    "id": r.spec.id.value,
                    "overall_pass": r.overall_pass,
                    "wall_time_s": r.wall_time_s,
                    "spec": r.spec.to_dict(),
                }
                for r in reports
            ],
        }
    )


def load_config(path: Path, allowed: set[str] | None = None) -> dict[str, Any]:
    """Read a flat JSON config file; '-' and '_' in keys are interchangeable.

    Args:
        path: config file
        allowed: accepted keys (after normalization), or None to accept any

    Returns:
        Mapping of normalized keys to scalar or list values

    Raises:
        ConfigError: unreadable file, malformed JSON, nested objects or unknown keys
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")

    config: dict[str, Any] = {}
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r} must not hold an object")
        if allowed is not None and name not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
        config[name] = value
    log.debug("Loaded %d config keys from %s", len(config), path)
    return config


def check_writable(output_dir: Path) -> None:
    """Create *output_dir* if needed and make sure files can be written into it."""
    try:
        output_dir.mkdir(mode=0o755, parents=True, exist_ok=True)
        fd, scratch = tempfile.mkstemp(dir=str(output_dir), suffix=".check")
        os.close(fd)
        os.unlink(scratch)
    except OSError as e:
        raise ConfigError(f"output path {output_dir} is not writable: {e}") from e


def write_atomic(path: Path, text: str) -> Path:
    """Write *text* to *path* through a temp file and rename, mode 0o644."""
    fd, tmp_path = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.chmod(tmp_path, 0o644)
        os.rename(tmp_path, str(path))
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise
    log.info("Wrote %s", path.name)
    return path
