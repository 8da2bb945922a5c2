import logging
import math
import sys
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from pathlaw.experiments import REGISTRY, ExperimentId, ExperimentReport, ExperimentSpec, run_experiment
from pathlaw.html import build_html
from pathlaw.report import (
    check_writable,
    dumps_json,
    report_to_dict,
    reports_to_csv,
    suite_summary,
    write_atomic,
)
from pathlaw.stattests import TestReport
from pathlaw.util import ConfigError, PathlawError, build_id, validate_experiment_id

log = logging.getLogger("pathlaw")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

OUTPUT_FORMATS = ("json", "csv", "html")
SPEC_FIELDS = frozenset(f.name for f in fields(ExperimentSpec)) - {"id"}


@dataclass
class RunConfig:
    """Resolved command-line run: which experiments, spec overrides and output."""

    experiment_ids: list[str] = field(default_factory=lambda: ["all"])
    overrides: dict[str, Any] = field(default_factory=dict)
    output_format: str = "json"
    out: Path | None = None
    workers: int = 1
    verbose: bool = False


def resolve_ids(names: list[str]) -> list[ExperimentId]:
    """Map names (or "all") to registry ids, rejecting unknown names."""
    if not names or "all" in names:
        return list(REGISTRY)
    resolved = []
    for name in names:
        if not validate_experiment_id(name) or name not in ExperimentId.__members__:
            raise ConfigError(f"unknown experiment id {name!r}")
        experiment_id = ExperimentId[name]
        if experiment_id not in resolved:
            resolved.append(experiment_id)
    return resolved


def resolve_specs(config: RunConfig) -> list[ExperimentSpec]:
    """Build and validate every spec before any simulation starts."""
    unknown = set(config.overrides) - SPEC_FIELDS
    if unknown:
        raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
    if config.output_format not in OUTPUT_FORMATS:
        raise ConfigError(f"unknown output format {config.output_format!r}")
    if config.workers < 1:
        raise ConfigError("workers must be at least 1")
    specs = []
    for experiment_id in resolve_ids(config.experiment_ids):
        try:
            spec = ExperimentSpec(experiment_id, **config.overrides)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid spec values: {e}") from e
        spec.validate()
        specs.append(spec)
    return specs


def _crash_report(spec: ExperimentSpec, error: Exception, elapsed: float) -> ExperimentReport:
    test = TestReport(
        test_name="error",
        statistic=math.nan,
        p_value=None,
        n_lhs=0,
        n_rhs=0,
        passed=False,
        threshold=math.nan,
        details={"error": f"{type(error).__name__}: {error}"},
    )
    return ExperimentReport(spec, [test], False, elapsed)


def run_specs(specs: list[ExperimentSpec], executor: Executor | None = None) -> list[ExperimentReport]:
    """Run experiments in order; a crashing experiment is logged and reported as failed."""
    reports = []
    for spec in specs:
        started = time.perf_counter()
        try:
            reports.append(run_experiment(spec, executor))
        except PathlawError as e:
            log.exception("Experiment %s failed", spec.id.value)
            reports.append(_crash_report(spec, e, time.perf_counter() - started))
    return reports


def render_outputs(reports: list[ExperimentReport], summary: dict, output_format: str) -> dict[str, str]:
    """File name to content for every output of a run."""
    outputs = {"summary.json": dumps_json(summary)}
    if output_format == "json":
        for report in reports:
            outputs[f"{report.spec.id.value}.json"] = dumps_json(report_to_dict(report))
    elif output_format == "csv":
        outputs["results.csv"] = reports_to_csv(reports)
    else:
        outputs["report.html"] = build_html(reports, summary)
    return outputs


def _render_stdout(reports: list[ExperimentReport], summary: dict, output_format: str) -> str:
    if output_format == "json":
        return dumps_json({"summary": summary, "reports": [report_to_dict(r) for r in reports]})
    if output_format == "csv":
        return reports_to_csv(reports)
    return build_html(reports, summary)


def run_suite(config: RunConfig) -> int:
    """Run the selected experiments and write their reports; return the exit code."""
    try:
        specs = resolve_specs(config)
        if config.out is not None:
            check_writable(config.out)
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_CONFIG

    seed = specs[0].seed
    log.info("Running %d experiments with %d worker(s)", len(specs), config.workers)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            reports = run_specs(specs, executor)
    else:
        reports = run_specs(specs)

    summary = suite_summary(reports, seed, build_id())
    if config.out is None:
        sys.stdout.write(_render_stdout(reports, summary, config.output_format))
        sys.stdout.flush()
    else:
        try:
            for name, text in render_outputs(reports, summary, config.output_format).items():
                write_atomic(config.out / name, text)
        except OSError as e:
            log.error("Failed to write reports: %s", e)
            return EXIT_CONFIG

    failed = [r.spec.id.value for r in reports if not r.overall_pass]
    if failed:
        log.info("Failed: %s", ", ".join(failed))
        return EXIT_FAIL
    log.info("All %d experiments passed", len(reports))
    return EXIT_PASS
