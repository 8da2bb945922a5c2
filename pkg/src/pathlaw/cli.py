import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from pathlaw import __version__
from pathlaw.experiments import list_experiments
from pathlaw.report import load_config
from pathlaw.runner import EXIT_CONFIG, EXIT_PASS, OUTPUT_FORMATS, RunConfig, run_suite
from pathlaw.util import ConfigError

log = logging.getLogger("pathlaw")

# flag dest -> ExperimentSpec field
SPEC_FLAGS = {
    "seed": "seed",
    "n_paths": "n_paths",
    "n_steps": "n_steps",
    "t": "t_horizon",
    "mu": "mu",
    "x": "x",
    "alpha": "alpha_or_x_weight",
    "u": "u_extension",
    "truncation_T": "truncation_T",
    "marginals": "marginal_times",
    "family_alpha": "family_alpha",
    "negative_control": "negative_control",
    "n_permutations": "n_permutations",
    "energy_n": "energy_n",
    "block_size": "block_size",
}
RUN_FLAGS = {"id", "workers", "format", "out", "verbose"}


def configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler()  # defaults to stderr
    handler.setFormatter(logging.Formatter("[pathlaw] %(message)s"))
    log.handlers.clear()
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if verbose else logging.INFO)


def parse_fractions(text: str | list | tuple) -> tuple[float, ...]:
    """Parse "0.2,0.4,1" (or a JSON list) into marginal fractions."""
    items = text if isinstance(text, (list, tuple)) else [p for p in str(text).split(",") if p.strip()]
    try:
        return tuple(float(item) for item in items)
    except (TypeError, ValueError) as e:
        raise argparse.ArgumentTypeError(f"invalid marginal list {text!r}") from e


def cmd_list(output_format: str) -> int:
    """Print the experiment registry as a table or JSON array."""
    entries = list_experiments()
    if output_format == "json":
        rows = [
            {
                "id": e.id.value,
                "title": e.title,
                "description": e.description,
                "required_params": list(e.required_params),
                "needs_positive_mu": e.needs_positive_mu,
            }
            for e in entries
        ]
        sys.stdout.write(json.dumps(rows, indent=2, ensure_ascii=False) + "\n")
        return EXIT_PASS
    width = max(len(e.id.value) for e in entries)
    for e in entries:
        mu_flag = "mu>0" if e.needs_positive_mu else "    "
        sys.stdout.write(f"{e.id.value:<{width}}  {mu_flag}  {e.title}  [{', '.join(e.required_params)}]\n")
    return EXIT_PASS


def build_run_config(args: argparse.Namespace, verbose: bool) -> RunConfig:
    """Merge defaults, the --config file and explicit flags (flags win)."""
    values: dict[str, Any] = {}
    if args.config is not None:
        values.update(load_config(Path(args.config), set(SPEC_FLAGS) | RUN_FLAGS))
    for dest in list(SPEC_FLAGS) + ["id", "workers", "format", "out"]:
        flag_value = getattr(args, dest)
        if flag_value is not None:
            values[dest] = flag_value

    overrides = {}
    for dest, field_name in SPEC_FLAGS.items():
        if dest in values:
            overrides[field_name] = values[dest]
    if "marginal_times" in overrides:
        try:
            overrides["marginal_times"] = parse_fractions(overrides["marginal_times"])
        except argparse.ArgumentTypeError as e:
            raise ConfigError(str(e)) from e

    ids = values.get("id", ["all"])
    if isinstance(ids, str):
        ids = [ids]
    out = values.get("out")
    return RunConfig(
        experiment_ids=list(ids),
        overrides=overrides,
        output_format=values.get("format", "json"),
        out=Path(out) if out is not None else None,
        workers=int(values.get("workers", 1)),
        verbose=verbose or bool(values.get("verbose", False)),
    )


def cmd_run(args: argparse.Namespace, verbose: bool) -> int:
    try:
        config = build_run_config(args, verbose)
    except (ConfigError, ValueError, TypeError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    if config.verbose:
        log.setLevel(logging.DEBUG)
    return run_suite(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathlaw",
        description="Monte Carlo checks of identities in law for anticipative path transforms",
    )
    parser.add_argument("--version", action="version", version=f"pathlaw {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")

    subparsers = parser.add_subparsers(dest="command")

    list_parser = subparsers.add_parser("list", help="List registered experiments")
    list_parser.add_argument("--format", choices=("text", "json"), default="text")

    run_parser = subparsers.add_parser("run", help="Run experiments and write reports")
    run_parser.add_argument(
        "--id", action="append", default=None, help="Experiment id, repeatable; 'all' for every one"
    )
    run_parser.add_argument("--config", default=None, help="Flat JSON file of flag values")
    run_parser.add_argument("--seed", type=int, default=None)
    run_parser.add_argument("--n-paths", type=int, default=None)
    run_parser.add_argument("--n-steps", type=int, default=None)
    run_parser.add_argument("--t", type=float, default=None, help="Horizon t")
    run_parser.add_argument("--mu", type=float, default=None, help="Drift")
    run_parser.add_argument("--x", type=float, default=None, help="Shift parameter")
    run_parser.add_argument("--alpha", type=float, default=None, help="Nonzero x for the weighted relations")
    run_parser.add_argument("--u", type=float, default=None, help="Extension length u")
    run_parser.add_argument("--truncation-T", type=float, default=None, help="Dufresne truncation horizon")
    run_parser.add_argument("--marginals", type=parse_fractions, default=None, help="Comma list of fractions of t")
    run_parser.add_argument("--family-alpha", type=float, default=None)
    run_parser.add_argument("--n-permutations", type=int, default=None)
    run_parser.add_argument("--energy-n", type=int, default=None, help="Rows per side fed to energy tests")
    run_parser.add_argument("--block-size", type=int, default=None)
    run_parser.add_argument(
        "--negative-control", action="store_const", const=True, default=None,
        help="Corrupt the identity; a sound suite must then fail",
    )
    run_parser.add_argument("--workers", type=int, default=None)
    run_parser.add_argument("--format", choices=OUTPUT_FORMATS, default=None)
    run_parser.add_argument("--out", default=None, help="Directory for report files (stdout if omitted)")
    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = args.verbose or os.environ.get("pathlaw_DEBUG") == "1"
    configure_logging(verbose)

    if args.command is None:
        parser.print_help(sys.stderr)
        sys.exit(EXIT_CONFIG)
    elif args.command == "list":
        sys.exit(cmd_list(args.format))
    elif args.command == "run":
        sys.exit(cmd_run(args, verbose))
