"""Tests for pathlaw.cli: argument parsing, config precedence and exit codes."""

import json
import logging
from pathlib import Path
from unittest import mock

import pytest

from pathlaw.cli import build_parser, build_run_config, configure_logging, main, parse_fractions
from pathlaw.runner import EXIT_CONFIG, EXIT_PASS

FIXTURES = Path(__file__).parent / "fixtures"


def _exit_code(argv: list[str]) -> int:
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


class TestParseFractions:
    """Tests for parse_fractions."""

    def test_comma_list(self):
        assert parse_fractions("0.2, 0.5,1") == (0.2, 0.5, 1.0)

    def test_json_list(self):
        assert parse_fractions([0.5, 1]) == (0.5, 1.0)

    def test_invalid(self):
        with pytest.raises(Exception, match="invalid marginal list"):
            parse_fractions("0.2,abc")


class TestConfigureLogging:
    """Tests for configure_logging."""

    def test_levels(self):
        configure_logging(True)
        assert logging.getLogger("pathlaw").level == logging.DEBUG
        configure_logging(False)
        logger = logging.getLogger("pathlaw")
        assert logger.level == logging.INFO
        assert len(logger.handlers) == 1


# ---------------------------------------------------------------------------
# build_run_config
# ---------------------------------------------------------------------------


class TestBuildRunConfig:
    """Tests for merging defaults, config file and flags."""

    def test_defaults(self):
        config = build_run_config(build_parser().parse_args(["run"]), False)
        assert config.experiment_ids == ["all"]
        assert config.overrides == {}
        assert config.output_format == "json"
        assert config.out is None
        assert config.workers == 1

    def test_flags_map_to_spec_fields(self):
        args = build_parser().parse_args(
            ["run", "--id", "QREV", "--t", "2", "--alpha", "0.1", "--u", "0.3", "--marginals", "0.5,1", "--negative-control"]
        )
        config = build_run_config(args, False)
        assert config.experiment_ids == ["QREV"]
        assert config.overrides == {
            "t_horizon": 2.0,
            "alpha_or_x_weight": 0.1,
            "u_extension": 0.3,
            "marginal_times": (0.5, 1.0),
            "negative_control": True,
        }

    def test_config_file(self):
        args = build_parser().parse_args(["run", "--config", str(FIXTURES / "small_run.json")])
        config = build_run_config(args, False)
        assert config.experiment_ids == ["ALG_SUITE"]
        assert config.overrides == {"seed": 3, "n_steps": 64, "marginal_times": (0.5, 1.0)}
        assert config.output_format == "csv"

    def test_flags_override_config_file(self):
        args = build_parser().parse_args(
            ["run", "--config", str(FIXTURES / "small_run.json"), "--seed", "5", "--format", "json"]
        )
        config = build_run_config(args, False)
        assert config.overrides["seed"] == 5
        assert config.overrides["n_steps"] == 64
        assert config.output_format == "json"

    def test_repeated_ids(self):
        args = build_parser().parse_args(["run", "--id", "QREV", "--id", "BOUGEROL"])
        assert build_run_config(args, False).experiment_ids == ["QREV", "BOUGEROL"]


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------


class TestMain:
    """Tests for main and its exit codes."""

    def test_no_command(self, capsys):
        assert _exit_code([]) == EXIT_CONFIG
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert _exit_code(["list", "--bogus"]) == 2

    def test_version(self, capsys):
        assert _exit_code(["--version"]) == 0
        assert "pathlaw" in capsys.readouterr().out

    def test_list_text(self, capsys):
        assert _exit_code(["list"]) == EXIT_PASS
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 19
        assert lines[0].startswith("ALG_SUITE")
        assert any(line.startswith("DUFRESNE") and "mu>0" in line for line in lines)

    def test_list_json(self, capsys):
        assert _exit_code(["list", "--format", "json"]) == EXIT_PASS
        rows = json.loads(capsys.readouterr().out)
        assert len(rows) == 19
        assert {"id", "title", "description", "required_params", "needs_positive_mu"} == set(rows[0])

    def test_unknown_experiment(self, tmp_path):
        assert _exit_code(["run", "--id", "NOPE", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert _exit_code(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG

    def test_bad_config_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"colour": "blue"}')
        assert _exit_code(["run", "--config", str(path)]) == EXIT_CONFIG

    def test_unwritable_out(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert _exit_code(["run", "--id", "ALG_SUITE", "--out", str(blocker)]) == EXIT_CONFIG

    def test_run_alg_suite(self, tmp_path):
        code = _exit_code(["run", "--id", "ALG_SUITE", "--n-steps", "64", "--format", "csv", "--out", str(tmp_path)])
        assert code == EXIT_PASS
        assert (tmp_path / "results.csv").read_text().startswith("experiment_id,test_name")
        assert json.loads((tmp_path / "summary.json").read_text())["overall_pass"] is True

    def test_debug_env(self):
        with mock.patch.dict("os.environ", {"pathlaw_DEBUG": "1"}):
            with mock.patch("pathlaw.cli.cmd_list", return_value=0):
                _exit_code(["list"])
        assert logging.getLogger("pathlaw").level == logging.DEBUG
