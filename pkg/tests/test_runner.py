"""Tests for pathlaw.runner: spec resolution, the suite loop and its exit codes.

Experiments run inline with small pools; the process pool is only checked
for being requested.
"""

import json
import re
from pathlib import Path
from unittest import mock

import pytest

from pathlaw.experiments import ExperimentId, run_experiment
from pathlaw.runner import (
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_PASS,
    RunConfig,
    render_outputs,
    resolve_ids,
    resolve_specs,
    run_specs,
    run_suite,
)
from pathlaw.util import ConfigError, NumericOverflow

ALGEBRA = {"n_steps": 64, "n_algebra_paths": 10, "n_param_draws": 2}
SMALL = {"n_steps": 64, "n_paths": 1000, "block_size": 500, "n_permutations": 200, "energy_n": 200}
WALL_TIME = re.compile(rb'"wall_time_s": [^,\n]+')


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------


class TestResolve:
    """Tests for resolve_ids and resolve_specs."""

    def test_all(self):
        assert resolve_ids(["all"]) == list(ExperimentId)

    def test_duplicates_collapsed(self):
        assert resolve_ids(["QREV", "BOUGEROL", "QREV"]) == [ExperimentId.QREV, ExperimentId.BOUGEROL]

    @pytest.mark.parametrize("name", ["NOPE", "qrev", "../x", ""])
    def test_unknown_id(self, name):
        with pytest.raises(ConfigError):
            resolve_ids([name])

    def test_overrides_applied(self):
        specs = resolve_specs(RunConfig(["QREV"], {"seed": 9, "n_paths": 500}))
        assert specs[0].seed == 9
        assert specs[0].n_paths == 500

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown spec fields"):
            resolve_specs(RunConfig(["QREV"], {"bogus": 1}))

    def test_every_spec_validated_first(self):
        """One invalid spec rejects the whole run."""
        with pytest.raises(ConfigError):
            resolve_specs(RunConfig(["QREV", "DUFRESNE"], {"mu": 0.0}))

    def test_bad_format(self):
        with pytest.raises(ConfigError):
            resolve_specs(RunConfig(["QREV"], output_format="xml"))


# ---------------------------------------------------------------------------
# run_specs / render_outputs
# ---------------------------------------------------------------------------


class TestRunSpecs:
    """Tests for run_specs."""

    def test_crash_becomes_failed_report(self):
        specs = resolve_specs(RunConfig(["QREV", "ALG_SUITE"], ALGEBRA | {"n_paths": 100}))

        def flaky(spec, executor=None):
            if spec.id is ExperimentId.QREV:
                raise NumericOverflow("exp overflow", node=1, path_index=2)
            return run_experiment(spec, executor)

        with mock.patch("pathlaw.runner.run_experiment", side_effect=flaky):
            reports = run_specs(specs)
        assert [r.spec.id for r in reports] == [ExperimentId.QREV, ExperimentId.ALG_SUITE]
        crashed = reports[0]
        assert not crashed.overall_pass
        assert crashed.tests[0].test_name == "error"
        assert "path 2" in crashed.tests[0].details["error"]
        assert reports[1].overall_pass


class TestRenderOutputs:
    """Tests for render_outputs."""

    def test_file_names_per_format(self):
        reports = run_specs(resolve_specs(RunConfig(["ALG_SUITE"], ALGEBRA)))
        summary = {"overall_pass": True, "seed": 0, "build_id": "b", "experiments": []}
        assert set(render_outputs(reports, summary, "json")) == {"summary.json", "ALG_SUITE.json"}
        assert set(render_outputs(reports, summary, "csv")) == {"summary.json", "results.csv"}
        assert set(render_outputs(reports, summary, "html")) == {"summary.json", "report.html"}


# ---------------------------------------------------------------------------
# run_suite exit codes
# ---------------------------------------------------------------------------


class TestRunSuite:
    """Tests for run_suite."""

    def test_pass_writes_reports(self, tmp_path):
        code = run_suite(RunConfig(["ALG_SUITE"], ALGEBRA, out=tmp_path))
        assert code == EXIT_PASS
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["overall_pass"] is True
        assert summary["experiments"][0]["id"] == "ALG_SUITE"
        report = json.loads((tmp_path / "ALG_SUITE.json").read_text())
        assert report["overall_pass"] is True

    def test_negative_control_fails(self, tmp_path):
        config = RunConfig(["THM_MAIN"], SMALL | {"negative_control": True}, output_format="csv", out=tmp_path)
        assert run_suite(config) == EXIT_FAIL
        assert (tmp_path / "results.csv").exists()

    def test_invalid_config(self, tmp_path):
        assert run_suite(RunConfig(["DUFRESNE"], {"mu": -1.0}, out=tmp_path)) == EXIT_CONFIG
        assert list(tmp_path.iterdir()) == []

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run_suite(RunConfig(["ALG_SUITE"], ALGEBRA, out=blocker)) == EXIT_CONFIG

    def test_stdout_json(self, capsys):
        assert run_suite(RunConfig(["ALG_SUITE"], ALGEBRA)) == EXIT_PASS
        document = json.loads(capsys.readouterr().out)
        assert set(document) == {"summary", "reports"}
        assert document["reports"][0]["spec"]["id"] == "ALG_SUITE"

    def test_workers_use_process_pool(self, tmp_path):
        with mock.patch("pathlaw.runner.ProcessPoolExecutor") as pool_cls, mock.patch(
            "pathlaw.runner.run_specs", return_value=[]
        ) as runner:
            run_suite(RunConfig(["ALG_SUITE"], ALGEBRA, out=Path(tmp_path), workers=3))
        pool_cls.assert_called_once_with(max_workers=3)
        assert runner.call_args.args[1] is pool_cls.return_value.__enter__.return_value

    def test_json_reports_identical_across_runs(self, tmp_path):
        """Apart from timings, a report depends only on the spec."""
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            run_suite(RunConfig(["QREV"], SMALL, out=out))
        a = json.loads((first / "QREV.json").read_text())
        b = json.loads((second / "QREV.json").read_text())
        a.pop("wall_time_s")
        b.pop("wall_time_s")
        assert a == b

    def test_all_ids_identical_across_worker_counts(self, tmp_path):
        """`run --id all` writes the same JSON at 1 and 8 workers, wall times aside."""
        overrides = SMALL | ALGEBRA | {"seed": 42, "truncation_T": 5.0, "dufresne_steps_per_unit": 32}
        inline, pooled = tmp_path / "w1", tmp_path / "w8"
        codes = [
            run_suite(RunConfig(["all"], overrides, out=inline, workers=1)),
            run_suite(RunConfig(["all"], overrides, out=pooled, workers=8)),
        ]
        assert codes[0] == codes[1]

        names = sorted(p.name for p in inline.glob("*.json"))
        assert names == sorted(p.name for p in pooled.glob("*.json"))
        assert len(names) == len(ExperimentId) + 1
        for name in names:
            a = WALL_TIME.sub(b"", (inline / name).read_bytes())
            b = WALL_TIME.sub(b"", (pooled / name).read_bytes())
            assert a == b, name
