"""Tests for pathlaw.report: JSON and CSV rendering, config loading and atomic writes."""

import csv
import io
import json
import math
import os
import stat

import numpy as np
import pytest

from pathlaw.experiments import ExperimentId, ExperimentReport, ExperimentSpec
from pathlaw.report import (
    CSV_COLUMNS,
    check_writable,
    dumps_json,
    load_config,
    report_to_dict,
    reports_to_csv,
    suite_summary,
    to_plain,
    write_atomic,
)
from pathlaw.stattests import TestReport
from pathlaw.util import ConfigError


def _report(experiment_id=ExperimentId.QREV, passed=True):
    tests = [
        TestReport("ks_t", 0.1, 0.25, 100, 100, passed, 0.001),
        TestReport("zero_mean_gap", -0.5, None, 100, 0, True, 3.0, {"se": np.float64(0.2)}),
    ]
    return ExperimentReport(ExperimentSpec(experiment_id), tests, passed, 0.5, {"lhs": {"mean": [1.0], "var": [2.0]}})


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


class TestToPlain:
    """Tests for to_plain."""

    def test_numpy_scalars(self):
        assert to_plain({"a": np.int64(3), "b": np.bool_(True), "c": np.float32(0.5)}) == {
            "a": 3,
            "b": True,
            "c": 0.5,
        }

    def test_non_finite_becomes_null(self):
        assert to_plain([math.nan, math.inf, 1.0]) == [None, None, 1.0]

    def test_arrays_and_tuples(self):
        assert to_plain((np.array([1, 2]), "x")) == [[1, 2], "x"]


class TestJson:
    """Tests for report_to_dict and dumps_json."""

    def test_report_keys(self):
        data = report_to_dict(_report())
        assert set(data) == {"spec", "tests", "overall_pass", "wall_time_s", "sides"}
        assert data["spec"]["id"] == "QREV"
        assert data["tests"][0]["pass"] is True
        assert data["tests"][1]["p_value"] is None

    def test_sorted_and_newline_terminated(self):
        text = dumps_json({"b": 1, "a": 2})
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_float_round_trip(self):
        value = 0.1 + 0.2
        assert json.loads(dumps_json({"v": value}))["v"] == value

    @pytest.mark.parametrize("value", [1.0 / 3.0, 5e-324, 1.7976931348623157e308, -2.0**-1074 * 3])
    def test_floats_parse_back_bit_exact(self, value):
        parsed = json.loads(dumps_json({"v": np.float64(value)}))["v"]
        assert parsed.hex() == float(value).hex()

    def test_summary(self):
        reports = [_report(), _report(ExperimentId.BOUGEROL, passed=False)]
        summary = suite_summary(reports, 5, "build")
        assert summary["overall_pass"] is False
        assert summary["seed"] == 5
        assert [e["id"] for e in summary["experiments"]] == ["QREV", "BOUGEROL"]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


class TestCsv:
    """Tests for reports_to_csv."""

    def test_header_and_rows(self):
        text = reports_to_csv([_report()])
        rows = list(csv.reader(io.StringIO(text, newline="")))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 3
        assert rows[1][:2] == ["QREV", "ks_t"]
        assert rows[1][6] == "true"

    def test_crlf_line_endings(self):
        text = reports_to_csv([_report()])
        assert text.count("\r\n") == 3
        assert "\n" not in text.replace("\r\n", "")

    def test_missing_p_value_is_empty(self):
        rows = list(csv.reader(io.StringIO(reports_to_csv([_report()]), newline="")))
        assert rows[2][3] == ""
        assert json.loads(rows[2][8]) == {"se": 0.2}


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


class TestLoadConfig:
    """Tests for load_config."""

    def test_dashes_normalized(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"n-paths": 5000, "seed": 3, "marginals": [0.5, 1.0]}')
        assert load_config(path) == {"n_paths": 5000, "seed": 3, "marginals": [0.5, 1.0]}

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"bogus": 1}')
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(path, {"seed"})

    @pytest.mark.parametrize("content", ["{not json", "[1, 2]", '{"seed": {"a": 1}}'])
    def test_malformed(self, tmp_path, content):
        path = tmp_path / "run.json"
        path.write_text(content)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.json")


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


class TestWriting:
    """Tests for check_writable and write_atomic."""

    def test_write_atomic(self, tmp_path):
        target = write_atomic(tmp_path / "out.json", "{}\n")
        assert target.read_text() == "{}\n"
        assert stat.S_IMODE(os.stat(target).st_mode) == 0o644
        assert list(tmp_path.glob("*.tmp")) == []

    def test_write_atomic_keeps_crlf(self, tmp_path):
        target = write_atomic(tmp_path / "out.csv", "a\r\nb\r\n")
        assert target.read_bytes() == b"a\r\nb\r\n"

    def test_check_writable_creates_directory(self, tmp_path):
        out = tmp_path / "nested" / "reports"
        check_writable(out)
        assert out.is_dir()
        assert list(out.iterdir()) == []

    @pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
    def test_check_writable_rejects_readonly(self, tmp_path):
        readonly = tmp_path / "ro"
        readonly.mkdir(mode=0o555)
        try:
            with pytest.raises(ConfigError, match="not writable"):
                check_writable(readonly)
        finally:
            readonly.chmod(0o755)

    def test_check_writable_rejects_file(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ConfigError):
            check_writable(blocker)
