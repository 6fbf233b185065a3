import csv
import json

import pytest

from fedtoe.core.settings import SchemeSpec, dump_config
from fedtoe.main import main


def _rows(path):
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _run(command, config_file, out, *extra):
    return main([command, "--config", str(config_file), "--out", str(out), *extra])


class TestAllocate:
    def test_writes_both_plans(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("allocate", config_file, out) == 0
        allocation = _rows(out / "allocation.csv")
        assert len(allocation) == 5
        assert set(allocation[0]) == {"client_id", "d_m", "W_hz", "B_bits", "R_bps", "q"}
        assert sum(float(row["W_hz"]) for row in allocation) <= 2e6 * (1 + 1e-9)
        assert len(_rows(out / "baseline3.csv")) == 5
        summary = _rows(out / "allocation_summary.csv")
        assert [row["scheme"] for row in summary] == ["fedtoe-offline", "baseline3"]
        assert float(summary[0]["objective"]) <= float(summary[1]["objective"])

    def test_tight_delay_is_a_usage_error(self, small_config, configure, tmp_path):
        path = tmp_path / "tight.toml"
        path.write_text(dump_config(configure(small_config, "allocator", tau_max=1e-4)), encoding="utf-8")
        assert _run("allocate", path, tmp_path / "out") == 2

    def test_missing_config(self, tmp_path):
        assert _run("allocate", tmp_path / "absent.toml", tmp_path / "out") == 2


class TestSimulate:
    def test_round_log_and_summary(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("simulate", config_file, out) == 0
        lines = (out / "rounds.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 6 * 4
        first = json.loads(lines[0])
        assert first["round"] == 1
        assert first["scheme"] == "fedtoe-offline"
        assert [row["scheme"] for row in _rows(out / "summary.csv")] == [
            "fedtoe-offline", "baseline1:3", "baseline3", "ideal",
        ]
        assert not (out / "curves.svg").exists()

    def test_scheme_filter_and_seed(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("simulate", config_file, out, "--scheme", "ideal", "--seed", "5") == 0
        summary = _rows(out / "summary.csv")
        assert [row["scheme"] for row in summary] == ["ideal"]
        assert summary[0]["total_delay_s"] == "0"

    def test_infeasible_scheme_is_reported_and_skipped(self, small_config, configure, tmp_path):
        path = tmp_path / "mixed.toml"
        schemes = [SchemeSpec.model_validate("baseline1:50"), SchemeSpec(kind="ideal")]
        path.write_text(dump_config(configure(small_config, "sim", schemes=schemes)), encoding="utf-8")
        out = tmp_path / "out"
        assert _run("simulate", path, out) == 0
        summary = _rows(out / "summary.csv")
        assert [row["scheme"] for row in summary] == ["baseline1:50", "ideal"]
        assert summary[0]["status"].startswith("infeasible")
        assert summary[1]["status"] == "ok"
        assert len((out / "rounds.jsonl").read_text(encoding="utf-8").splitlines()) == 6

    def test_only_infeasible_schemes_is_a_usage_error(self, small_config, configure, tmp_path):
        path = tmp_path / "hopeless.toml"
        schemes = [SchemeSpec.model_validate("baseline1:50")]
        path.write_text(dump_config(configure(small_config, "sim", schemes=schemes)), encoding="utf-8")
        assert _run("simulate", path, tmp_path / "out") == 2

    def test_rerun_is_bit_identical(self, config_file, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        assert _run("simulate", config_file, first) == 0
        assert _run("simulate", config_file, second) == 0
        for name in ("rounds.jsonl", "summary.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()


class TestBound:
    def test_terms_next_to_the_observed_norm(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("bound", config_file, out) == 0
        rows = _rows(out / "bound_terms.csv")
        bounds = {row["bound"] for row in rows}
        assert {"observed", "theorem1"} <= bounds
        observed = next(float(row["value"]) for row in rows if row["bound"] == "observed")
        total = next(float(r["value"]) for r in rows if r["bound"] == "theorem1" and r["term"] == "total")
        assert total >= observed

    def test_bounds_a_saved_allocation(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("allocate", config_file, out) == 0
        assert _run("bound", config_file, out, "--allocation", str(out / "allocation.csv")) == 0
        rows = _rows(out / "bound_terms.csv")
        assert {row["scheme"] for row in rows} == {"allocation"}
        observed = next(float(row["value"]) for row in rows if row["bound"] == "observed")
        total = next(float(r["value"]) for r in rows if r["bound"] == "theorem1" and r["term"] == "total")
        assert total >= observed

    def test_missing_allocation_file(self, config_file, tmp_path):
        assert _run("bound", config_file, tmp_path / "out", "--allocation", str(tmp_path / "absent.csv")) == 2


class TestSweep:
    def test_one_directory_per_value(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("sweep", config_file, out, "--scheme", "fedtoe-offline") == 0
        rows = _rows(out / "sweep.csv")
        assert [(row["value"], row["rounds"]) for row in rows] == [("0.05", "6"), ("0.1", "3")]
        assert all(row["status"] == "ok" for row in rows)
        assert (out / "tau_max_0.05" / "rounds.jsonl").exists()
        assert (out / "tau_max_0.1" / "summary.csv").exists()


@pytest.mark.slow
class TestVerify:
    def test_report_written(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert _run("verify", config_file, out) == 0
        report = (out / "verify_report.txt").read_text(encoding="utf-8")
        assert report.startswith("# fedtoe verification: PASS")

    def test_rerun_report_is_bit_identical(self, config_file, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        assert _run("verify", config_file, first) == 0
        assert _run("verify", config_file, second) == 0
        assert (first / "verify_report.txt").read_bytes() == (second / "verify_report.txt").read_bytes()
