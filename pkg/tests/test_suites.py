import json
import time

import pytest

from parflow import suites


def test_trivial_suite_outputs(tmp_path):
    res = suites.run_suite("trivial", tmp_path / "t")
    assert res.passed, res.summary()
    names = {p.name for p in res.directory.iterdir()}
    assert {"results.csv", "summary.csv", "report.json", "manifest.json"} <= names
    report = json.loads((res.directory / "report.json").read_text())
    assert report["config_hash"] == res.config_hash and report["passed"]
    manifest = json.loads((res.directory / "manifest.json").read_text())
    assert manifest["status"] == "pass" and "results.csv" in manifest["outputs"]
    assert "seconds" not in (res.directory / "results.csv").read_text()


def test_smoke_suite_fast_and_green(tmp_path):
    t0 = time.perf_counter()
    res = suites.run_suite("smoke", tmp_path / "s")
    assert time.perf_counter() - t0 <= 60
    assert res.passed, res.summary()
    assert list(res.directory.glob("plot_*.svg"))


def test_singular_drift_preset(tmp_path):
    res = suites.run_suite("paper-singular-drift", tmp_path / "p", plots=False)
    assert res.passed, res.summary()


def test_unknown_preset(tmp_path):
    with pytest.raises(KeyError, match="available"):
        suites.run_suite("bogus", tmp_path)


def test_parallel_matches_serial(tmp_path, monkeypatch):
    serial = suites.run_suite("trivial", tmp_path / "a", plots=False)
    monkeypatch.setenv("PARFLOW_THREADS", "2")
    assert suites.max_workers() == 2
    par = suites.run_suite("trivial", tmp_path / "b", plots=False)
    assert (serial.directory / "results.csv").read_bytes() == (par.directory / "results.csv").read_bytes()


def test_value_formatting():
    assert suites._fmt(0.1 + 0.2) == "0.30000000000000004"
    assert suites._fmt(True) == "True" and suites._fmt(3) == "3"
    assert suites._jsonable({"a": float("nan")}) == {"a": "nan"}
