import json

import numpy as np
import pytest

from parflow import io
from parflow.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, config_to_argv, main, parse_polynomial
from parflow.config import ExperimentConfig
from parflow.grid import GridField, SpaceTimeGrid


def _report(path):
    return json.loads(path.read_text())


@pytest.fixture
def field_file(tmp_path):
    g = SpaceTimeGrid.box((0, 0.5), (-1, 1), 8, 16, 2)
    f = GridField.from_function(g, lambda t, xs: np.exp(-(xs[0] ** 2 + xs[1] ** 2)) + 0 * t)
    return io.save_field(f, tmp_path / "f.pfld")


def test_morrey_compute_only(tmp_path, field_file):
    out = tmp_path / "m.json"
    assert main(["morrey", "--field", str(field_file), "--rho", "0.5", "--out", str(out),
                 "--output-dir", str(tmp_path)]) == EXIT_PASS
    rep = _report(out)
    assert rep["passed"] is None and rep["result"]["value"] > 0 and len(rep["config_hash"]) == 16
    assert (tmp_path / "manifest.json").exists()


def test_morrey_needs_rho_or_beta(tmp_path, field_file):
    assert main(["morrey", "--field", str(field_file), "--output-dir", str(tmp_path)]) == EXIT_CONFIG


def test_missing_input_and_invalid_values(tmp_path):
    assert main(["morrey", "--field", str(tmp_path / "nope.pfld"), "--rho", "1"]) == EXIT_CONFIG
    assert main(["sde", "jac-moment", "--kappa", "1.5", "--output-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["sde", "simulate", "--h", "-0.1", "--output-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main(["suite", "nonexistent", "--output-dir", str(tmp_path)]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG


def test_kolmogorov_pass_and_fail(tmp_path):
    ok = tmp_path / "ok.json"
    bad = tmp_path / "bad.json"
    common = ["--radix", "4,2", "--lattice-depth", "4", "--output-dir", str(tmp_path)]
    np.save(tmp_path / "t.npy", np.broadcast_to((np.arange(257) / 256)[:, None], (257, 17)))
    args = ["kolmogorov", "certify", "--values", str(tmp_path / "t.npy")] + common
    assert main(args + ["--alpha", "2.0", "--out", str(ok)]) == EXIT_PASS
    assert _report(ok)["result"]["N_measured"] == pytest.approx(1.0)
    assert main(args + ["--alpha", "2.1", "--out", str(bad)]) == EXIT_FAIL
    assert _report(bad)["result"]["witness"]["axis"] == 0


def test_kolmogorov_extend(tmp_path):
    out = tmp_path / "e.json"
    assert main(["kolmogorov", "extend", "--example", "linear", "--radix", "2", "--alpha", "1.0",
                 "--query", "0.3333333333", "--out", str(out), "--output-dir", str(tmp_path)]) == EXIT_PASS
    assert _report(out)["result"]["within"]


def test_sde_simulate_writes_ensemble(tmp_path):
    out = tmp_path / "s.json"
    assert main(["sde", "simulate", "--M", "8", "--h", "0.05", "--T", "0.2", "--output-dir", str(tmp_path),
                 "--out", str(out)]) == EXIT_PASS
    arr = io.ensemble_arrays_from_bytes((tmp_path / "ensemble.pfld").read_bytes())
    assert arr["x_paths"].shape == (8, 5, 2)
    assert "ensemble" in json.loads((tmp_path / "manifest.json").read_text())["outputs"][1]


def test_sde_poly_ball(tmp_path):
    out = tmp_path / "p.json"
    assert main(["sde", "poly-ball", "--poly", "1.0@1,0", "--out", str(out), "--output-dir", str(tmp_path)]) == 0
    assert _report(out)["result"]["ratio"] == pytest.approx(4 / np.pi, rel=0.01)


def test_parse_polynomial():
    P = parse_polynomial("1.0@1,0;0.5@0,2;2@", 2)
    assert P(None, np.array([[2.0, 3.0]]))[0] == 2.0 + 4.5 + 2.0


def test_config_file_drives_run(tmp_path):
    cfg = ExperimentConfig("kolmogorov", "certify", {"example": "linear", "alpha": 1.0, "lattice_depth": 5},
                           output_dir=str(tmp_path / "runs"), seed=3)
    hashes = []
    for name in ("c.ini", "c.json"):
        path = cfg.save(tmp_path / name)
        assert main(["--config", str(path)]) == EXIT_PASS
        rep = _report(tmp_path / "runs" / "report.json")
        # the report stores the resolved config (file values plus defaults)
        resolved = ExperimentConfig.from_dict(rep["config"])
        assert resolved.hash == rep["config_hash"] and resolved.seed == 3
        assert resolved.params["lattice_depth"] == 5 and rep["result"]["N_measured"] == 1.0
        hashes.append(rep["config_hash"])
    assert hashes[0] == hashes[1]
    assert "--lattice-depth" in config_to_argv(cfg)


def test_bad_config_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"module": "sde", "params": {"h": 0}}')
    assert main(["--config", str(p)]) == EXIT_CONFIG


def test_suite_trivial_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["suite", "trivial", "--no-plots", "--output-dir", str(a)]) == EXIT_PASS
    assert main(["suite", "trivial", "--no-plots", "--output-dir", str(b)]) == EXIT_PASS
    assert "suite trivial: PASS" in capsys.readouterr().out
    for name in ("results.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
