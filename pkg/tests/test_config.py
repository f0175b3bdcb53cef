import json

import pytest
from hypothesis import given, strategies as st

from parflow.config import ConfigError, ExperimentConfig, RunManifest, file_checksum

finite = st.floats(0.001, 1e6, allow_nan=False)


@given(h=finite, T=finite, M=st.integers(1, 10**6), seed=st.integers(0, 2**31), lam=st.floats(0, 10),
       name=st.text("abc-_", min_size=1, max_size=8))
def test_ini_and_json_round_trip(h, T, M, seed, lam, name):
    cfg = ExperimentConfig("sde", "jac-moment", {"h": h, "T": T, "M": M, "lam": lam, "tag": name},
                           coeffs="singular:0.1,2.5", fields={"ensemble": "e.pfld"}, seed=seed)
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg
    assert ExperimentConfig.from_dict(json.loads(cfg.to_json())) == cfg
    assert ExperimentConfig.from_ini(cfg.to_ini()).hash == cfg.hash


def test_hash_depends_on_content():
    a = ExperimentConfig("morrey", params={"p": 2.5})
    assert a.hash == ExperimentConfig("morrey", params={"p": 2.5}).hash
    assert a.hash != ExperimentConfig("morrey", params={"p": 3.0}).hash
    assert len(a.hash) == 16


@pytest.mark.parametrize("module,params,seed,fragment", [
    ("sde", {"h": -0.1}, 0, "h > 0"),
    ("sde", {"M": 0}, 0, "M >= 1"),
    ("sde", {"d": 1}, 0, "d >= 2"),
    ("sde", {"lam": -1.0}, 0, "lambda >= 0"),
    ("sde", {"delta": 1.5}, 0, "delta <= 1"),
    ("sde", {"d": 2, "kappa": 2}, 0, "kappa > (d + 2) / 2"),
    ("adams", {"p": 2.0, "q": 2.5}, 0, "1 < q < p"),
    ("morrey", {"nx": 1}, 0, "nx >= 2"),
    ("morrey", {}, -1, "seed"),
    ("nonsense", {}, 0, "module must be one of"),
])
def test_validation_messages(module, params, seed, fragment):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(module, params=params, seed=seed)
    assert fragment in str(info.value)


def test_unknown_keys_and_unreadable_text():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"module": "sde", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("[params]\nh = not json\n[run]\nmodule = \"sde\"\n")


def test_save_load_and_manifest(tmp_path):
    cfg = ExperimentConfig("kolmogorov", "certify", {"alpha": 0.5})
    for name in ("c.ini", "c.json"):
        assert ExperimentConfig.load(cfg.save(tmp_path / name)) == cfg
    m = RunManifest(cfg.hash, inputs={"c.ini": file_checksum(tmp_path / "c.ini")})
    m.finish("pass")
    back = json.loads(m.write(tmp_path).read_text())
    assert back["config_hash"] == cfg.hash and back["status"] == "pass" and back["finished"] >= back["started"]
