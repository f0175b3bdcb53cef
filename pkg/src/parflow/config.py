"""Experiment configs (INI with JSON-encoded values, or plain JSON) and run manifests."""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__

MODULES = ("morrey", "riesz", "adams", "pde-energy", "sde", "kolmogorov", "suite")


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated precondition."""


@dataclass
class ExperimentConfig:
    module: str
    operation: str = "run"
    params: dict = field(default_factory=dict)
    coeffs: str | None = None
    fields: dict = field(default_factory=dict)
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if self.module not in MODULES:
            raise ConfigError(f"module must be one of {', '.join(MODULES)}; got {self.module!r}")
        self.validate()

    # preconditions shared by all operations
    _POSITIVE = ("h", "T", "dt", "dx", "rho0", "eps")
    _AT_LEAST_ONE = ("M", "nt", "p", "q", "n")

    def validate(self) -> None:
        p = self.params
        for k in self._POSITIVE:
            if k in p and not p[k] > 0:
                raise ConfigError(f"{k} > 0 violated ({k} = {p[k]!r})")
        for k in self._AT_LEAST_ONE:
            if k in p and not p[k] >= 1:
                raise ConfigError(f"{k} >= 1 violated ({k} = {p[k]!r})")
        if "d" in p and not (isinstance(p["d"], int) and p["d"] >= 2):
            raise ConfigError(f"integer d >= 2 violated (d = {p['d']!r})")
        if "nx" in p and not p["nx"] >= 2:
            raise ConfigError(f"nx >= 2 violated (nx = {p['nx']!r})")
        if "lam" in p and not p["lam"] >= 0:
            raise ConfigError(f"lambda >= 0 violated (lam = {p['lam']!r})")
        if "delta" in p and not 0 < p["delta"] <= 1:
            raise ConfigError(f"0 < delta <= 1 violated (delta = {p['delta']!r})")
        if "kappa" in p and "d" in p and not p["kappa"] > (p["d"] + 2) / 2:
            raise ConfigError(f"kappa > (d + 2) / 2 violated (kappa = {p['kappa']!r}, d = {p['d']!r})")
        if "p" in p and "q" in p and self.module == "adams" and not 1 < p["q"] < p["p"]:
            raise ConfigError(f"1 < q < p violated (q = {p['q']!r}, p = {p['p']!r})")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer (seed = {self.seed!r})")

    # serialisation --------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {"module", "operation", "params", "coeffs", "fields", "output_dir", "seed"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "module" not in obj:
            raise ConfigError("config needs a module")
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["run"] = {"module": json.dumps(self.module), "operation": json.dumps(self.operation),
                     "coeffs": json.dumps(self.coeffs), "output_dir": json.dumps(self.output_dir),
                     "seed": json.dumps(self.seed)}
        cp["params"] = {k: json.dumps(v) for k, v in sorted(self.params.items())}
        cp["fields"] = {k: json.dumps(v) for k, v in sorted(self.fields.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
            run = {k: json.loads(v) for k, v in cp["run"].items()} if cp.has_section("run") else {}
            params = {k: json.loads(v) for k, v in cp["params"].items()} if cp.has_section("params") else {}
            fields = {k: json.loads(v) for k, v in cp["fields"].items()} if cp.has_section("fields") else {}
        except (configparser.Error, json.JSONDecodeError) as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        return cls.from_dict({**run, "params": params, "fields": fields})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"unreadable config: {exc}") from exc
        return cls.from_ini(text)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() if path.suffix == ".json" else self.to_ini())
        return path

    @property
    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    version: str = __version__
    started: float = field(default_factory=time.time)
    finished: float | None = None
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "running"

    def finish(self, status: str) -> None:
        self.finished = time.time()
        self.status = status

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path
