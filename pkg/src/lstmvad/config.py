"""Run configuration: one JSON document covering every module, plus ``--set`` overrides.

Layout (all sections optional; omitted keys take their defaults)::

    {
      "seed": 0,
      "output_dir": "outputs",
      "methods": ["lstmvae", "encdecad", "ae", "osvm", "random"],
      "layouts": ["raw17", "features4"],
      "benchmark": {...BenchmarkConfig fields...},
      "model": {...LstmVaeConfig fields except input_dim...},
      "svr": {...SvrConfig fields...},
      "detector": {"svr_noise_std": 0.0, "op_percentile": 95.0},
      "osvm": {...}, "ae": {...}, "encdecad": {...},
      "eval": {...EvalConfig fields...}
    }

The master ``seed`` drives the benchmark, the fold splits and every model.
Unknown keys are rejected.
"""
import copy
import json
from dataclasses import fields

from .baselines import AeConfig, EncDecConfig, OsvmConfig
from .evaluation import METHODS, EvalConfig
from .model import LstmVaeConfig
from .synth import BenchmarkConfig
from .threshold import SvrConfig

LAYOUT_CHOICES = ("raw17", "features4")

_SECTIONS = {
    "benchmark": BenchmarkConfig,
    "model": LstmVaeConfig,
    "svr": SvrConfig,
    "osvm": OsvmConfig,
    "ae": AeConfig,
    "encdecad": EncDecConfig,
    "eval": EvalConfig,
}
_DERIVED = {"seed", "input_dim"}


class ConfigError(ValueError):
    pass


def _defaults(cls):
    out = {}
    for f in fields(cls):
        if f.name in _DERIVED:
            continue
        v = f.default
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def default_config():
    cfg = {
        "seed": 0,
        "output_dir": "outputs",
        "methods": list(METHODS),
        "layouts": list(LAYOUT_CHOICES),
        "detector": {"svr_noise_std": 0.0, "op_percentile": 95.0},
    }
    for name, cls in _SECTIONS.items():
        cfg[name] = _defaults(cls)
    return cfg


class RunConfig:
    """Validated configuration document."""

    def __init__(self, data=None):
        merged = default_config()
        _merge(merged, data or {}, "")
        self.data = merged
        self.validate()

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self):
        return int(self.data["seed"])

    def validate(self):
        unknown = set(self.data["methods"]) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        bad = set(self.data["layouts"]) - set(LAYOUT_CHOICES)
        if bad:
            raise ConfigError(f"unknown layouts {sorted(bad)}")
        try:
            self.benchmark()
            self.model(1)
            self.svr()
            self.eval()
            for m in ("osvm", "ae", "encdecad"):
                self.method_overrides(m)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def benchmark(self):
        return BenchmarkConfig(seed=self.seed, **self.data["benchmark"])

    def model(self, input_dim):
        return LstmVaeConfig(input_dim=input_dim, seed=self.seed, **self.data["model"])

    def svr(self):
        return SvrConfig(**self.data["svr"])

    def eval(self):
        return EvalConfig(seed=self.seed, **self.data["eval"])

    def method_overrides(self, name):
        """Per-method config fields for evaluation.method_factory."""
        if name == "lstmvae":
            out = dict(self.data["model"])
            out["svr"] = dict(self.data["svr"])
            out["svr_noise_std"] = self.data["detector"]["svr_noise_std"]
            return out
        if name in ("osvm", "ae", "encdecad"):
            section = dict(self.data[name])
            _SECTIONS[name](**section)  # validate
            return section
        return {}

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())


def _merge(base, update, where):
    if not isinstance(update, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    for key, value in update.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            _merge(base[key], value, path)
        else:
            base[key] = value


def load_config(path=None, overrides=()):
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data = copy.deepcopy(data)
    for item in overrides:
        apply_override(data, item)
    return RunConfig(data)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(data, item):
    """Apply ``section.key=value`` (value parsed as JSON, else kept as a string)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = data
    defaults = default_config()
    for p in parts[:-1]:
        if not isinstance(defaults, dict) or p not in defaults or not isinstance(defaults[p], dict):
            raise ConfigError(f"unknown config key {key!r}")
        defaults = defaults[p]
        node = node.setdefault(p, {})
    if parts[-1] not in defaults:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(text)
    return data
