"""Experiment configuration: TOML (or JSON) files with field-level validation.

Schema (all top-level keys except ``experiment`` and ``seed`` have defaults)::

    experiment = "law_self"          # one of EXPERIMENTS
    seed = 42                        # required, 64-bit; no implicit entropy
    n = 100000                       # horizon / orbit length
    ensemble = 20000                 # trajectories
    output_dir = "results"
    workers = 1

    [map]
    family = "doubling"              # doubling | tent | logistic | pomeau_manneville | piecewise_linear
    params = []

    [grid]                           # s values for law comparisons
    s_min = -2.0
    s_max = 6.0
    step = 0.25

    [estimator]
    bins = 100
    m = 1024
    samples_per_cell = 100
    burn_in = 1000

    [options]                        # experiment-specific, see OPTION_DEFAULTS
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .maps import FAMILIES, MapSpec, make_map

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("law_fixed", "law_self", "density", "tower_census", "recurrence_scan",
               "correlation_scan", "blocking_diagnostic", "singularity_scan")

OPTION_DEFAULTS = {
    "law_fixed": {"x_ref": None},
    "law_self": {"density_source": "auto", "target_samples": 0},
    "density": {"method": "birkhoff", "burn_in": 10_000},
    "tower_census": {"base": [0.0, 0.5], "r_max": 200, "regularity_pairs": 0, "fit_from": None},
    "recurrence_scan": {"set": "cal_E", "ks": [1, 2, 5, 10], "eps": 1e-3, "samples": 1_000_000,
                        "psi": 1.0, "rho": 0.25, "inner_samples": 1000},
    "correlation_scan": {"observable_1": "identity", "observable_2": "identity",
                         "lags": [1, 2, 3, 4, 5, 6], "samples": 1_000_000,
                         "holder_exponent": 1.0, "mollifier_eta": 1.0},
    "blocking_diagnostic": {"mode": "fixed_reference", "v": [-1.0, 0.0, 1.0], "p": None},
    "singularity_scan": {"mu_samples": 10_000_000, "intervals": 1000, "anchor": "random",
                         "min_count": 400, "quantile": 0.99},
}

_SECTIONS = {
    "map": {"family": "doubling", "params": []},
    "grid": {"s_min": -2.0, "s_max": 6.0, "step": 0.25},
    "estimator": {"bins": 100, "m": 1024, "samples_per_cell": 100, "burn_in": 1000},
}
_TOP = {"experiment", "seed", "n", "ensemble", "output_dir", "workers", "options"} | set(_SECTIONS)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    map: dict = field(default_factory=lambda: dict(_SECTIONS["map"]))
    n: int = 100_000
    ensemble: int = 20_000
    grid: dict = field(default_factory=lambda: dict(_SECTIONS["grid"]))
    estimator: dict = field(default_factory=lambda: dict(_SECTIONS["estimator"]))
    options: dict = field(default_factory=dict)
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed", "an explicit integer seed is required")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must fit in 64 unsigned bits")
        for name in ("n", "ensemble", "workers"):
            _positive_int(name, getattr(self, name))
        for sec, defaults in _SECTIONS.items():
            merged = dict(defaults)
            given = getattr(self, sec) or {}
            for key in given:
                if key not in defaults:
                    raise ConfigError(f"{sec}.{key}", "unknown key")
            merged.update(given)
            setattr(self, sec, merged)
        if self.map["family"] not in FAMILIES:
            raise ConfigError("map.family", f"must be one of {', '.join(FAMILIES)}")
        try:
            self.map_spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError("map.params", str(exc)) from exc
        for key in ("bins", "m", "samples_per_cell"):
            _positive_int(f"estimator.{key}", self.estimator[key])
        if not isinstance(self.estimator["burn_in"], int) or self.estimator["burn_in"] < 0:
            raise ConfigError("estimator.burn_in", "must be a nonnegative integer")
        g = self.grid
        if not g["step"] > 0:
            raise ConfigError("grid.step", "must be positive")
        if g["s_max"] < g["s_min"]:
            raise ConfigError("grid.s_max", "must be >= grid.s_min")
        defaults = OPTION_DEFAULTS[self.experiment]
        for key in self.options:
            if key not in defaults:
                raise ConfigError(f"options.{key}", f"not an option of {self.experiment}")
        self.options = {**defaults, **self.options}

    def map_spec(self) -> MapSpec:
        return make_map(self.map["family"], self.map["params"])

    def s_grid(self) -> np.ndarray:
        g = self.grid
        count = int(np.floor((g["s_max"] - g["s_min"]) / g["step"] + 1e-9)) + 1
        return g["s_min"] + g["step"] * np.arange(count)

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / f"{self.experiment}-{self.seed}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentConfig":
        data = dict(data)
        for key in data:
            if key not in _TOP:
                raise ConfigError(key, "unknown key")
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "experiment" not in data:
            raise ConfigError("experiment", "missing")
        if "seed" not in data:
            raise ConfigError("seed", "missing; pass --seed or set seed in the config")
        return cls(**data)


def _positive_int(name, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(name, "must be a positive integer")


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a ``.toml`` or ``.json`` config file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("<file>", f"cannot parse {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data, **overrides)
