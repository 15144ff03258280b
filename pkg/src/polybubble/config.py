"""Run configuration: schema validation, defaults and derived objects."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .bubbles import CouplingData
from .norms import SampleSpec
from .potentials import PotentialPair, builtin_potential
from .quadrature import QuadratureBudget

STAGES = ("constants", "residual-scaling", "correct", "reduce", "pohozaev")

DEFAULTS = {
    "kappa": None,
    "k_list": [6, 8, 12, 16, 24],
    "t": None,
    "delta": None,
    "stages": list(STAGES),
    "quadrature": {"n_samples": 32768, "seed": 0, "block_size": 4096, "workers": 1, "chart_fraction": 0.2,
                   "qmc": True},
    "sample": {"sector": True},
    "residual": {"refine": 4, "slope_threshold": -0.95, "refine_tolerance": 0.02},
    "correction": {"k_list": [6, 8, 12], "n_samples": 32768, "basis_samples": 32768, "max_iter": 1,
                   "slope_threshold": -0.95},
    "reduce": {"seed": None, "seed_factor": 1.2, "half_width": 0.2, "t_range": None, "tol": 1e-10,
               "resolution": 16, "form": "gradient"},
    "pohozaev": {"rhos": [0.3, 0.35, 0.4], "lam": 2.0, "shift": 0.2, "n_samples": 262144, "axis": 2,
                 "kappa_offset": 0.5, "pass_sigma": 5.0, "control_sigma": 10.0, "k_list": [6, 8, 12],
                 "concentration_tolerance": 0.15},
}


class ConfigError(ValueError):
    pass


def schema() -> dict:
    return json.loads(resources.files("polybubble").joinpath("schemas/config.schema.json").read_text())


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass
class RunConfig:
    doc: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            jsonschema.validate(raw, schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config rejected: {exc.message} at {list(exc.absolute_path)}") from None
        doc = _merge(DEFAULTS, raw)
        cfg = cls(doc)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def check(self):
        """Preconditions of the downstream modules, checked up front."""
        try:
            self.coupling()
            self.potential()
            self.budget()
            SampleSpec(**self.doc["sample"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        y0 = self.doc["potential"].get("params", {}).get("y0_2")
        if y0 is not None and len(y0) != self.N - 2:
            raise ConfigError("potential y0_2 must have N-2 entries")

    @property
    def N(self) -> int:
        return int(self.doc["N"])

    def coupling(self) -> CouplingData:
        return CouplingData.from_beta(float(self.doc["beta"]), self.N, self.doc.get("kappa"))

    def potential(self) -> PotentialPair:
        p = self.doc["potential"]
        return builtin_potential(p["family"], p.get("params", {}), self.N)

    def budget(self, n_samples: int | None = None) -> QuadratureBudget:
        q = dict(self.doc["quadrature"])
        if n_samples is not None:
            q["n_samples"] = int(n_samples)
        return QuadratureBudget(**q)

    def sample_spec(self) -> SampleSpec:
        return SampleSpec(**self.doc["sample"])

    def override(self, seed: int | None = None, workers: int | None = None) -> "RunConfig":
        doc = copy.deepcopy(self.doc)
        if seed is not None:
            doc["quadrature"]["seed"] = int(seed)
        if workers is not None:
            doc["quadrature"]["workers"] = int(workers)
        return RunConfig(doc)

    @property
    def hash(self) -> str:
        return config_hash(self.doc)
