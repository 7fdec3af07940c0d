"""Experiment configuration: a single JSON document checked against a schema.

The schema ships as ``config.schema.json`` next to this module. Besides the
schema, :func:`validate` checks the cross-field rules the schema cannot
express (mode / hyper-prior pairing, fixed hyper-parameters the mode needs).
Failures raise :class:`ConfigError` carrying the offending field path.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError, DomainError
from .gibbs import GibbsConfig
from .model import Fixed, PowerRule, truncation_level
from .prior import HyperParamMode, hyper_from_dict
from .sequences import CoefficientVector, TruthSpec, make_truth

__all__ = ["ExperimentConfig", "load_config", "validate", "schema", "merge"]

_HYPER_FOR_MODE = {"tau": "trunc_invgamma", "alpha": "trunc_exp", "both": "product"}


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("pexpbayes").joinpath("config.schema.json").read_text()
    return json.loads(text)


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate(doc: dict) -> None:
    """Raise :class:`ConfigError` unless ``doc`` is a valid configuration."""
    v = jsonschema.Draft202012Validator(schema())
    errs = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        raise ConfigError(f"config field {_path(e)}: {e.message}", field=_path(e))
    mode = doc.get("mode", "frozen")
    prior = doc.get("prior", {})
    hyper = doc.get("hyper")
    if mode in _HYPER_FOR_MODE:
        if hyper is None:
            raise ConfigError(f"config field hyper: mode {mode!r} needs a hyper-prior", field="hyper")
        if hyper["kind"] != _HYPER_FOR_MODE[mode]:
            raise ConfigError(f"config field hyper.kind: mode {mode!r} pairs with "
                              f"{_HYPER_FOR_MODE[mode]!r}, got {hyper['kind']!r}", field="hyper.kind")
    if mode in ("frozen", "tau") and "alpha" not in prior:
        raise ConfigError(f"config field prior.alpha: required when mode is {mode!r}", field="prior.alpha")
    if mode in ("frozen", "alpha") and "tau" not in prior:
        raise ConfigError(f"config field prior.tau: required when mode is {mode!r}", field="prior.tau")
    mc = doc.get("mcmc", {})
    if "iters" in mc and "burnin" in mc and mc["burnin"] >= mc["iters"]:
        raise ConfigError("config field mcmc.burnin: must be smaller than mcmc.iters", field="mcmc.burnin")
    if doc.get("method") == "EB_conjugate" and prior.get("p") != 2:
        raise ConfigError("config field method: EB_conjugate needs prior.p = 2", field="method")


def merge(base: dict, overrides: dict | None) -> dict:
    """Recursive dictionary update returning a new document."""
    out = copy.deepcopy(base)
    for k, v in (overrides or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Validated configuration with typed accessors.

    ``doc`` is the raw document; everything else is derived from it.
    """

    doc: dict = field(default_factory=dict)

    def __post_init__(self):
        validate(self.doc)
        try:
            self.gibbs_config()
            self.rule()
        except DomainError as e:
            raise ConfigError(f"config: {e}") from e

    @classmethod
    def from_dict(cls, doc: dict, overrides: dict | None = None) -> "ExperimentConfig":
        return cls(merge(doc, overrides))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)

    # accessors -----------------------------------------------------------

    @property
    def name(self) -> str:
        return self.doc.get("name", "custom")

    @property
    def n_list(self) -> list[float]:
        n = self.doc.get("n", 200)
        return [float(v) for v in (n if isinstance(n, list) else [n])]

    @property
    def p(self) -> float:
        return float(self.doc["prior"]["p"])

    @property
    def method(self) -> str:
        return self.doc.get("method", "HB")

    @property
    def seed(self) -> int:
        return int(self.doc.get("seed", 0))

    @property
    def replications(self) -> int:
        return int(self.doc.get("replications", 1))

    @property
    def output_dir(self) -> Path:
        return Path(self.doc.get("output_dir", "out"))

    @property
    def chain_logs(self) -> bool:
        return bool(self.doc.get("chain_logs", False))

    def rule(self):
        r = self.doc.get("L_rule", {"kind": "fixed", "L": 200})
        if r["kind"] == "fixed":
            if "L" not in r:
                raise DomainError("fixed truncation rule needs L")
            return Fixed(int(r["L"]))
        if "exponent" not in r:
            raise DomainError("power truncation rule needs exponent")
        return PowerRule(float(r["exponent"]))

    def L(self, n: float) -> int:
        return truncation_level(n, self.rule())

    def truth(self, L: int) -> CoefficientVector:
        t = dict(self.doc.get("truth", {"kind": "power_sine", "a": 2.25, "omega": 10.0}))
        kind = t.pop("kind")
        return make_truth(TruthSpec(kind, L, **t))

    def mode(self) -> HyperParamMode:
        prior = self.doc["prior"]
        return HyperParamMode(self.doc.get("mode", "frozen"), alpha=prior.get("alpha"), tau=prior.get("tau"))

    def hyper(self, n: float):
        if self.doc.get("mode", "frozen") == "frozen":
            return None
        return hyper_from_dict(self.doc["hyper"], n, self.p, self.doc["prior"].get("alpha"))

    def gibbs_config(self) -> GibbsConfig:
        return GibbsConfig(**self.doc.get("mcmc", {}))

    def grid_kw(self) -> dict:
        g = dict(self.doc.get("grid", {}))
        if "alpha_bounds" in g:
            g["alpha_bounds"] = tuple(g["alpha_bounds"])
        return g


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path} not found", field="<file>") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}", field="<file>") from e
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object", field="<root>")
    return ExperimentConfig.from_dict(doc, overrides)
