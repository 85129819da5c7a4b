"""Experiment configuration: strict JSON schema, presets, manifests.

Configs are plain JSON so reproduction recipes stay diffable.  Unknown
keys are rejected everywhere.  Presets ship as data files under
``subswap/presets`` and are loaded by name.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources

import jsonschema

from .estimation import CompressorSpec, Scenario

CONFIG_SCHEMA_ID = "subswap-config-v1"
PRESETS = ("paper-mean", "paper-cov")

_COMPLEX = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "model", "n", "snapshots", "snr_grid_db",
                 "trials", "seed", "arrays"],
    "properties": {
        "schema": {"const": CONFIG_SCHEMA_ID},
        "model": {"enum": ["mean", "covariance"]},
        "n": {"type": "integer", "minimum": 2},
        "thetas": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
        "amplitudes": {"type": "array", "items": _COMPLEX, "minItems": 2, "maxItems": 2},
        "weight_cov": {
            "type": "array",
            "items": {"type": "array", "items": _COMPLEX, "minItems": 2, "maxItems": 2},
            "minItems": 2,
            "maxItems": 2,
        },
        "snapshots": {"type": "integer", "minimum": 1},
        "snr_grid_db": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["start", "stop", "step"],
                    "properties": {
                        "start": {"type": "number"},
                        "stop": {"type": "number"},
                        "step": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["values"],
                    "properties": {
                        "values": {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": 1,
                        }
                    },
                },
            ]
        },
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "compressor": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["identity", "coprime", "random"]},
                "m1": {"type": "integer", "minimum": 1},
                "m2": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "arrays": {
            "type": "array",
            "items": {"enum": ["dense", "compressed"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "events": {
            "type": "array",
            "items": {"enum": ["F", "G"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "mi_event": {"enum": ["F", "G"]},
        "ml_criterion": {"enum": ["stochastic", "deterministic"]},
        "threshold_multiplier": {"type": "number", "exclusiveMinimum": 1},
        "threshold_tolerance_db": {"type": "number", "exclusiveMinimum": 0},
        "threshold_source": {"enum": ["mse", "sigma_t"]},
        "mc_trials": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


def load_preset(name):
    """The raw JSON dict of a shipped preset."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    path = resources.files("subswap.presets") / (name.replace("-", "_") + ".json")
    return json.loads(path.read_text())


def validate_config(raw):
    """Schema-validate and normalize a raw config dict.

    Returns the effective config with defaults filled in; every downstream
    consumer works off this dict, and its canonical serialization is what
    gets hashed into the run manifest.
    """
    try:
        jsonschema.validate(raw, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    cfg = dict(raw)
    model = cfg["model"]
    if model == "mean" and "amplitudes" not in cfg:
        raise ConfigError("mean model requires amplitudes")
    if model == "covariance" and "weight_cov" not in cfg:
        raise ConfigError("covariance model requires weight_cov")
    if "compressed" in cfg["arrays"] and "compressor" not in cfg:
        raise ConfigError("arrays include 'compressed' but no compressor given")
    comp = cfg.get("compressor")
    if comp is not None:
        kind = comp["kind"]
        if kind == "coprime" and not ("m1" in comp and "m2" in comp):
            raise ConfigError("coprime compressor requires m1 and m2")
        if kind == "random" and not ("m" in comp and "seed" in comp):
            raise ConfigError("random compressor requires m and seed")
    cfg.setdefault("thetas", [0.0, math.pi / cfg["n"]])
    cfg.setdefault("events", ["F", "G"])
    cfg.setdefault("mi_event", "F" if model == "mean" else "G")
    cfg.setdefault("ml_criterion", "stochastic")
    cfg.setdefault("threshold_multiplier", 2.0)
    cfg.setdefault("threshold_tolerance_db", 1.5)
    cfg.setdefault("threshold_source", "mse")
    cfg.setdefault("mc_trials", 0)
    grid = snr_grid(cfg)
    if len(grid) == 0:
        raise ConfigError("SNR grid is empty")
    # run scenario and geometry validation before any compute
    for label in cfg["arrays"]:
        scenario = build_scenario(cfg, label)
        try:
            scenario.build_compressor()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def snr_grid(cfg):
    spec = cfg["snr_grid_db"]
    if "values" in spec:
        return tuple(float(v) for v in spec["values"])
    start, stop, step = spec["start"], spec["stop"], spec["step"]
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(start + i * step for i in range(max(count, 0)))


def _compressor_spec(cfg, label):
    if label == "dense":
        return CompressorSpec("none")
    comp = cfg["compressor"]
    return CompressorSpec(
        kind=comp["kind"],
        m1=comp.get("m1"),
        m2=comp.get("m2"),
        m=comp.get("m"),
        seed=comp.get("seed"),
    )


def build_scenario(cfg, label):
    """The :class:`Scenario` for one array label ("dense" or "compressed")."""
    if label not in cfg["arrays"]:
        raise ConfigError(f"array {label!r} not enabled in config")
    kwargs = {}
    if cfg["model"] == "mean":
        kwargs["amplitudes"] = tuple(complex(re, im) for re, im in cfg["amplitudes"])
    else:
        kwargs["weight_cov"] = tuple(
            tuple(complex(re, im) for re, im in row) for row in cfg["weight_cov"]
        )
    try:
        return Scenario(
            model_kind=cfg["model"],
            n=cfg["n"],
            compressor=_compressor_spec(cfg, label),
            thetas=tuple(cfg["thetas"]),
            snapshots=cfg["snapshots"],
            snr_grid_db=snr_grid(cfg),
            trials=cfg["trials"],
            master_seed=cfg["seed"],
            ml_criterion=cfg["ml_criterion"],
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def canonical_json(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":")) + "\n"


def config_sha256(cfg):
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
