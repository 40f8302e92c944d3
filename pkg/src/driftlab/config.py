"""Experiment configuration: schema, defaults, model resolution and seeds.

Field names carry their units (``spam_us``, ``dbz_mhz``, ``power_mv2``).
Each noise axis is given either an explicit per-component power or a T2*
target to calibrate against, never both.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .dynamics import QubitParams
from .fid import T2STAR_CHARGE_S, T2STAR_MAGNETIC_S, REFERENCE_MODELS, FIDConfig, calibrate_power
from .noise import Axis, NoiseModel, OUComponent, decade_frequencies
from .rb import STANDARD_DEPTHS, RBSchedule

SCHEMA_VERSION = 1

# purpose codes for seed derivation
NOISE, CIRCUITS, FID_MC, BOOTSTRAP, SHOTS = 0, 1, 2, 3, 4

_AXIS = {
    "type": "object",
    "properties": {
        "band_hz": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2, "maxItems": 2},
        "frequencies_hz": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "power_mv2": {"type": "number", "minimum": 0},
        "power_mhz2": {"type": "number", "minimum": 0},
        "t2star_s": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
    "not": {"anyOf": [
        {"required": ["power_mv2", "t2star_s"]},
        {"required": ["power_mhz2", "t2star_s"]},
        {"required": ["band_hz", "frequencies_hz"]},
    ]},
}

SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "master_seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "qubit": {
            "type": "object",
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("j0_mhz", "insensitivity_mv", "dbz_mhz", "sample_rate_hz")},
            "additionalProperties": False,
        },
        "models": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "reference_model": {"type": "integer", "minimum": 1, "maximum": 10},
                    "charge": _AXIS,
                    "magnetic": _AXIS,
                },
                "required": ["id"],
                "additionalProperties": False,
            },
        },
        "fid": {
            "type": "object",
            "properties": {
                "drive_mhz": {"type": "number", "exclusiveMinimum": 0},
                "realizations": {"type": "integer", "minimum": 100},
                "t_max_over_t2star": {"type": "number", "exclusiveMinimum": 0},
                "n_times": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "compile": {
            "type": "object",
            "properties": {"seed": {"type": "integer", "minimum": 0}, "cache": {"type": "string"}},
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "properties": {
                "depths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3},
                "circuits_per_depth": {"type": "integer", "minimum": 1},
                "passes": {"type": "integer", "minimum": 2},
                "spam_us": {"type": "number", "minimum": 0},
                "idle_us": {"type": "number", "minimum": 0},
                "shots_mode": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0},
                  "minItems": 2, "maxItems": 2},
        "validation": {
            "type": "object",
            "properties": {
                "p_x": {"type": "number", "minimum": 0, "maximum": 100},
                "metrics": {"type": "array", "items": {"enum": ["r", "delta_r", "bitflip"]}},
                "circuit_depth": {"type": "integer", "minimum": 1},
                "cross_subsample": {"type": ["integer", "null"], "minimum": 1},
            },
            "additionalProperties": False,
        },
        "attribution": {
            "type": "object",
            "properties": {
                "model": {"type": "string"},
                "partitions": {"type": "array", "items": {"type": "string"}},
                "custom": {"type": "object", "additionalProperties": {
                    "type": "object", "additionalProperties": {
                        "type": "array", "items": {"type": "string"}}}},
                "bootstrap": {"type": "integer", "minimum": 10},
                "circuits": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
            "additionalProperties": False,
        },
        "psd": {
            "type": "object",
            "properties": {
                "sample_rates_hz": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "f_min_hz": {"type": "number", "exclusiveMinimum": 0},
                "f_max_hz": {"type": "number", "exclusiveMinimum": 0},
                "points_per_decade": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
    "required": ["models"],
    "additionalProperties": False,
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "master_seed": 0,
    "out_dir": "out",
    "qubit": {"j0_mhz": 0.075, "insensitivity_mv": 18.0, "dbz_mhz": 10.0, "sample_rate_hz": 1e9},
    "fid": {"drive_mhz": 12.0, "realizations": 1000, "t_max_over_t2star": 2.0, "n_times": 401},
    "compile": {"seed": 0, "cache": "gates.json"},
    "schedule": {"depths": list(STANDARD_DEPTHS), "circuits_per_depth": 10, "passes": 100,
                 "spam_us": 50.0, "idle_us": 0.0, "shots_mode": False},
    "seeds": [0, 100],
    "validation": {"p_x": 75.0, "metrics": ["r", "delta_r", "bitflip"], "circuit_depth": 256,
                   "cross_subsample": None},
    "attribution": {"partitions": ["axis", "frequency", "frequency_alt"], "custom": {},
                    "bootstrap": 1000, "circuits": []},
    "psd": {"sample_rates_hz": [1e5, 1e6, 1e7, 1e9], "f_min_hz": 1e-3, "f_max_hz": 5e8,
            "points_per_decade": 10},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "custom":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stable_key(text: str) -> int:
    """32-bit key from a name, stable across runs and platforms."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


@dataclass
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message} at {list(exc.absolute_path)}") from exc
        raw = _merge(DEFAULTS, d)
        ids = [m["id"] for m in raw["models"]]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate model ids: {ids}")
        return cls(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()

    @property
    def master_seed(self) -> int:
        return self.raw["master_seed"]

    @property
    def qubit(self) -> QubitParams:
        return QubitParams(**self.raw["qubit"])

    @property
    def schedule(self) -> RBSchedule:
        s = dict(self.raw["schedule"])
        s.pop("shots_mode")
        return RBSchedule(depths=tuple(s.pop("depths")), **s)

    @property
    def shots_mode(self) -> bool:
        return bool(self.raw["schedule"]["shots_mode"])

    @property
    def seeds(self) -> range:
        a, b = self.raw["seeds"]
        if b <= a:
            raise ConfigError("seed range A..B needs B > A")
        return range(a, b)

    @property
    def model_ids(self) -> list[str]:
        return [m["id"] for m in self.raw["models"]]

    def model_entry(self, model_id: str) -> dict:
        for m in self.raw["models"]:
            if m["id"] == model_id:
                return m
        raise ConfigError(f"unknown model {model_id}")

    def axis_specs(self, model_id: str) -> dict:
        """Per-axis dicts with frequencies and either power or t2star target."""
        entry = self.model_entry(model_id)
        specs = {}
        if "reference_model" in entry:
            _, band_v, _, band_b = REFERENCE_MODELS[entry["reference_model"]]
            specs["charge"] = {"band_hz": list(band_v), "t2star_s": T2STAR_CHARGE_S}
            specs["magnetic"] = {"band_hz": list(band_b), "t2star_s": T2STAR_MAGNETIC_S}
        for axis in ("charge", "magnetic"):
            if axis in entry:
                specs[axis] = dict(entry[axis])
        out = {}
        for axis, spec in specs.items():
            if "frequencies_hz" in spec:
                freqs = [float(f) for f in spec["frequencies_hz"]]
            elif "band_hz" in spec:
                lo, hi = spec["band_hz"]
                if hi < lo:
                    raise ConfigError(f"{model_id}: empty {axis} band {spec['band_hz']}")
                freqs = decade_frequencies(lo, hi)
            else:
                freqs = []
            power = spec.get("power_mv2" if axis == "charge" else "power_mhz2")
            if power is None and "t2star_s" not in spec:
                raise ConfigError(f"{model_id}: {axis} needs a power or a t2star_s target")
            out[axis] = {"frequencies_hz": freqs, "power": power, "t2star_s": spec.get("t2star_s")}
        return out

    def fid_config(self, axis: str) -> FIDConfig:
        q = self.qubit
        if axis == "charge":
            return FIDConfig.charge(drive_mhz=self.raw["fid"]["drive_mhz"], qubit=q)
        return FIDConfig.magnetic(qubit=q)

    def model(self, model_id: str) -> NoiseModel:
        comps = []
        for axis, spec in self.axis_specs(model_id).items():
            if not spec["frequencies_hz"]:
                raise ConfigError(f"{model_id}: {axis} band has no components")
            power = spec["power"]
            if power is None:
                power = calibrate_power(spec["t2star_s"], spec["frequencies_hz"], self.fid_config(axis))
            comps.extend(OUComponent(power, f, Axis(axis)) for f in spec["frequencies_hz"])
        return NoiseModel(tuple(comps), model_id)

    def seed_sequence(self, purpose: int, *keys) -> np.random.SeedSequence:
        """SeedSequence(master, spawn_key=(purpose, *keys)); components append their index."""
        return np.random.SeedSequence(self.master_seed, spawn_key=(purpose,) + tuple(keys))

    def run_seed(self, model_id: str, seed_index: int) -> np.random.SeedSequence:
        return self.seed_sequence(NOISE, stable_key(model_id), seed_index)

    def cache_path(self, out_dir: Path) -> Path:
        p = Path(self.raw["compile"]["cache"])
        return p if p.is_absolute() else out_dir / p
