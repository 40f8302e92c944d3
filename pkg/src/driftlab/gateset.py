"""Compiled generators plus the Clifford group, with an on-disk JSON cache."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .clifford import GENERATOR_IDS, CliffordGroup, build_clifford_group
from .dynamics import ControlTimeline, QubitParams, propagate_noiseless
from .pulses import CompiledGate, compile_generator_set, gate_fidelity, params_hash

CACHE_VERSION = 1
REQUIRED = ("I",) + GENERATOR_IDS


class MissingGateError(RuntimeError):
    """The compiled-gate cache does not cover the requested generators."""


class GateSet:
    """Compiled pulses for every generator and the Clifford tables built on them.

    Each Clifford's control samples are the concatenation of its word's
    generator samples, in time order.
    """

    def __init__(self, gates: dict[str, CompiledGate], params: QubitParams,
                 group: CliffordGroup | None = None):
        missing = [g for g in REQUIRED if g not in gates]
        if missing:
            raise MissingGateError(f"no compiled pulse for generator(s) {missing}")
        self.gates = gates
        self.params = params
        self.group = group or build_clifford_group()
        self._samples = [self._word_samples(el.word) for el in self.group.elements]

    def _word_samples(self, word) -> np.ndarray:
        parts = [self.gates[g].timeline.samples_mv for g in word]
        return np.concatenate(parts) if parts else np.zeros(0)

    def clifford_samples(self, index: int) -> np.ndarray:
        return self._samples[index]

    def clifford_duration_s(self, index: int) -> float:
        return len(self._samples[index]) * self.params.dt

    def timeline(self, indices) -> ControlTimeline:
        """Concatenated control for a sequence of Clifford indices."""
        parts = [self._samples[k] for k in indices]
        samples = np.concatenate(parts) if parts else np.zeros(0)
        segments, pos = [], 0
        for k in indices:
            n = len(self._samples[k])
            segments.append((f"C{k}", pos, n))
            pos += n
        return ControlTimeline(samples, self.params.dt, segments)

    def clifford_infidelities(self) -> np.ndarray:
        """Noiseless infidelity of every compiled Clifford against its word target."""
        out = np.empty(len(self.group))
        for el in self.group.elements:
            u = propagate_noiseless(ControlTimeline(self._samples[el.index], self.params.dt),
                                    self.params)
            out[el.index] = 1.0 - gate_fidelity(el.unitary, u)
        return np.maximum(out, 0.0)

    @classmethod
    def compile(cls, params: QubitParams = QubitParams(), seed: int = 0, **kw) -> "GateSet":
        return cls(compile_generator_set(params, seed=seed, **kw), params)

    def to_json(self) -> dict:
        h = params_hash(self.params)
        return {
            "version": CACHE_VERSION,
            "params_hash": h,
            "gates": [self.gates[g].to_record(h) for g in REQUIRED],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path, params: QubitParams) -> "GateSet":
        path = Path(path)
        if not path.exists():
            raise MissingGateError(f"gate cache {path} not found; run the compile command first")
        with open(path) as fh:
            blob = json.load(fh)
        h = params_hash(params)
        gates = {}
        for rec in blob.get("gates", []):
            if rec["params_hash"] != h:
                raise MissingGateError(
                    f"cache entry {rec['generator']} was compiled for params {rec['params_hash']}, "
                    f"not {h}")
            gates[rec["generator"]] = CompiledGate.from_record(rec, params)
        return cls(gates, params)
