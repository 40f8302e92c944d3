"""Error attribution by re-running the same noise with component subsets.

Every run in a split consumes the same per-component noise; parts only
differ in which components reach the Hamiltonian.  Per realization, passes
are ordered by the parent's metric and the same permutation is applied to
each part.  Curves are the bootstrap mean, over realizations, of the
per-rank median, with 95 % percentile intervals.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import QubitParams
from .noise import Axis, NoiseModel
from .rb import RBCircuit, RBRun, RBSchedule, run_masked

DEFAULT_SPLIT_CUT_HZ = 1e3  # low: f <= 1 kHz, high: above
COARSE_SPLIT_CUT_HZ = 1e0
BOOTSTRAP_REPLICATES = 1000


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryPartition:
    """Named disjoint parts whose union is the ``parent`` label set."""

    name: str
    kind: str
    parent: frozenset
    parts: tuple  # ((part name, frozenset of labels), ...)

    def __post_init__(self):
        seen: set = set()
        for part, labels in self.parts:
            if seen & labels:
                raise PartitionError(f"part {part} overlaps another part")
            seen |= labels
        if seen != set(self.parent):
            raise PartitionError("parts do not cover the parent components exactly")

    @property
    def part_names(self) -> list[str]:
        return [p for p, _ in self.parts]

    def validate(self, model: NoiseModel) -> None:
        unknown = set(self.parent) - set(model.labels)
        if unknown:
            raise PartitionError(f"labels {sorted(unknown)} are not components of {model.model_id}")

    def masks(self, model: NoiseModel) -> dict[str, np.ndarray]:
        self.validate(model)
        labels = model.labels

        def mask(names):
            return np.array([lab in names for lab in labels], dtype=bool)

        out = {"parent": mask(self.parent)}
        out.update({p: mask(s) for p, s in self.parts})
        return out

    @classmethod
    def custom(cls, name: str, parts: Mapping[str, Sequence[str]], parent=None) -> "TrajectoryPartition":
        sets = tuple((p, frozenset(v)) for p, v in parts.items())
        parent = frozenset().union(*(s for _, s in sets)) if parent is None else frozenset(parent)
        return cls(name, "custom", parent, sets)

    @classmethod
    def by_axis(cls, model: NoiseModel) -> "TrajectoryPartition":
        parts = tuple((a.value, frozenset(model.on_axis(a).labels)) for a in Axis)
        return cls("axis", "axis", frozenset(model.labels), parts)

    @classmethod
    def by_frequency(cls, model: NoiseModel, cut_hz: float = DEFAULT_SPLIT_CUT_HZ,
                     axis: Axis | str = Axis.CHARGE, name: str | None = None) -> "TrajectoryPartition":
        """Low (f <= cut) and high (f > cut) parts of one axis; other axes are off."""
        sub = model.on_axis(axis).components
        low = frozenset(c.label for c in sub if c.frequency <= cut_hz)
        high = frozenset(c.label for c in sub if c.frequency > cut_hz)
        return cls(name or f"frequency@{cut_hz:g}Hz", "frequency", low | high,
                   (("low", low), ("high", high)))


def default_partitions(model: NoiseModel) -> list[TrajectoryPartition]:
    return [TrajectoryPartition.by_axis(model),
            TrajectoryPartition.by_frequency(model, DEFAULT_SPLIT_CUT_HZ),
            TrajectoryPartition.by_frequency(model, COARSE_SPLIT_CUT_HZ)]


def split_run(model: NoiseModel, seed, partitions: Sequence[TrajectoryPartition],
              circuits: Sequence[RBCircuit], schedule: RBSchedule, params: QubitParams
              ) -> dict[str, dict[str, RBRun]]:
    """Parent and part runs for every partition, all on one noise trajectory.

    Returns ``{partition name: {"parent": run, part: run, ...}}``.
    """
    keyed: dict[str, np.ndarray] = {}
    for part in partitions:
        for lab, m in part.masks(model).items():
            keyed[f"{part.name}/{lab}"] = m
    runs = run_masked(model, seed, circuits, schedule, params, keyed)
    out: dict = {}
    for key, run in runs.items():
        pname, lab = key.split("/", 1)
        run.label = lab
        out.setdefault(pname, {})[lab] = run
    return out


@dataclass
class Curve:
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class AttributionResult:
    parts: list[str]
    order: np.ndarray  # (realizations, passes) parent argsort per realization
    sorted_values: dict  # label -> (realizations, passes), co-ordered by the parent
    percentiles: np.ndarray
    curves: dict = field(default_factory=dict)
    replicates: dict = field(default_factory=dict)  # label -> (B, passes) per-rank medians
    gap: Curve | None = None
    gap_replicates: np.ndarray | None = None

    def band_gap(self, lo_pct: float, hi_pct: float) -> tuple[float, float, float]:
        """Mean gap over ranks with percentile in [lo_pct, hi_pct]: (mean, lo, hi)."""
        sel = (self.percentiles >= lo_pct - 1e-9) & (self.percentiles <= hi_pct + 1e-9)
        if not np.any(sel):
            raise ValueError(f"no ranks fall in [{lo_pct}, {hi_pct}]")
        reps = self.gap_replicates[:, sel].mean(axis=1)
        lo, hi = np.percentile(reps, [2.5, 97.5])
        return float(reps.mean()), float(lo), float(hi)

    def median_gap(self) -> tuple[float, float, float]:
        """Gap averaged over the middle rank(s) (one for odd, two for even pass counts)."""
        n = len(self.percentiles)
        ranks = sorted({(n - 1) // 2, n // 2})
        reps = self.gap_replicates[:, ranks].mean(axis=1)
        lo, hi = np.percentile(reps, [2.5, 97.5])
        return float(reps.mean()), float(lo), float(hi)

    def write_csv(self, path) -> None:
        cols = ["percentile", "parent_mean", "parent_lo", "parent_hi"]
        for p in self.parts:
            cols += [f"part_{p}_mean", f"part_{p}_lo", f"part_{p}_hi"]
        cols += ["gap_mean", "gap_lo", "gap_hi"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for k, pct in enumerate(self.percentiles):
                row = [pct]
                for lab in ["parent"] + self.parts:
                    c = self.curves[lab]
                    row += [c.mean[k], c.lo[k], c.hi[k]]
                row += [self.gap.mean[k], self.gap.lo[k], self.gap.hi[k]]
                w.writerow([repr(float(v)) for v in row])


def _bootstrap_medians(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # values: (R, P); idx: (B, R) resampled realization indices
    return np.median(values[idx], axis=1)


def sorted_percentile_curves(parent: Sequence[Sequence[float]], parts: Mapping[str, Sequence],
                             replicates: int = BOOTSTRAP_REPLICATES, seed=0,
                             min_realizations: int = 10, min_passes: int = 10) -> AttributionResult:
    """Co-ordered percentile curves with bootstrap CIs and the additivity gap.

    ``parent[i]`` is realization i's per-pass metric; ``parts[name][i]`` the
    same passes under that part's noise.
    """
    P = np.asarray(parent, dtype=float)
    if P.ndim != 2:
        raise ValueError("parent must be (realizations, passes)")
    R, n = P.shape
    if R < min_realizations or n < min_passes:
        raise ValueError(f"need >= {min_realizations} realizations and >= {min_passes} passes")
    comps = {}
    for name, v in parts.items():
        v = np.asarray(v, dtype=float)
        if v.shape != P.shape:
            raise ValueError(f"part {name} has shape {v.shape}, parent has {P.shape}")
        comps[name] = v
    order = np.argsort(P, axis=1, kind="stable")
    rows = np.arange(R)[:, None]
    sorted_values = {"parent": P[rows, order]}
    sorted_values.update({k: v[rows, order] for k, v in comps.items()})
    percentiles = 100.0 * np.arange(n) / (n - 1)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, R, size=(replicates, R))
    res = AttributionResult(list(comps), order, sorted_values, percentiles)
    for lab, v in sorted_values.items():
        reps = _bootstrap_medians(v, idx)
        res.replicates[lab] = reps
        lo, hi = np.percentile(reps, [2.5, 97.5], axis=0)
        res.curves[lab] = Curve(reps.mean(axis=0), lo, hi)
    gap = res.replicates["parent"] - sum(res.replicates[k] for k in comps)
    res.gap_replicates = gap
    lo, hi = np.percentile(gap, [2.5, 97.5], axis=0)
    res.gap = Curve(gap.mean(axis=0), lo, hi)
    return res


def additivity_gap(result: AttributionResult) -> Curve:
    """Per-percentile r_parent - sum of parts, with its bootstrap CI."""
    return result.gap


def attribution_from_runs(split: Sequence[Mapping[str, RBRun]], metric: str = "r",
                          circuit_id: int | None = None, **kw) -> AttributionResult:
    """Build curves from per-realization split runs (one mapping per realization)."""
    if not split:
        raise ValueError("no realizations")
    names = [k for k in split[0] if k != "parent"]

    def series(run: RBRun):
        if metric == "r":
            return run.r
        if metric == "bitflip":
            known = run.passes[0].circuit_ids
            if circuit_id is None or circuit_id not in known:
                raise KeyError(f"unknown circuit id {circuit_id}")
            return run.bitflips(circuit_id)
        raise ValueError(f"unknown metric {metric}")

    parent = [series(s["parent"]) for s in split]
    parts = {k: [series(s[k]) for s in split] for k in names}
    return sorted_percentile_curves(parent, parts, **kw)


def per_circuit_attribution(circuit_id: int, split: Sequence[Mapping[str, RBRun]], **kw
                            ) -> AttributionResult:
    """Same machinery with the circuit's bitflip probability as the metric."""
    return attribution_from_runs(split, "bitflip", circuit_id, **kw)
