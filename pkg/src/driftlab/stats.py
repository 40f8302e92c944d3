"""Empirical CDFs, two-sample K-S distances and type I/II error grids.

Thresholds use the nearest-rank percentile, so every threshold is one of the
observed self-distances.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

METRICS = ("r", "delta_r", "bitflip")


@dataclass(frozen=True)
class MetricDataset:
    metric: str
    model_id: str
    seed: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("a metric dataset needs a nonempty 1-D sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("metric values must be finite")
        if self.metric == "r" and (v.min() < 0 or v.max() > 0.5):
            raise ValueError("RB numbers must lie in [0, 1/2]")
        if self.metric == "bitflip" and (v.min() < 0 or v.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "values", v)


class ECDF:
    """Right-continuous empirical CDF with steps of 1/n."""

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float))
        if v.size == 0:
            raise ValueError("empty sample")
        self.x = v

    def __call__(self, t):
        return np.searchsorted(self.x, t, side="right") / self.x.size


def _values(a):
    return a.values if isinstance(a, MetricDataset) else np.asarray(a, dtype=float)


def ks_statistic(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| evaluated at every merged sample point.

    Both step functions are constant on [x_k, x_{k+1}) of the merged grid,
    so right values at the jumps (which are also the next left limits) cover
    the supremum.
    """
    x, y = np.sort(_values(a)), np.sort(_values(b))
    if x.size == 0 or y.size == 0:
        raise ValueError("K-S statistic needs two nonempty samples")
    grid = np.concatenate([x, y])
    fa = np.searchsorted(x, grid, side="right") / x.size
    fb = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fa - fb)))


def threshold(self_distances: Sequence[float], p_x: float) -> float:
    """Nearest-rank ``p_x``-th percentile (the ceil(p n / 100)-th smallest)."""
    d = np.sort(np.asarray(self_distances, dtype=float))
    if d.size == 0:
        raise ValueError("threshold needs self-distances from at least two seeds")
    if not 0 <= p_x <= 100:
        raise ValueError("percentile must lie in [0, 100]")
    rank = max(1, math.ceil(p_x / 100.0 * d.size - 1e-12))
    return float(d[rank - 1])


def self_distances(samples: Sequence) -> np.ndarray:
    """D over all unordered seed pairs s < s' of one model."""
    if len(samples) < 2:
        raise ValueError("need at least two seeds per model")
    return np.array([ks_statistic(a, b) for a, b in itertools.combinations(samples, 2)])


def cross_distances(ref: Sequence, test: Sequence, subsample: int | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """D over every (s, s') pair between two models, optionally subsampled."""
    pairs = list(itertools.product(range(len(ref)), range(len(test))))
    if subsample is not None and subsample < len(pairs):
        rng = rng or np.random.default_rng(0)
        pick = np.sort(rng.choice(len(pairs), size=subsample, replace=False))
        pairs = [pairs[k] for k in pick]
    return np.array([ks_statistic(ref[i], test[k]) for i, k in pairs])


@dataclass
class KSGrid:
    metric: str
    p_x: float
    models: list[str]
    thresholds: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray  # beta[j, k]: reference j, tested k; diagonal holds alpha

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "metric": self.metric,
            "p_x": self.p_x,
            "models": list(self.models),
            "thresholds": [float(v) for v in self.thresholds],
            "alpha": [float(v) for v in self.alpha],
            "beta": [[float(v) for v in row] for row in self.beta],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        """Rows are reference models, columns tested models."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["reference"] + list(self.models))
            for m, row in zip(self.models, self.beta):
                w.writerow([m] + [repr(float(v)) for v in row])


@dataclass
class DistanceCache:
    """All self and cross distances for a fixed dataset, reusable across p_x."""

    models: list[str]
    self_d: dict
    cross_d: dict

    @classmethod
    def build(cls, datasets: Mapping[str, Sequence], subsample: int | None = None,
              rng: np.random.Generator | None = None) -> "DistanceCache":
        models = list(datasets)
        self_d = {m: self_distances(datasets[m]) for m in models}
        cross_d = {(a, b): cross_distances(datasets[a], datasets[b], subsample, rng)
                   for a in models for b in models if a != b}
        return cls(models, self_d, cross_d)

    def grid(self, p_x: float, metric: str = "r") -> KSGrid:
        n = len(self.models)
        d = np.array([threshold(self.self_d[m], p_x) for m in self.models])
        alpha = np.array([np.mean(self.self_d[m] > d[j]) for j, m in enumerate(self.models)])
        beta = np.empty((n, n))
        for j, a in enumerate(self.models):
            for k, b in enumerate(self.models):
                beta[j, k] = alpha[j] if j == k else np.mean(self.cross_d[a, b] <= d[j])
        return KSGrid(metric, p_x, list(self.models), d, alpha, beta)


def error_grid(datasets: Mapping[str, Sequence], p_x: float = 75.0, metric: str = "r",
               subsample: int | None = None, rng: np.random.Generator | None = None) -> KSGrid:
    """Type I rates on the diagonal, type II rates off it (row = reference).

    ``datasets`` maps model id to a list of per-seed samples.
    """
    return DistanceCache.build(datasets, subsample, rng).grid(p_x, metric)


def per_circuit_grid(datasets: Mapping[str, Mapping[int, Sequence]], p_x: float = 75.0,
                     percentiles: Sequence[float] = (0, 50, 100)) -> list[KSGrid]:
    """Cellwise nearest-rank percentiles over circuits of the per-circuit grids.

    ``datasets[model][circuit_id]`` is the list of per-seed bitflip samples.
    Returns one grid per requested percentile (best, median, worst by default).
    """
    models = list(datasets)
    circuits = sorted(datasets[models[0]])
    for m in models:
        if sorted(datasets[m]) != circuits:
            raise ValueError(f"model {m} does not share the circuit set")
    grids = [error_grid({m: datasets[m][c] for m in models}, p_x, "bitflip") for c in circuits]
    alphas = np.stack([g.alpha for g in grids])
    betas = np.stack([g.beta for g in grids])
    ths = np.stack([g.thresholds for g in grids])
    out = []
    for q in percentiles:
        out.append(KSGrid(f"bitflip@p{q:g}", p_x, models,
                          _nearest_rank_axis0(ths, q), _nearest_rank_axis0(alphas, q),
                          _nearest_rank_axis0(betas, q)))
    return out


def _nearest_rank_axis0(a: np.ndarray, q: float) -> np.ndarray:
    s = np.sort(a, axis=0)
    rank = max(1, math.ceil(q / 100.0 * s.shape[0] - 1e-12))
    return s[rank - 1]


def delta_metric(r: Sequence[float]) -> np.ndarray:
    """Pass-to-pass changes r[i+1] - r[i]."""
    r = np.asarray(r, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two passes")
    return np.diff(r)


def write_r_dataset_csv(path, rows) -> None:
    """rows: iterable of (model_id, seed, pass, r)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model_id", "seed", "pass", "r"])
        for m, s, p, r in rows:
            w.writerow([m, s, int(p), repr(float(r))])


def read_r_dataset_csv(path) -> dict[str, list[np.ndarray]]:
    """Load an r-dataset (columns model_id, seed, pass, r) grouped by model then seed.

    External or experimental RB numbers can be validated through this path.
    """
    grouped: dict = defaultdict(lambda: defaultdict(list))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            grouped[row["model_id"]][row["seed"]].append((int(row["pass"]), float(row["r"])))
    out = {}
    for m, seeds in grouped.items():
        out[m] = [np.array([r for _, r in sorted(seeds[s])]) for s in seeds]
    return out


def read_run_csv(path) -> dict:
    """Per-pass arrays from an RB run CSV: {pass: {column: array}}."""
    passes: dict = defaultdict(lambda: defaultdict(list))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = passes[int(row["pass"])]
            for key in ("circuit_id", "depth"):
                p[key].append(int(row[key]))
            for key in ("t_start_s", "p_survive", "p_bitflip"):
                p[key].append(float(row[key]))
    return {k: {c: np.asarray(v) for c, v in cols.items()} for k, cols in sorted(passes.items())}
