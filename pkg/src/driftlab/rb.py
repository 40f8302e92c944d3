"""Wall-clock randomized benchmarking against a persistent noise trajectory.

One cursor carries the noise through every circuit of every pass.  Each
circuit is preceded and followed by a noiseless SPAM window that the noise
is fast-forwarded through, so slow components stay correlated from circuit
to circuit and from pass to pass.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .dynamics import BASIS, ControlTimeline, QubitParams, propagate_masks
from .gateset import GateSet
from .noise import TrajectoryCursor, NoiseModel, ScheduleError

STANDARD_DEPTHS = tuple(2**k for k in range(1, 10))


@dataclass(frozen=True)
class RBSchedule:
    depths: tuple[int, ...] = STANDARD_DEPTHS
    circuits_per_depth: int = 10
    passes: int = 100
    spam_us: float = 50.0
    idle_us: float = 0.0

    def __post_init__(self):
        depths = tuple(int(d) for d in self.depths)
        object.__setattr__(self, "depths", depths)
        if not depths or list(depths) != sorted(set(depths)):
            raise ValueError("depths must be strictly increasing")
        if any(d < 1 or d & (d - 1) for d in depths):
            raise ValueError("depths must be powers of two")
        if self.circuits_per_depth < 1 or self.passes < 1:
            raise ValueError("need at least one circuit per depth and one pass")
        if self.spam_us < 0 or self.idle_us < 0:
            raise ValueError("SPAM and idle windows must be >= 0")

    @property
    def spam_s(self) -> float:
        return self.spam_us * 1e-6

    @property
    def idle_s(self) -> float:
        return self.idle_us * 1e-6

    @property
    def n_circuits(self) -> int:
        return len(self.depths) * self.circuits_per_depth


@dataclass
class RBCircuit:
    """Depth-L circuit: L-1 random Cliffords then the inverse of their product."""

    circuit_id: int
    depth: int
    indices: tuple[int, ...]
    inverse_index: int
    timeline: ControlTimeline | None = None

    @property
    def sequence(self) -> tuple[int, ...]:
        return self.indices + (self.inverse_index,)

    @property
    def duration(self) -> float:
        if self.timeline is None:
            raise ScheduleError(f"circuit {self.circuit_id} has no compiled timeline")
        return self.timeline.duration


def sample_circuits(schedule: RBSchedule, gates: GateSet | None, circuit_seed=0) -> list[RBCircuit]:
    """Draw the fixed circuit set, in execution order (depth, then index).

    With ``gates`` the control timelines are attached; they are built once and
    reused by every pass.
    """
    group = gates.group if gates is not None else None
    if group is None:
        from .clifford import build_clifford_group
        group = build_clifford_group()
    rng = np.random.default_rng(circuit_seed)
    circuits = []
    for depth in schedule.depths:
        for _ in range(schedule.circuits_per_depth):
            idx = tuple(int(k) for k in rng.integers(0, len(group), size=depth - 1))
            inv = int(group.inverse[group.compose(idx)])
            c = RBCircuit(len(circuits), depth, idx, inv)
            if gates is not None:
                c.timeline = gates.timeline(c.sequence)
            circuits.append(c)
    return circuits


@dataclass
class RBFit:
    r: float
    r_lo: float
    r_hi: float
    stderr: float
    at_boundary: bool = False
    converged: bool = True

    def to_dict(self) -> dict:
        return {"r": self.r, "r_lo": self.r_lo, "r_hi": self.r_hi, "stderr": self.stderr,
                "at_boundary": self.at_boundary, "converged": self.converged}


def rb_decay(depths, r):
    return 0.5 + 0.5 * (1.0 - 2.0 * r) ** np.asarray(depths, dtype=float)


def fit_rb(depths: Sequence[int], survival: Sequence[float], shots: int | None = None) -> RBFit:
    """Least squares of P = 1/2 + 1/2 (1 - 2r)^L over r in [0, 1/2].

    The start comes from the log-linearized slope and the CI is +-2 sigma.
    Without ``shots`` the covariance uses the pooled residual variance.  When
    each depth mean is an average of ``shots`` Bernoulli outcomes, the
    covariance instead uses the binomial variance P(1 - P)/shots of the
    fitted curve at every depth (sandwich form; the fit stays unweighted).
    """
    L = np.asarray(depths, dtype=float)
    y = np.asarray(survival, dtype=float)
    if L.shape != y.shape or len(L) < 3:
        raise ValueError("need matching depths and survivals at >= 3 depths")
    amp = 2.0 * y - 1.0
    ok = amp > 0
    if not np.any(ok):
        return RBFit(0.5, 0.5, 0.5, 0.0, at_boundary=True)
    slope = float(np.sum(L[ok] * np.log(amp[ok])) / np.sum(L[ok] ** 2))
    r0 = float(np.clip(-0.5 * np.expm1(slope), 0.0, 0.5))

    def resid(p):
        return rb_decay(L, p[0]) - y

    def jac(p):
        base = 1.0 - 2.0 * p[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(L > 0, -L * base ** np.maximum(L - 1, 0), 0.0)
        return d.reshape(-1, 1)

    sol = least_squares(resid, [r0], jac=jac, bounds=([0.0], [0.5]), method="trf",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=1000)
    r = float(sol.x[0])
    # trf stays strictly interior; take a bound if it fits at least as well
    for edge in (0.0, 0.5):
        if np.sum(resid([edge]) ** 2) <= np.sum(resid([r]) ** 2):
            r = edge
    sol.fun = resid([r])
    J = jac([r])[:, 0]
    jtj = float(J @ J)
    if jtj <= 0:
        stderr = math.inf
    elif shots:
        p = rb_decay(L, r)
        stderr = math.sqrt(float(np.sum(J**2 * p * (1 - p))) / shots) / jtj
    else:
        s2 = float(sol.fun @ sol.fun) / max(len(L) - 1, 1)
        stderr = math.sqrt(s2 / jtj)
    lo = max(0.0, r - 2 * stderr)
    hi = min(0.5, r + 2 * stderr)
    return RBFit(r, lo, hi, stderr, at_boundary=r >= 0.5 - 1e-12, converged=bool(sol.success))


@dataclass
class PassResult:
    pass_index: int
    circuit_ids: np.ndarray
    depths: np.ndarray
    t_start_s: np.ndarray
    p_survive: np.ndarray
    p_bitflip: np.ndarray
    shots: np.ndarray | None = None
    fit: RBFit | None = None

    def depth_means(self, use_shots: bool = False):
        values = self.shots.astype(float) if use_shots else self.p_survive
        levels = np.unique(self.depths)
        return levels, np.array([values[self.depths == d].mean() for d in levels])


@dataclass
class RBRun:
    model_id: str
    seed: object
    passes: list[PassResult] = field(default_factory=list)
    lab_time_s: float = 0.0
    lab_ticks: int = 0
    label: str = "all"

    @property
    def r(self) -> np.ndarray:
        return np.array([p.fit.r for p in self.passes])

    def bitflips(self, circuit_id: int) -> np.ndarray:
        return np.array([p.p_bitflip[p.circuit_ids == circuit_id][0] for p in self.passes])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pass", "circuit_id", "depth", "t_start_s", "p_survive", "p_bitflip"])
            for p in self.passes:
                for k in range(len(p.circuit_ids)):
                    w.writerow([p.pass_index, int(p.circuit_ids[k]), int(p.depths[k]),
                                repr(float(p.t_start_s[k])), repr(float(p.p_survive[k])),
                                repr(float(p.p_bitflip[k]))])

    def summary(self) -> dict:
        return {
            "schema_version": 1,
            "model_id": self.model_id,
            "label": self.label,
            "seed": _seed_repr(self.seed),
            "lab_time_s": self.lab_time_s,
            "passes": [dict(pass_index=p.pass_index, **p.fit.to_dict()) for p in self.passes],
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


def _check_circuits(circuits: Sequence[RBCircuit]):
    for c in circuits:
        if c.timeline is None:
            raise ScheduleError(f"circuit {c.circuit_id} has no compiled timeline; "
                                "load the gate cache first")


def run_pass(circuits: Sequence[RBCircuit], cursor: TrajectoryCursor, schedule: RBSchedule,
             params: QubitParams, pass_index: int = 0, masks: Sequence[np.ndarray] | None = None,
             shot_rng: np.random.Generator | None = None) -> list[PassResult]:
    """Execute every circuit once on the live trajectory.

    Returns one PassResult per mask (a single result for the cursor's own
    mask when ``masks`` is None).  All masks see the same noise draw.
    """
    _check_circuits(circuits)
    masks = [cursor.mask] if masks is None else list(masks)
    n = len(circuits)
    t_start = np.empty(n)
    surv = np.empty((len(masks), n))
    flip = np.empty((len(masks), n))
    zero, one = BASIS["0"], BASIS["1"]
    for k, c in enumerate(circuits):
        cursor.fast_forward(schedule.spam_s)
        t_start[k] = cursor.time
        for m, u in enumerate(propagate_masks(c.timeline, cursor, params, masks)):
            psi = u @ zero
            surv[m, k] = min(1.0, abs(np.vdot(zero, psi)) ** 2)
            flip[m, k] = min(1.0, abs(np.vdot(one, psi)) ** 2)
        cursor.fast_forward(schedule.spam_s)
    ids = np.array([c.circuit_id for c in circuits])
    depths = np.array([c.depth for c in circuits])
    out = []
    for m in range(len(masks)):
        shots = None
        if shot_rng is not None:
            shots = (shot_rng.random(n) < surv[m]).astype(np.int8)
        res = PassResult(pass_index, ids, depths, t_start.copy(), surv[m], flip[m], shots)
        levels, means = res.depth_means(use_shots=shots is not None)
        res.fit = fit_rb(levels, means, shots=schedule.circuits_per_depth if shots is not None else None)
        out.append(res)
    return out


def expected_lab_ticks(circuits: Sequence[RBCircuit], schedule: RBSchedule) -> int:
    """Exact schedule sum in cursor ticks."""
    to = TrajectoryCursor.to_ticks
    per_pass = sum(c.timeline.duration_ticks + 2 * to(schedule.spam_s) for c in circuits)
    return schedule.passes * per_pass + (schedule.passes - 1) * to(schedule.idle_s)


def run_masked(model: NoiseModel, seed, circuits: Sequence[RBCircuit], schedule: RBSchedule,
               params: QubitParams, masks: dict[str, np.ndarray], shots: bool = False
               ) -> dict[str, RBRun]:
    """One trajectory, several component masks: one RBRun per mask label."""
    _check_circuits(circuits)
    cursor = TrajectoryCursor(model, seed)
    labels = list(masks)
    shot_rng = None
    if shots:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        shot_rng = np.random.default_rng(np.random.SeedSequence(ss.entropy,
                                                                spawn_key=tuple(ss.spawn_key) + (2**31,)))
    runs = {lab: RBRun(model.model_id, seed, label=lab) for lab in labels}
    for i in range(schedule.passes):
        if i:
            cursor.fast_forward(schedule.idle_s)
        results = run_pass(circuits, cursor, schedule, params, i,
                           [masks[lab] for lab in labels], shot_rng)
        for lab, res in zip(labels, results):
            runs[lab].passes.append(res)
    for run in runs.values():
        run.lab_time_s = cursor.time
        run.lab_ticks = cursor.ticks
    return runs


def run_seed(model: NoiseModel, seed, circuits, schedule: RBSchedule, params: QubitParams,
             shots: bool = False) -> RBRun:
    return run_masked(model, seed, circuits, schedule, params,
                      {"all": np.ones(len(model), dtype=bool)}, shots)["all"]


def run_experiment(model: NoiseModel, seeds: Sequence, circuits, schedule: RBSchedule,
                   params: QubitParams, shots: bool = False, jobs: int = 1) -> list[RBRun]:
    """One RBRun per seed; runs are independent and may execute in parallel."""
    _check_circuits(circuits)
    if jobs == 1:
        return [run_seed(model, s, circuits, schedule, params, shots) for s in seeds]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=jobs)(
        delayed(run_seed)(model, s, circuits, schedule, params, shots) for s in seeds)
