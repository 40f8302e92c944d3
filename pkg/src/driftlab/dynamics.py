"""Singlet-triplet qubit evolution under noisy exchange and gradient controls.

H(t) = (J(t) sz + Delta b_z(t) sx) / 2 with J = J_0 exp(V / I).  All energies
are carried as true frequencies in MHz (J/h, Delta b_z/h); the factor 2 pi
appears only inside :func:`step_unitary`.  The propagator is the first-order
Magnus product of zero-order-hold steps, controls and noise both held at the
left edge of each step.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .noise import TrajectoryCursor, ScheduleError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

BASIS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
}


@dataclass(frozen=True)
class QubitParams:
    """Device parameters; defaults are the simulated device of the study."""

    j0_mhz: float = 0.075
    insensitivity_mv: float = 18.0
    dbz_mhz: float = 10.0
    sample_rate_hz: float = 1e9

    def __post_init__(self):
        for name in ("j0_mhz", "insensitivity_mv", "dbz_mhz", "sample_rate_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz

    def with_(self, **kw) -> "QubitParams":
        d = dict(self.__dict__)
        d.update(kw)
        return QubitParams(**d)


@dataclass
class ControlTimeline:
    """Programmed voltage samples held for ``dt`` seconds each.

    ``segments`` holds ``(label, first_sample, n_samples)`` for each concatenated
    piece.  ``start_ticks`` optionally pins the wall-clock start (cursor ticks).
    """

    samples_mv: np.ndarray
    dt: float
    segments: list = field(default_factory=list)
    start_ticks: int | None = None

    def __post_init__(self):
        self.samples_mv = np.ascontiguousarray(self.samples_mv, dtype=float)

    def __len__(self):
        return self.samples_mv.shape[0]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    @property
    def duration_ticks(self) -> int:
        return len(self) * TrajectoryCursor.to_ticks(self.dt)

    @classmethod
    def concatenate(cls, parts: Sequence["ControlTimeline"], labels=None) -> "ControlTimeline":
        if not parts:
            raise ValueError("nothing to concatenate")
        dt = parts[0].dt
        if any(p.dt != dt for p in parts):
            raise ValueError("cannot concatenate timelines with different sample spacing")
        labels = labels or [f"seg{i}" for i in range(len(parts))]
        segments, pos = [], 0
        for lab, p in zip(labels, parts):
            segments.append((lab, pos, len(p)))
            pos += len(p)
        return cls(np.concatenate([p.samples_mv for p in parts]), dt, segments)

    def split(self, n: int) -> tuple["ControlTimeline", "ControlTimeline"]:
        return (ControlTimeline(self.samples_mv[:n], self.dt),
                ControlTimeline(self.samples_mv[n:], self.dt))

    def write_csv(self, path, params: QubitParams) -> None:
        j = exchange_from_voltage(self.samples_mv, params)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ns", "V_mV", "J_MHz"])
            for k, (v, jj) in enumerate(zip(self.samples_mv, j)):
                w.writerow([repr(k * self.dt * 1e9), repr(float(v)), repr(float(jj))])


def exchange_from_voltage(v_mv, params: QubitParams):
    """J/h in MHz for gate voltage ``v_mv``."""
    return params.j0_mhz * np.exp(np.asarray(v_mv, dtype=float) / params.insensitivity_mv)


def _ck_to_matrix(a: complex, b: complex) -> np.ndarray:
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]], dtype=complex)


def step_unitary(j_mhz: float, dbz_mhz: float, dt: float) -> np.ndarray:
    """exp(-i 2 pi dt (J sz + dBz sx) / 2) in closed axis-angle form."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return _ck_to_matrix(*_kernels.su2_step(float(j_mhz), float(dbz_mhz), float(dt)))


def _check_start(timeline: ControlTimeline, cursor: TrajectoryCursor | None):
    if cursor is not None and timeline.start_ticks is not None and cursor.ticks != timeline.start_ticks:
        raise ScheduleError(
            f"cursor at {cursor.ticks} ps but timeline starts at {timeline.start_ticks} ps")


def propagate_noiseless(timeline: ControlTimeline, params: QubitParams) -> np.ndarray:
    a, b = _kernels.propagate_su2_noiseless(
        1.0 + 0j, 0j, timeline.samples_mv, params.j0_mhz, params.insensitivity_mv,
        params.dbz_mhz, timeline.dt, _kernels.RENORM_EVERY)
    return _ck_to_matrix(a, b)


def propagate_masks(timeline: ControlTimeline, cursor: TrajectoryCursor, params: QubitParams,
                    masks: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Propagate once per component mask over a single shared noise draw.

    The cursor advances exactly once through the timeline; each mask selects
    which components enter that run's Hamiltonian.
    """
    _check_start(timeline, cursor)
    if not np.isclose(timeline.dt, params.dt, rtol=0, atol=1e-18):
        raise ScheduleError("timeline is not sampled at the qubit sample rate")
    values = cursor.sample_block(len(timeline), timeline.dt)
    done: dict[bytes, np.ndarray] = {}
    out = []
    for mask in masks:
        key = np.asarray(mask, dtype=bool).tobytes()
        if key not in done:
            dv, dbz = cursor.axis_sums(values, np.asarray(mask, dtype=bool))
            a, b = _kernels.propagate_su2(
                1.0 + 0j, 0j, timeline.samples_mv, dv, dbz, params.j0_mhz,
                params.insensitivity_mv, params.dbz_mhz, timeline.dt, _kernels.RENORM_EVERY)
            done[key] = _ck_to_matrix(a, b)
        out.append(done[key].copy())
    return out


def propagate(timeline: ControlTimeline, cursor: TrajectoryCursor | None,
              params: QubitParams) -> np.ndarray:
    """Time-ordered product of step unitaries, advancing ``cursor`` through it.

    With ``cursor=None`` the evolution is noiseless.
    """
    if cursor is None:
        return propagate_noiseless(timeline, params)
    return propagate_masks(timeline, cursor, params, [cursor.mask])[0]


def propagate_static(timeline: ControlTimeline, params: QubitParams,
                     dv_mv: float = 0.0, dbz_mhz: float = 0.0) -> np.ndarray:
    """Propagation under frozen (quasistatic) noise offsets."""
    n = len(timeline)
    a, b = _kernels.propagate_su2(
        1.0 + 0j, 0j, timeline.samples_mv, np.full(n, float(dv_mv)), np.full(n, float(dbz_mhz)),
        params.j0_mhz, params.insensitivity_mv, params.dbz_mhz, timeline.dt,
        _kernels.RENORM_EVERY)
    return _ck_to_matrix(a, b)


def survival_probability(u: np.ndarray, prepared: str = "0", target: str | None = None) -> float:
    """|<target|U|prepared>|^2 for basis labels in {0, 1, +, -}."""
    target = prepared if target is None else target
    amp = np.vdot(BASIS[target], u @ BASIS[prepared])
    return float(min(1.0, abs(amp) ** 2))


def rotation(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle sigma_axis / 2)."""
    sigma = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[axis]
    return np.cos(angle / 2) * IDENTITY - 1j * np.sin(angle / 2) * sigma
