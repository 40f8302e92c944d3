"""Sums of Ornstein-Uhlenbeck processes on the charge and magnetic axes.

Each component ``eta_i`` is a zero-mean stationary Gaussian process with

    <eta_i(t) eta_i(t + tau)> = (p_i / 2) exp(-2 pi f_i |tau|)

and is advanced with the exact conditional update

    eta <- eta * exp(-2 pi f dt) + g * sqrt((p / 2) (1 - exp(-4 pi f dt)))

so that arbitrarily long windows can be skipped in O(#components).

Units: charge values are in mV (power in mV^2), magnetic values in MHz of
Delta b_z / h (power in MHz^2).  Frequencies are true frequencies in Hz.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

TICKS_PER_SECOND = 10**12  # cursor clock resolution: 1 ps


class Axis(str, enum.Enum):
    CHARGE = "charge"
    MAGNETIC = "magnetic"


class ScheduleError(ValueError):
    """A time window is negative or a cursor is at the wrong time."""


@dataclass(frozen=True)
class OUComponent:
    power: float
    frequency: float
    axis: Axis
    label: str = ""

    def __post_init__(self):
        if self.power < 0:
            raise ValueError(f"OU power must be >= 0, got {self.power}")
        if not self.frequency > 0:
            raise ValueError(f"OU frequency must be > 0, got {self.frequency}")
        object.__setattr__(self, "axis", Axis(self.axis))
        if not self.label:
            object.__setattr__(self, "label", f"{self.axis.value}@{self.frequency:g}Hz")


def decade_frequencies(f_ir: float, f_uv: float) -> list[float]:
    """One frequency per decade from ``f_ir`` to ``f_uv`` inclusive."""
    lo, hi = np.log10(f_ir), np.log10(f_uv)
    n = int(round(hi - lo))
    if n < 0 or not np.isclose(hi - lo, n):
        raise ValueError(f"band ({f_ir}, {f_uv}) is not a whole number of decades")
    return [float(10.0 ** (lo + k)) for k in range(n + 1)]


@dataclass(frozen=True)
class NoiseModel:
    components: tuple[OUComponent, ...]
    model_id: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        labels = [c.label for c in self.components]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate component labels in {self.model_id}: {labels}")

    @classmethod
    def from_bands(cls, model_id: str, charge_band=None, charge_power: float = 0.0,
                   magnetic_band=None, magnetic_power: float = 0.0) -> "NoiseModel":
        """Equal-power decade ladders on each axis (either band may be None)."""
        comps = []
        for axis, band, power in ((Axis.CHARGE, charge_band, charge_power),
                                  (Axis.MAGNETIC, magnetic_band, magnetic_power)):
            if band is None:
                continue
            comps.extend(OUComponent(power, f, axis) for f in decade_frequencies(*band))
        return cls(tuple(comps), model_id)

    def __len__(self):
        return len(self.components)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.components]

    @property
    def powers(self) -> np.ndarray:
        return np.array([c.power for c in self.components], dtype=float)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.frequency for c in self.components], dtype=float)

    def axis_mask(self, axis: Axis | str) -> np.ndarray:
        axis = Axis(axis)
        return np.array([c.axis is axis for c in self.components], dtype=bool)

    def on_axis(self, axis: Axis | str) -> "NoiseModel":
        axis = Axis(axis)
        return NoiseModel(tuple(c for c in self.components if c.axis is axis),
                          f"{self.model_id}:{axis.value}")

    def scaled(self, factor: float) -> "NoiseModel":
        """Same ladder with every power multiplied by ``factor``."""
        return NoiseModel(tuple(OUComponent(c.power * factor, c.frequency, c.axis, c.label)
                                for c in self.components), self.model_id)


def component_streams(seed, n: int) -> list[np.random.Generator]:
    """Independent per-component generators derived from one seed.

    Component ``i`` always gets the child key ``(..., i)`` so that masked or
    partitioned runs built from the same seed consume identical randomness.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (i,))))
        for i in range(n)]


class TrajectoryCursor:
    """Stateful, seed-reproducible position on one noise trajectory.

    The initial component values are drawn from the stationary distribution
    (variance ``p_i / 2``) at t = 0.  ``mask`` only affects what is summed into
    the emitted per-axis samples; masked-off components keep evolving.
    """

    def __init__(self, model: NoiseModel, seed, mask: Sequence[bool] | None = None):
        self.model = model
        self._powers = model.powers
        self._freqs = model.frequencies
        self._charge = model.axis_mask(Axis.CHARGE)
        self._streams = component_streams(seed, len(model))
        self.ticks = 0
        self.mask = np.ones(len(model), dtype=bool) if mask is None else np.asarray(mask, bool)
        if self.mask.shape != (len(model),):
            raise ValueError("mask length does not match the number of components")
        self.values = np.array([np.sqrt(p / 2.0) * g.standard_normal()
                                for p, g in zip(self._powers, self._streams)])

    @property
    def time(self) -> float:
        """Current wall-clock time in seconds."""
        return self.ticks / TICKS_PER_SECOND

    @staticmethod
    def to_ticks(dt: float) -> int:
        if dt < 0:
            raise ScheduleError(f"negative time step {dt}")
        return int(round(dt * TICKS_PER_SECOND))

    def _coefficients(self, ticks: int):
        dt = ticks / TICKS_PER_SECOND
        x = 2.0 * np.pi * self._freqs * dt
        decay = np.exp(-x)
        scale = np.sqrt(self._powers / 2.0 * -np.expm1(-2.0 * x))
        return decay, scale

    def axis_sums(self, values: np.ndarray, mask: np.ndarray | None = None):
        """Per-axis sums of masked component values (1-D or (n_comp, n) input)."""
        mask = self.mask if mask is None else mask
        wc = (mask & self._charge).astype(float)
        wm = (mask & ~self._charge).astype(float)
        if values.ndim == 1:
            return wc @ values, wm @ values
        n = values.shape[1]
        return (_kernels.weighted_rows(values, wc, np.empty(n)),
                _kernels.weighted_rows(values, wm, np.empty(n)))

    def advance(self, dt: float) -> tuple[float, float]:
        """Advance by ``dt`` seconds and return the new (dV [mV], dBz [MHz])."""
        ticks = self.to_ticks(dt)
        if ticks:
            decay, scale = self._coefficients(ticks)
            for i, gen in enumerate(self._streams):
                self.values[i] = _kernels.ou_step(gen, self.values[i], decay[i], scale[i])
            self.ticks += ticks
        dv, dbz = self.axis_sums(self.values)
        return float(dv), float(dbz)

    def fast_forward(self, window: float) -> "TrajectoryCursor":
        """Jump ``window`` seconds ahead (same law as ``advance``)."""
        self.advance(window)
        return self

    def sample_block(self, n: int, dt: float) -> np.ndarray:
        """Component values at the start of ``n`` steps of length ``dt``.

        Returns an array of shape (n_components, n); the cursor ends at
        ``time + n * dt``.  Equivalent, bit for bit, to reading ``values`` and
        calling ``advance(dt)`` n times.
        """
        ticks = self.to_ticks(dt)
        out = np.empty((len(self.model), n))
        if n == 0:
            return out
        if ticks == 0:
            out[:] = self.values[:, None]
            return out
        decay, scale = self._coefficients(ticks)
        for i, gen in enumerate(self._streams):
            self.values[i] = _kernels.ou_path(gen, self.values[i], decay[i], scale[i], out[i])
        self.ticks += ticks * n
        return out

    def trace(self, n: int, dt: float):
        """Per-axis masked traces over ``n`` steps: (times_s, dV_mV, dBz_MHz)."""
        t0 = self.ticks
        values = self.sample_block(n, dt)
        times = (t0 + np.arange(n) * self.to_ticks(dt)) / TICKS_PER_SECOND
        dv, dbz = self.axis_sums(values)
        return times, dv, dbz


def psd_continuous(model: NoiseModel, f) -> np.ndarray:
    """One-sided PSD  sum_i p_i f_i / (pi (f_i^2 + f^2))."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("frequency must be >= 0")
    p = model.powers[:, None]
    fi = model.frequencies[:, None]
    out = (p * fi / (np.pi * (fi**2 + f.reshape(1, -1) ** 2))).sum(axis=0)
    return out.reshape(f.shape)


def psd_discrete(model: NoiseModel, f, f_s: float) -> np.ndarray:
    """Aliased PSD of the process sampled at ``f_s``.

    Closed form of sum_n S(f + n f_s):
        sum_j p_j coth(pi f_j/f_s) / (f_s (cos^2(pi f/f_s) + coth^2(pi f_j/f_s) sin^2(pi f/f_s)))
    which is the cot/coth expression with numerator and denominator
    multiplied by sin^2, so f = 0 needs no special case.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or np.any(f > f_s / 2):
        raise ValueError("frequency must lie in [0, f_s/2] (above Nyquist)")
    y = (np.pi * f / f_s).reshape(1, -1)
    coth = 1.0 / np.tanh(np.pi * model.frequencies / f_s)[:, None]
    p = model.powers[:, None]
    den = f_s * (np.cos(y) ** 2 + coth**2 * np.sin(y) ** 2)
    return (p * coth / den).sum(axis=0).reshape(f.shape)


def write_trace_csv(path, times: Iterable[float], values: Iterable[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "value"])
        for t, v in zip(times, values):
            w.writerow([repr(float(t)), repr(float(v))])
