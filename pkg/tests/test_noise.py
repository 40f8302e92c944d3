import csv
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ks_2samp

from driftlab.noise import (Axis, NoiseModel, OUComponent, ScheduleError, TrajectoryCursor,
                            decade_frequencies, psd_continuous, psd_discrete, write_trace_csv)


def single(p=1.0, f=1.0, axis=Axis.CHARGE):
    return NoiseModel((OUComponent(p, f, axis),))


def ladder(lo=1e-3, hi=1e7, p=1.0):
    return NoiseModel.from_bands("ladder", (lo, hi), p)


class TestComponents:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            OUComponent(-1.0, 1.0, "charge")
        with pytest.raises(ValueError):
            OUComponent(1.0, 0.0, "charge")

    def test_decade_ladder(self):
        assert decade_frequencies(1e-3, 1e0) == [1e-3, 1e-2, 1e-1, 1e0]
        m = NoiseModel.from_bands("m7", (1e-3, 1e7), 1.0, (1e1, 1e7), 2.0)
        f = m.on_axis("charge").frequencies
        np.testing.assert_allclose(f[1:] / f[:-1], 10.0)
        assert len(m) == 11 + 7

    def test_fractional_band_rejected(self):
        with pytest.raises(ValueError):
            decade_frequencies(1e-3, 3e0)

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel((OUComponent(1, 1, "charge"), OUComponent(2, 1, "charge")))


class TestAdvance:
    def test_zero_dt_is_identity(self):
        c = TrajectoryCursor(ladder(), 3)
        before = c.values.copy()
        c.advance(0.0)
        np.testing.assert_array_equal(c.values, before)
        assert c.ticks == 0

    def test_negative_dt_rejected(self):
        c = TrajectoryCursor(single(), 0)
        with pytest.raises(ScheduleError):
            c.advance(-1e-9)
        with pytest.raises(ScheduleError):
            c.fast_forward(-1.0)

    def test_time_bookkeeping_is_exact(self):
        c = TrajectoryCursor(single(), 0)
        for _ in range(1000):
            c.advance(1e-9)
        c.fast_forward(50e-6)
        assert c.ticks == 1000 * 1000 + 50 * 10**6

    def test_lag_autocorrelation(self):
        # p = 1, f = 1 Hz, 1e5 steps of 0.1 s; SE from 100 batch estimates
        c = TrajectoryCursor(single(1.0, 1.0), 11)
        x = c.sample_block(100_000, 0.1)[0]
        batches = x.reshape(100, 1000)
        est = np.array([np.mean(b[:-1] * b[1:]) for b in batches])
        se = est.std(ddof=1) / math.sqrt(len(est))
        expected = 0.5 * math.exp(-0.2 * math.pi)
        assert abs(est.mean() - expected) < 3 * se

    def test_long_step_is_stationary_draw(self):
        m = NoiseModel.from_bands("m", (1e-1, 1e1), 2.0)
        vals = []
        for s in range(4000):
            c = TrajectoryCursor(m, s)
            vals.append(c.advance(1e4)[0])
        var = np.var(vals, ddof=1)
        target = 3 * 2.0 / 2
        assert abs(var - target) < 3 * target * math.sqrt(2 / (len(vals) - 1))

    def test_zero_mean_stream(self):
        # 1e6 steps; SE of the mean of an AR(1) with coefficient rho
        p, f, dt = 1.0, 1e3, 1e-4
        c = TrajectoryCursor(single(p, f), 5)
        x = c.sample_block(1_000_000, dt)[0]
        rho = math.exp(-2 * math.pi * f * dt)
        se = math.sqrt(p / 2 / x.size * (1 + rho) / (1 - rho))
        assert abs(x.mean()) < 4 * se

    def test_stationary_initial_variance(self):
        m = single(0.3, 1e-3)
        x = np.array([TrajectoryCursor(m, s).values[0] for s in range(100_000)])
        target = 0.15
        assert abs(x.var(ddof=1) - target) < 3 * target * math.sqrt(2 / (x.size - 1))


class TestFastForward:
    def test_window_variance_formula(self):
        p, f, T = 1.0, 1e-3, 50e-6
        c = TrajectoryCursor(single(p, f), 0)
        _, scale = c._coefficients(c.to_ticks(T))
        assert scale[0] ** 2 == pytest.approx(p * math.pi * 1e-7, rel=1e-6)

    def test_window_change_variance_empirical(self):
        p, f, T = 1.0, 1e-3, 50e-6
        m = single(p, f)
        d = []
        for s in range(20_000):
            c = TrajectoryCursor(m, s)
            x0 = c.values[0]
            d.append(c.fast_forward(T).values[0] - x0)
        target = p * (1 - math.exp(-2 * math.pi * f * T))
        assert abs(np.var(d, ddof=1) - target) < 3 * target * math.sqrt(2 / (len(d) - 1))

    def test_semigroup(self):
        m = single(1.0, 10.0)
        a, b = 0.013, 0.041
        two = [TrajectoryCursor(m, s).fast_forward(a).fast_forward(b).values[0]
               for s in range(10_000)]
        one = [TrajectoryCursor(m, s).fast_forward(a + b).values[0] for s in range(10_000, 20_000)]
        assert ks_2samp(two, one).pvalue > 0.01

    def test_zero_window(self):
        c = TrajectoryCursor(ladder(), 1)
        v = c.values.copy()
        c.fast_forward(0.0)
        np.testing.assert_array_equal(c.values, v)


class TestReproducibility:
    def test_bitwise_repeatable(self):
        runs = []
        for _ in range(2):
            c = TrajectoryCursor(ladder(), 42)
            out = [c.advance(1e-9) for _ in range(10)]
            c.fast_forward(1e-3)
            out.append(tuple(c.sample_block(100, 1e-9).sum(axis=1)))
            runs.append(out)
        assert runs[0] == runs[1]

    def test_block_matches_stepwise(self):
        a = TrajectoryCursor(ladder(), 9)
        b = TrajectoryCursor(ladder(), 9)
        block = a.sample_block(500, 1e-9)
        steps = []
        for _ in range(500):
            steps.append(b.values.copy())
            b.advance(1e-9)
        np.testing.assert_array_equal(block, np.array(steps).T)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.ticks == b.ticks

    def test_mask_leaves_evolution_alone(self):
        m = NoiseModel.from_bands("m", (1e-3, 1e3), 1.0, (1e0, 1e2), 0.5)
        mask = np.zeros(len(m), bool)
        mask[::2] = True
        parent = TrajectoryCursor(m, 17)
        masked = TrajectoryCursor(m, 17, mask)
        vp, vm = parent.sample_block(1000, 1e-9), masked.sample_block(1000, 1e-9)
        np.testing.assert_array_equal(vp, vm)
        dv_p, _ = parent.axis_sums(vp)
        dv_m, _ = masked.axis_sums(vm)
        assert not np.array_equal(dv_p, dv_m)

    def test_masked_sums_add_up(self):
        m = ladder(1e-3, 1e3)
        c = TrajectoryCursor(m, 2)
        v = c.sample_block(2000, 1e-9)
        low = m.frequencies <= 1.0
        total, _ = c.axis_sums(v)
        parts = c.axis_sums(v, low)[0] + c.axis_sums(v, ~low)[0]
        np.testing.assert_allclose(parts, total, rtol=0, atol=4 * np.finfo(float).eps * np.abs(v).sum(0).max())


def _label_of(comp):
    return OUComponent(1.0, 10.0 ** comp[1], "charge").label


class TestPSD:
    def test_single_component_closed_forms(self):
        m = single(2.0, 5.0)
        assert psd_continuous(m, 0.0) == pytest.approx(2.0 / (math.pi * 5.0), rel=1e-15)
        assert psd_continuous(m, 5.0) == pytest.approx(2.0 / (2 * math.pi * 5.0), rel=1e-15)

    def test_ladder_against_high_precision_sum(self):
        mpmath.mp.dps = 50
        oracle = mpmath.fsum(mpmath.mpf(fi) / (mpmath.pi * (mpmath.mpf(fi) ** 2 + 1))
                             for fi in (mpmath.mpf(10) ** k for k in range(-3, 8)))
        assert psd_continuous(ladder(), 1.0) == pytest.approx(float(oracle), rel=1e-14)

    def test_gigahertz_sampling_negligible_aliasing(self):
        m = ladder()
        f = np.logspace(-3, 7, 201)
        dev = np.abs(psd_discrete(m, f, 1e9) / psd_continuous(m, f) - 1)
        assert dev.max() <= 1e-2

    def test_folded_sum_oracle(self):
        m = ladder()
        fs, n_img = 1e7, 10_000
        f = np.array([1e3, 1e5, 1e6, 3e6, 4.5e6, 5e6])
        images = np.arange(-n_img, n_img + 1) * fs
        oracle = np.array([psd_continuous(m, np.abs(x + images)).sum() for x in f])
        got = psd_discrete(m, f, fs)
        np.testing.assert_allclose(got, oracle, rtol=1e-2)
        assert got[-1] / psd_continuous(m, f[-1]) > 1.1

    def test_continuum_limit(self):
        m = single(1.0, 3.0)
        f = np.array([0.0, 1.0, 10.0])
        np.testing.assert_allclose(psd_discrete(m, f, 1e12), psd_continuous(m, f), rtol=1e-6)

    def test_above_nyquist_rejected(self):
        with pytest.raises(ValueError):
            psd_discrete(single(), 6e6, 1e7)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(1e-3, 10.0), st.floats(-3, 7)), min_size=1, max_size=6,
                    unique_by=_label_of),
           st.floats(0.0, 0.5), st.sampled_from([1e5, 1e7, 1e9]))
    def test_folding_only_adds(self, comps, frac, fs):
        m = NoiseModel(tuple(OUComponent(p, 10.0 ** e, "charge") for p, e in comps))
        f = frac * fs
        assert psd_discrete(m, f, fs) >= psd_continuous(m, f) * (1 - 1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(0, 1e6))
    def test_linear_in_power(self, scale, f):
        m = ladder(1e-1, 1e4)
        assert psd_continuous(m.scaled(scale), f) == pytest.approx(scale * psd_continuous(m, f), rel=1e-12)


def test_trace_csv(tmp_path):
    c = TrajectoryCursor(ladder(1e0, 1e3), 0)
    t, dv, _ = c.trace(10, 1e-9)
    path = tmp_path / "trace.csv"
    write_trace_csv(path, t, dv)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time_s", "value"]
    assert len(rows) == 11
    assert float(rows[2][0]) == pytest.approx(1e-9)
