import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from driftlab.dynamics import (IDENTITY, SIGMA_X, SIGMA_Z, ControlTimeline, QubitParams,
                               exchange_from_voltage, propagate, propagate_masks,
                               propagate_noiseless, propagate_static, rotation, step_unitary,
                               survival_probability)
from driftlab.noise import NoiseModel, ScheduleError, TrajectoryCursor


def dense_step(j, dbz, dt):
    return expm(-1j * 2 * np.pi * dt * 1e6 * (j * SIGMA_Z + dbz * SIGMA_X) / 2)


def equal_up_to_phase(u, v, tol=1e-12):
    k = np.argmax(np.abs(u))
    phase = v.flat[k] / u.flat[k]
    np.testing.assert_allclose(u * phase, v, atol=tol)


def voltage_for(j_mhz, params=QubitParams()):
    return params.insensitivity_mv * math.log(j_mhz / params.j0_mhz)


class TestExchange:
    def test_zero_voltage(self):
        assert exchange_from_voltage(0.0, QubitParams()) == pytest.approx(0.075, rel=1e-15)

    def test_twelve_megahertz(self):
        assert exchange_from_voltage(91.35, QubitParams()) == pytest.approx(12.0, rel=1e-3)

    def test_one_insensitivity(self):
        q = QubitParams()
        assert exchange_from_voltage(q.insensitivity_mv, q) == pytest.approx(0.075 * math.e, rel=1e-15)

    def test_negative_voltage_allowed(self):
        assert 0 < exchange_from_voltage(-200.0, QubitParams()) < 0.075

    def test_params_must_be_positive(self):
        with pytest.raises(ValueError):
            QubitParams(dbz_mhz=0.0)


class TestStepUnitary:
    def test_zero_hamiltonian_is_identity(self):
        np.testing.assert_allclose(step_unitary(0.0, 0.0, 1e-9), IDENTITY, atol=1e-15)

    def test_z_pi(self):
        u = step_unitary(5.0, 0.0, 0.1e-6)
        assert survival_probability(u, "0") == pytest.approx(1.0, abs=1e-12)
        assert survival_probability(u, "+") == pytest.approx(0.0, abs=1e-12)
        equal_up_to_phase(u, rotation("z", np.pi))

    def test_matches_dense_exponential(self):
        np.testing.assert_allclose(step_unitary(12.0, 10.0, 1e-9), dense_step(12.0, 10.0, 1e-9),
                                   atol=1e-12)

    def test_rejects_non_positive_dt(self):
        with pytest.raises(ValueError):
            step_unitary(1.0, 1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 500), st.floats(-50, 50), st.floats(1e-12, 1e-6))
    def test_unitary(self, j, dbz, dt):
        u = step_unitary(j, dbz, dt)
        np.testing.assert_allclose(u.conj().T @ u, IDENTITY, atol=1e-12)
        assert abs(abs(np.linalg.det(u)) - 1) < 1e-12


class TestPropagate:
    def test_constant_exchange_z_pi(self):
        # J = 12 MHz for 41.7 ns with the gradient off, at 10 GS/s
        q = QubitParams(sample_rate_hz=1e10)
        tl = ControlTimeline(np.full(417, voltage_for(12.0)), q.dt)
        u = propagate_static(tl, q, dbz_mhz=-q.dbz_mhz)
        angle = 2 * np.pi * 12.0e6 * 41.7e-9
        equal_up_to_phase(u, rotation("z", angle), tol=1e-9)
        assert abs(angle - np.pi) < 3e-3
        assert survival_probability(u, "+") < 1e-5

    def test_split_product(self):
        q = QubitParams()
        m = NoiseModel.from_bands("m", (1e0, 1e6), 4.0, (1e0, 1e3), 1e-3)
        rng = np.random.default_rng(0)
        tl = ControlTimeline(rng.uniform(60, 110, 700), q.dt)
        a, b = tl.split(250)
        c1, c2 = TrajectoryCursor(m, 5), TrajectoryCursor(m, 5)
        whole = propagate(tl, c1, q)
        ua = propagate(a, c2, q)
        parts = propagate(b, c2, q) @ ua
        np.testing.assert_allclose(whole, parts, atol=1e-13)
        assert c1.ticks == c2.ticks

    def test_start_mismatch_rejected(self):
        q = QubitParams()
        c = TrajectoryCursor(NoiseModel.from_bands("m", (1e0, 1e1), 1.0), 0)
        tl = ControlTimeline(np.zeros(10), q.dt, start_ticks=123)
        with pytest.raises(ScheduleError):
            propagate(tl, c, q)

    def test_sample_rate_mismatch_rejected(self):
        q = QubitParams()
        c = TrajectoryCursor(NoiseModel.from_bands("m", (1e0, 1e1), 1.0), 0)
        with pytest.raises(ScheduleError):
            propagate(ControlTimeline(np.zeros(10), 2e-9), c, q)

    def test_deterministic(self):
        q = QubitParams()
        m = NoiseModel.from_bands("m", (1e-3, 1e7), 1.0, (1e-3, 1e3), 1e-3)
        tl = ControlTimeline(np.full(1000, 80.0), q.dt)
        u1 = propagate(tl, TrajectoryCursor(m, 3), q)
        u2 = propagate(tl, TrajectoryCursor(m, 3), q)
        np.testing.assert_array_equal(u1, u2)

    def test_noise_enters_exchange_and_gradient(self):
        q = QubitParams()
        tl = ControlTimeline(np.full(200, 80.0), q.dt)
        dense = IDENTITY.copy()
        j = exchange_from_voltage(80.0 + 1.5, q)
        for _ in range(200):
            dense = dense_step(j, q.dbz_mhz + 0.2, q.dt) @ dense
        np.testing.assert_allclose(propagate_static(tl, q, 1.5, 0.2), dense, atol=1e-11)

    def test_masks_share_one_draw(self):
        q = QubitParams()
        m = NoiseModel.from_bands("m", (1e0, 1e6), 4.0, (1e0, 1e3), 1e-3)
        tl = ControlTimeline(np.full(300, 90.0), q.dt)
        full = np.ones(len(m), bool)
        none = np.zeros(len(m), bool)
        c = TrajectoryCursor(m, 8)
        u_full, u_none, u_again = propagate_masks(tl, c, q, [full, none, full])
        np.testing.assert_array_equal(u_full, u_again)
        np.testing.assert_allclose(u_none, propagate_noiseless(tl, q), atol=1e-13)
        np.testing.assert_array_equal(u_full, propagate(tl, TrajectoryCursor(m, 8), q))
        assert c.ticks == 300 * 1000

    def test_unitarity_after_a_million_steps(self):
        q = QubitParams()
        rng = np.random.default_rng(1)
        tl = ControlTimeline(rng.uniform(0, 120, 1_000_000), q.dt)
        u = propagate_noiseless(tl, q)
        assert np.linalg.norm(u.conj().T @ u - IDENTITY, 2) < 1e-10

    def test_commuting_phase(self):
        q = QubitParams()
        rng = np.random.default_rng(2)
        v = rng.uniform(40, 100, 5000)
        u = propagate_static(ControlTimeline(v, q.dt), q, dbz_mhz=-q.dbz_mhz)
        angle = 2 * np.pi * np.sum(exchange_from_voltage(v, q)) * 1e6 * q.dt
        expected = np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
        np.testing.assert_allclose(u, expected, atol=1e-9)


class TestSurvival:
    def test_identity(self):
        for s in "01+-":
            assert survival_probability(IDENTITY, s) == pytest.approx(1.0, abs=1e-15)

    def test_x_pi_flips(self):
        assert survival_probability(rotation("x", np.pi), "0") < 1e-30

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 2 * np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi))
    def test_probabilities_sum_to_one(self, a, b, c):
        u = rotation("z", a) @ rotation("y", b) @ rotation("z", c)
        total = survival_probability(u, "0") + survival_probability(u, "0", "1")
        assert abs(total - 1) < 1e-12


def test_timeline_csv(tmp_path):
    q = QubitParams()
    tl = ControlTimeline(np.array([0.0, 18.0]), q.dt)
    tl.write_csv(tmp_path / "tl.csv", q)
    rows = list(csv.reader(open(tmp_path / "tl.csv")))
    assert rows[0] == ["time_ns", "V_mV", "J_MHz"]
    assert float(rows[2][0]) == pytest.approx(1.0)
    assert float(rows[2][2]) == pytest.approx(0.075 * math.e)
