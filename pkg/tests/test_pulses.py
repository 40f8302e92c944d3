import json
import math

import numpy as np
import pytest

from driftlab.clifford import GENERATOR_IDS, GENERATOR_TARGETS
from driftlab.dynamics import (ControlTimeline, QubitParams, propagate_noiseless, propagate_static,
                               rotation)
from driftlab.gateset import REQUIRED, GateSet, MissingGateError
from driftlab.pulses import (ACCEPT_INFIDELITY, RISE_PER_SIGMA, CompilationError, PulseShapeParams,
                             compile_generator, gate_fidelity, identity_gate, render_pulse)


def crossing(t, v, level):
    k = np.flatnonzero(v >= level)[0]
    return t[k - 1] + (level - v[k - 1]) * (t[k] - t[k - 1]) / (v[k] - v[k - 1])


class TestRender:
    def test_zero_amplitude(self):
        tl = render_pulse(PulseShapeParams((0.0, 0.0), (30, 40), (10, 5, 10), 2.0))
        assert len(tl) == 95
        np.testing.assert_array_equal(tl.samples_mv, 0.0)

    def test_rise_time(self):
        shape = PulseShapeParams((100.0,), (30.0,), (20.0, 20.0), 2.0)
        tl = render_pulse(shape, 1e11)
        t = (np.arange(len(tl)) + 0.5) * 0.01
        rise = crossing(t, tl.samples_mv, 90.0) - crossing(t, tl.samples_mv, 10.0)
        assert rise == pytest.approx(5.126, abs=2e-3)
        assert shape.rise_time_ns == pytest.approx(2.563 * 2.0, rel=1e-3)
        assert RISE_PER_SIGMA == pytest.approx(2.5631, abs=1e-4)

    def test_square_limit(self):
        tl = render_pulse(PulseShapeParams((80.0, 110.0), (31, 40), (4, 7, 3), 0.0))
        expected = np.r_[np.zeros(4), np.full(31, 80.0), np.zeros(7), np.full(40, 110.0), np.zeros(3)]
        np.testing.assert_array_equal(tl.samples_mv, expected)

    def test_area_preserved(self):
        shape = PulseShapeParams((90.0, 75.0), (35.0, 42.0), (25.0, 25.0, 25.0), 2.3)
        v = render_pulse(shape).samples_mv
        np.testing.assert_allclose(v[:72].sum(), 90.0 * 35.0, rtol=1e-6)
        np.testing.assert_allclose(v[72:].sum(), 75.0 * 42.0, rtol=1e-6)

    def test_unaligned_duration_rejected(self):
        with pytest.raises(ValueError):
            render_pulse(PulseShapeParams((90.0,), (30.5,), (5.0, 5.0), 2.0))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            PulseShapeParams((90.0,), (30.0,), (5.0,), 2.0)
        with pytest.raises(ValueError):
            PulseShapeParams((90.0,), (30.0,), (-1.0, 5.0), 2.0)
        bad = PulseShapeParams((150.0,), (20.0,), (5.0, 5.0), 0.5)
        assert len(bad.shape_violations()) == 3
        assert PulseShapeParams((90.0,), (30.0,), (8.0, 8.0), 2.0).shape_violations() == []


class TestFidelity:
    def test_self(self):
        u = rotation("y", 0.4)
        assert gate_fidelity(u, u) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert gate_fidelity(rotation("z", np.pi), rotation("x", np.pi)) < 1e-30

    @pytest.mark.parametrize("theta", [0.0, 0.3, 1.0, np.pi / 2, 2.5, np.pi])
    def test_z_rotation(self, theta):
        assert gate_fidelity(np.eye(2), rotation("z", theta)) == pytest.approx(math.cos(theta / 2) ** 2,
                                                                                abs=1e-15)


class TestCompile:
    def test_identity_gate(self):
        g = compile_generator("I")
        assert len(g.timeline) == 0 and g.infidelity == 0.0
        assert gate_fidelity(np.eye(2), propagate_noiseless(g.timeline, QubitParams())) == 1.0

    def test_analytic_z_pi(self):
        q = QubitParams()
        v = q.insensitivity_mv * math.log((1 / (2 * 30e-9)) / 1e6 / q.j0_mhz)
        assert v == pytest.approx(97.2, abs=0.1)
        tl = ControlTimeline(np.full(30, v), q.dt)
        u = propagate_static(tl, q, dbz_mhz=-q.dbz_mhz)
        assert gate_fidelity(rotation("z", np.pi), u) == pytest.approx(1.0, abs=1e-12)

    def test_generators_meet_threshold(self, gates, params):
        for g in GENERATOR_IDS:
            cg = gates.gates[g]
            infid = 1 - gate_fidelity(GENERATOR_TARGETS[g], propagate_noiseless(cg.timeline, params))
            assert infid <= ACCEPT_INFIDELITY
            assert cg.shape.shape_violations() == []
            assert len(cg.timeline) == cg.duration_ns

    def test_word_error_budget(self, gates):
        per_gen = max(gates.gates[g].infidelity for g in GENERATOR_IDS)
        infid = gates.clifford_infidelities()
        for el in gates.group.elements:
            assert infid[el.index] <= len(el.word) * per_gen + 1e-9

    def test_reproducible(self, gates, params):
        seed_shape = gates.gates["Zp"].shape
        a = compile_generator("Zp", params, seed_shape, seed=5, starts=2)
        b = compile_generator("Zp", params, seed_shape, seed=5, starts=2)
        np.testing.assert_array_equal(a.timeline.samples_mv, b.timeline.samples_mv)
        assert a.shape == b.shape and a.infidelity == b.infidelity

    def test_infeasible_durations(self):
        with pytest.raises(CompilationError) as err:
            compile_generator("Xp", durations_ns=[10])
        assert err.value.best_infidelity == np.inf

    def test_failure_reports_best(self):
        with pytest.raises(CompilationError) as err:
            compile_generator("Xp", durations_ns=[100], pulse_counts=(1,), starts=1, screen=1e-15)
        assert err.value.generator == "Xp"
        assert 0 < err.value.best_infidelity < 1


class TestCache:
    def test_roundtrip(self, gates, gates_path, params):
        loaded = GateSet.load(gates_path, params)
        for g in REQUIRED:
            np.testing.assert_array_equal(loaded.gates[g].timeline.samples_mv,
                                          gates.gates[g].timeline.samples_mv)
            assert loaded.gates[g].shape == gates.gates[g].shape

    def test_params_mismatch(self, gates_path, params):
        with pytest.raises(MissingGateError):
            GateSet.load(gates_path, params.with_(dbz_mhz=11.0))

    def test_missing_file(self, tmp_path, params):
        with pytest.raises(MissingGateError):
            GateSet.load(tmp_path / "nothing.json", params)

    def test_missing_generator(self, gates_path, params, tmp_path):
        blob = json.load(open(gates_path))
        blob["gates"] = [g for g in blob["gates"] if g["generator"] != "Zm"]
        path = tmp_path / "partial.json"
        json.dump(blob, open(path, "w"))
        with pytest.raises(MissingGateError):
            GateSet.load(path, params)

    def test_identity_has_no_duration(self, params):
        assert identity_gate(params).duration_ns == 0.0

    def test_timeline_segments(self, gates):
        tl = gates.timeline([3, 0, 7])
        assert [s[0] for s in tl.segments] == ["C3", "C0", "C7"]
        assert len(tl) == sum(len(gates.clifford_samples(k)) for k in (3, 0, 7))
