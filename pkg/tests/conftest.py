import shutil
from pathlib import Path

import numpy as np
import pytest

from driftlab.attribution import TrajectoryPartition, split_run
from driftlab.cli import main
from driftlab.dynamics import QubitParams
from driftlab.fid import reference_model
from driftlab.gateset import GateSet
from driftlab.rb import RBSchedule, sample_circuits

ATTR_REALIZATIONS = 20
ATTR_PASSES = 30


@pytest.fixture(scope="session")
def params():
    return QubitParams()


@pytest.fixture(scope="session")
def gates(params):
    """Compiled generator pulses for the default device (about two minutes)."""
    return GateSet.compile(params, seed=0)


@pytest.fixture(scope="session")
def gates_path(gates, tmp_path_factory):
    path = tmp_path_factory.mktemp("cache") / "gates.json"
    gates.save(path)
    return path


@pytest.fixture(scope="session")
def full_circuits(gates):
    return sample_circuits(RBSchedule(), gates, circuit_seed=2024)


def model7_partitions(model):
    return [TrajectoryPartition.by_axis(model),
            TrajectoryPartition.by_frequency(model, 1e3, name="frequency"),
            TrajectoryPartition.by_frequency(model, 1e0, name="frequency_alt")]


@pytest.fixture(scope="session")
def model7_splits(gates, full_circuits, params):
    """20 realizations x 30 passes of Model 7 with axis and both frequency splits.

    All runs of one realization share a single noise trajectory.
    """
    model = reference_model(7)
    schedule = RBSchedule(passes=ATTR_PASSES)
    parts = model7_partitions(model)
    root = np.random.SeedSequence(777)
    return [split_run(model, s, parts, full_circuits, schedule, params)
            for s in root.spawn(ATTR_REALIZATIONS)]


DESK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
DESK_SEEDS = 20


def warm_out_dir(root, gates_path):
    """Output directory preloaded with the session's compiled gate cache."""
    root.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(gates_path, root / "gates.json")
    return root


@pytest.fixture(scope="session")
def desk_run(gates_path, tmp_path_factory):
    """Desk pipeline: two charge-band models x 20 seeds x 20 passes, then validate."""
    out = warm_out_dir(tmp_path_factory.mktemp("desk"), gates_path)
    common = ["--config", str(DESK_CONFIG), "--out", str(out), "--seeds", f"0..{DESK_SEEDS}"]
    assert main(["rb"] + common) == 0
    assert main(["validate"] + common) == 0
    return out


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if outcome == "passed" and rep.when != "call":
                continue
            name = nodeid.split("::")[-1].replace("test_criterion_", "")
            if lines.get(name, "").startswith("FAIL"):
                continue
            detail = dict(rep.user_properties).get("detail", "")
            lines[name] = f"{'PASS' if outcome == 'passed' else 'FAIL'}  {detail}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(f"criterion {name}: {lines[name]}")
