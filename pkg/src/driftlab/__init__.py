"""Wall-clock noise, benchmarking and model-validation laboratory for a drifting
singlet-triplet qubit."""

__version__ = "0.1.0"

from .noise import (Axis, NoiseModel, OUComponent, ScheduleError, TrajectoryCursor,
                    decade_frequencies, psd_continuous, psd_discrete)
from .dynamics import (ControlTimeline, QubitParams, exchange_from_voltage, propagate,
                       step_unitary, survival_probability)
from .clifford import CliffordGroup, build_clifford_group
from .pulses import CompiledGate, PulseShapeParams, compile_generator, gate_fidelity, render_pulse
from .gateset import GateSet, MissingGateError
from .fid import (FIDConfig, analytic_return_probability, calibrate_power, sigma2_charge,
                  sigma2_magnetic, simulate_fid, solve_t2star, reference_model)
from .rb import RBSchedule, fit_rb, run_experiment, run_pass, sample_circuits
from .stats import ECDF, KSGrid, delta_metric, error_grid, ks_statistic, threshold
from .attribution import (TrajectoryPartition, additivity_gap, per_circuit_attribution,
                          sorted_percentile_curves, split_run)
