"""Command-line entry point: ``driftlab <verb> --config cfg.json``.

Verbs: calibrate, compile, rb, validate, attribute, psd, fid.  Every verb
writes its data files under ``--out`` plus ``manifest_<verb>.json`` listing
each file with its sha256.  Data files depend only on the config and the
master seed; the manifest additionally records a timestamp.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import (COARSE_SPLIT_CUT_HZ, DEFAULT_SPLIT_CUT_HZ, TrajectoryPartition,
                          attribution_from_runs, split_run)
from .config import BOOTSTRAP, CIRCUITS, FID_MC, ConfigError, ExperimentConfig, stable_key
from .fid import FIDConfig, calibrate_power, simulate_fid, solve_t2star
from .gateset import GateSet, MissingGateError
from .noise import Axis, NoiseModel, OUComponent, psd_continuous, psd_discrete
from .pulses import ACCEPT_INFIDELITY, params_hash
from .rb import run_seed, sample_circuits
from .stats import DistanceCache, delta_metric, per_circuit_grid, read_run_csv, read_r_dataset_csv, write_r_dataset_csv

log = logging.getLogger("driftlab")


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Context:
    def __init__(self, cfg: ExperimentConfig, out: Path, jobs: int, verb: str):
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.verb = verb
        self.files: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def manifest(self, seeds=None, extra=None) -> Path:
        inventory = [{"path": os.path.relpath(p, self.out), "sha256": sha256_file(p)}
                     for p in sorted(set(self.files))]
        m = {
            "schema_version": 1,
            "command": self.verb,
            "config_hash": self.cfg.hash,
            "code_version": __version__,
            "master_seed": self.cfg.master_seed,
            "seeds": seeds,
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "files": inventory,
        }
        if extra:
            m.update(extra)
        p = self.out / f"manifest_{self.verb}.json"
        write_json(p, m)
        return p

    def load_gates(self) -> GateSet:
        return GateSet.load(self.cfg.cache_path(self.out), self.cfg.qubit)

    def circuits(self, gates: GateSet):
        return sample_circuits(self.cfg.schedule, gates, self.cfg.seed_sequence(CIRCUITS))


# -- calibrate ---------------------------------------------------------------

def cmd_calibrate(ctx: Context) -> dict:
    cfg = ctx.cfg
    report = {"schema_version": 1, "models": []}
    rows = []
    for mid in cfg.model_ids:
        entry = {"id": mid}
        try:
            specs = cfg.axis_specs(mid)
        except ConfigError as exc:
            entry["error"] = str(exc)
            report["models"].append(entry)
            continue
        for axis, spec in specs.items():
            fc = cfg.fid_config(axis)
            freqs = spec["frequencies_hz"]
            if not freqs:
                entry[axis] = {"error": "band has no components; T2* unreachable"}
                continue
            if spec["power"] is None:
                power = calibrate_power(spec["t2star_s"], freqs, fc)
                target = spec["t2star_s"]
            else:
                power, target = spec["power"], None
            model = NoiseModel(tuple(OUComponent(power, f, Axis(axis)) for f in freqs))
            achieved = solve_t2star(model, fc)
            entry[axis] = {
                "frequencies_hz": freqs,
                "power": power,
                "sqrt_power": math.sqrt(power),
                "t2star_target_s": target,
                "t2star_achieved_s": achieved,
            }
            rows.append([mid, axis, freqs[0], freqs[-1], len(freqs), power,
                         math.sqrt(power) * 1e3, achieved])
        report["models"].append(entry)
    write_json(ctx.path("calibration.json"), report)
    with open(ctx.path("calibration.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model_id", "axis", "f_ir_hz", "f_uv_hz", "n_components", "power",
                    "sqrt_power_uV_or_kHz", "t2star_s"])
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), r[4], repr(r[5]), repr(r[6]), repr(r[7])])
    return report


# -- compile -----------------------------------------------------------------

def cmd_compile(ctx: Context) -> dict:
    cfg = ctx.cfg
    cache = cfg.cache_path(ctx.out)
    q = cfg.qubit
    cached = False
    if cache.exists():
        try:
            gates = GateSet.load(cache, q)
            cached = True
            log.info("warm cache %s (params %s)", cache, params_hash(q))
        except (MissingGateError, KeyError, ValueError):
            gates = None
    if not cached:
        gates = GateSet.compile(q, seed=cfg.raw["compile"]["seed"])
        gates.save(cache)
    ctx.files.append(cache)
    infid = gates.clifford_infidelities()
    report = {
        "schema_version": 1,
        "params_hash": params_hash(q),
        "group_order": len(gates.group),
        "generators": {g: {"duration_ns": c.duration_ns, "infidelity": c.infidelity,
                           "ok": c.infidelity <= ACCEPT_INFIDELITY}
                       for g, c in sorted(gates.gates.items())},
        "cliffords": [{"index": el.index, "word": list(el.word),
                       "duration_ns": gates.clifford_duration_s(el.index) * 1e9,
                       "infidelity": float(infid[el.index])}
                      for el in gates.group.elements],
    }
    write_json(ctx.path("compile_report.json"), report)
    failed = [g for g, r in report["generators"].items() if not r["ok"]]
    if failed:
        log.error("generators above the infidelity threshold: %s", failed)
    report["cached"] = cached
    return report


# -- rb ----------------------------------------------------------------------

def _rb_job(cfg_raw, model_id, seed_index, out_dir):
    cfg = ExperimentConfig(cfg_raw)
    gates = GateSet.load(cfg.cache_path(out_dir), cfg.qubit)
    circuits = sample_circuits(cfg.schedule, gates, cfg.seed_sequence(CIRCUITS))
    run = run_seed(cfg.model(model_id), cfg.run_seed(model_id, seed_index), circuits,
                   cfg.schedule, cfg.qubit, cfg.shots_mode)
    base = out_dir / "rb" / model_id
    base.mkdir(parents=True, exist_ok=True)
    run.seed = seed_index
    run.write_csv(base / f"seed_{seed_index:04d}.csv")
    run.write_summary(base / f"seed_{seed_index:04d}.json")
    return model_id, seed_index, run.r.tolist(), run.lab_time_s


def cmd_rb(ctx: Context) -> dict:
    cfg = ctx.cfg
    gates = ctx.load_gates()  # hard error before any simulated time
    circuits = ctx.circuits(gates)
    write_json(ctx.path("circuits.json"), {
        "schema_version": 1,
        "circuits": [{"circuit_id": c.circuit_id, "depth": c.depth, "sequence": list(c.sequence),
                      "duration_s": c.duration} for c in circuits]})
    jobs = [(mid, s) for mid in cfg.model_ids for s in cfg.seeds]
    if ctx.jobs == 1:
        results = [_rb_job(cfg.raw, m, s, ctx.out) for m, s in jobs]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=ctx.jobs)(delayed(_rb_job)(cfg.raw, m, s, ctx.out) for m, s in jobs)
    rows = []
    lab = {}
    for mid, s, rs, t in results:
        ctx.files += [ctx.out / "rb" / mid / f"seed_{s:04d}.csv", ctx.out / "rb" / mid / f"seed_{s:04d}.json"]
        rows += [(mid, s, i, r) for i, r in enumerate(rs)]
        lab[f"{mid}/{s}"] = t
    write_r_dataset_csv(ctx.path("rb", "r_dataset.csv"), rows)
    write_json(ctx.path("rb", "lab_time.json"), {"schema_version": 1, "lab_time_s": lab})
    return {"runs": len(results)}


# -- validate ----------------------------------------------------------------

def _load_bitflips(out_dir: Path, models, depth):
    data = {}
    for mid in models:
        per_circuit: dict = {}
        for path in sorted((out_dir / "rb" / mid).glob("seed_*.csv")):
            passes = read_run_csv(path)
            first = next(iter(passes.values()))
            ids = first["circuit_id"][first["depth"] == depth]
            for cid in ids:
                per_circuit.setdefault(int(cid), []).append(
                    np.array([p["p_bitflip"][p["circuit_id"] == cid][0] for p in passes.values()]))
        data[mid] = per_circuit
    return data


def cmd_validate(ctx: Context, dataset: Path | None = None) -> dict:
    cfg = ctx.cfg
    v = cfg.raw["validation"]
    src = dataset or ctx.out / "rb" / "r_dataset.csv"
    if not src.exists():
        raise MissingGateError(f"r dataset {src} not found; run the rb command first")
    r_data = read_r_dataset_csv(src)
    rng = np.random.default_rng(cfg.seed_sequence(BOOTSTRAP, 0))
    summary = {"schema_version": 1, "grids": []}
    for metric in v["metrics"]:
        if metric == "bitflip":
            continue
        data = r_data if metric == "r" else {m: [delta_metric(x) for x in xs] for m, xs in r_data.items()}
        grid = DistanceCache.build(data, v["cross_subsample"], rng).grid(v["p_x"], metric)
        grid.write_json(ctx.path("validate", f"grid_{metric}.json"))
        grid.write_csv(ctx.path("validate", f"grid_{metric}.csv"))
        summary["grids"].append(f"grid_{metric}")
    if "bitflip" in v["metrics"] and dataset is None:
        depth = v["circuit_depth"]
        if depth not in cfg.schedule.depths:
            depth = max(cfg.schedule.depths)
        flips = _load_bitflips(ctx.out, list(r_data), depth)
        for name, grid in zip(("best", "median", "worst"), per_circuit_grid(flips, v["p_x"])):
            grid.write_json(ctx.path("validate", f"grid_bitflip_{name}.json"))
            grid.write_csv(ctx.path("validate", f"grid_bitflip_{name}.csv"))
            summary["grids"].append(f"grid_bitflip_{name}")
        summary["bitflip_depth"] = depth
    write_json(ctx.path("validate", "summary.json"), summary)
    return summary


# -- attribute ---------------------------------------------------------------

def _partitions(cfg: ExperimentConfig, model: NoiseModel):
    a = cfg.raw["attribution"]
    out = []
    for name in a["partitions"]:
        if name == "axis":
            out.append(TrajectoryPartition.by_axis(model))
        elif name == "frequency":
            out.append(TrajectoryPartition.by_frequency(model, DEFAULT_SPLIT_CUT_HZ, name="frequency"))
        elif name == "frequency_alt":
            out.append(TrajectoryPartition.by_frequency(model, COARSE_SPLIT_CUT_HZ, name="frequency_alt"))
        else:
            raise ConfigError(f"unknown partition {name}")
    for name, parts in sorted(a["custom"].items()):
        out.append(TrajectoryPartition.custom(name, parts))
    for p in out:
        p.validate(model)
    return out


def _attr_job(cfg_raw, model_id, seed_index, out_dir):
    cfg = ExperimentConfig(cfg_raw)
    model = cfg.model(model_id)
    gates = GateSet.load(cfg.cache_path(out_dir), cfg.qubit)
    circuits = sample_circuits(cfg.schedule, gates, cfg.seed_sequence(CIRCUITS))
    return split_run(model, cfg.run_seed(model_id, seed_index), _partitions(cfg, model),
                     circuits, cfg.schedule, cfg.qubit)


def cmd_attribute(ctx: Context) -> dict:
    cfg = ctx.cfg
    a = cfg.raw["attribution"]
    model_id = a.get("model") or cfg.model_ids[0]
    model = cfg.model(model_id)
    partitions = _partitions(cfg, model)  # rejects bad partitions before simulating
    ctx.load_gates()
    seeds = list(cfg.seeds)
    if ctx.jobs == 1:
        splits = [_attr_job(cfg.raw, model_id, s, ctx.out) for s in seeds]
    else:
        from joblib import Parallel, delayed
        splits = Parallel(n_jobs=ctx.jobs)(delayed(_attr_job)(cfg.raw, model_id, s, ctx.out) for s in seeds)
    summary = {"schema_version": 1, "model": model_id, "realizations": len(seeds), "partitions": {}}
    for k, part in enumerate(partitions):
        per_real = [sp[part.name] for sp in splits]
        res = attribution_from_runs(per_real, "r", replicates=a["bootstrap"],
                                    seed=cfg.seed_sequence(BOOTSTRAP, 1, k))
        res.write_csv(ctx.path("attribution", f"{part.name}.csv"))
        mid = res.median_gap()
        low = res.band_gap(0, 10)
        summary["partitions"][part.name] = {
            "parts": part.part_names,
            "median_band_gap": mid,
            "bottom_decile_gap": low,
        }
        for cid in a["circuits"]:
            cres = attribution_from_runs(per_real, "bitflip", cid, replicates=a["bootstrap"],
                                         seed=cfg.seed_sequence(BOOTSTRAP, 2, k, cid))
            cres.write_csv(ctx.path("attribution", f"{part.name}_circuit{cid}.csv"))
    write_json(ctx.path("attribution", "summary.json"), summary)
    return summary


# -- psd ---------------------------------------------------------------------

def cmd_psd(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.raw["psd"]
    decades = math.log10(p["f_max_hz"] / p["f_min_hz"])
    f = np.logspace(math.log10(p["f_min_hz"]), math.log10(p["f_max_hz"]),
                    int(round(decades * p["points_per_decade"])) + 1)
    for mid in cfg.model_ids:
        model = cfg.model(mid)
        with open(ctx.path("psd", f"{mid}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis", "sample_rate_hz", "f_hz", "s_continuous", "s_discrete"])
            for axis in Axis:
                sub = model.on_axis(axis)
                if not len(sub):
                    continue
                sc = psd_continuous(sub, f)
                for fs in p["sample_rates_hz"]:
                    sel = f <= fs / 2
                    sd = psd_discrete(sub, f[sel], fs)
                    for x, c, d in zip(f[sel], sc[sel], sd):
                        w.writerow([axis.value, repr(float(fs)), repr(float(x)), repr(float(c)),
                                    repr(float(d))])
    return {"models": cfg.model_ids}


# -- fid ---------------------------------------------------------------------

def cmd_fid(ctx: Context) -> dict:
    cfg = ctx.cfg
    fc = cfg.raw["fid"]
    summary = {"schema_version": 1, "models": {}}
    for mid in cfg.model_ids:
        model = cfg.model(mid)
        summary["models"][mid] = {}
        for axis in ("charge", "magnetic"):
            base = cfg.fid_config(axis)
            t2 = solve_t2star(model, base)
            if not math.isfinite(t2):
                continue
            times = np.linspace(0.0, fc["t_max_over_t2star"] * t2, fc["n_times"])
            conf = FIDConfig(base.mode, base.drive_mhz, times, fc["realizations"], base.qubit)
            res = simulate_fid(model, conf, cfg.seed_sequence(FID_MC, stable_key(mid), 0 if axis == "charge" else 1))
            res.write_csv(ctx.path("fid", f"{mid}_{axis}.csv"))
            summary["models"][mid][axis] = {
                "t2star_analytic_s": t2,
                "t2star_fit_s": res.t2star_fit_s,
                "max_abs_deviation": float(np.max(np.abs(res.p_montecarlo - res.p_analytic))),
            }
    write_json(ctx.path("fid", "summary.json"), summary)
    return summary


COMMANDS = {
    "calibrate": cmd_calibrate,
    "compile": cmd_compile,
    "rb": cmd_rb,
    "validate": cmd_validate,
    "attribute": cmd_attribute,
    "psd": cmd_psd,
    "fid": cmd_fid,
}


def parse_seed_range(text: str) -> list[int]:
    """'A..B' -> [A, B) as a two-element list."""
    try:
        a, b = (int(x) for x in text.split(".."))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seed range must look like A..B, got {text!r}") from exc
    if b <= a or a < 0:
        raise argparse.ArgumentTypeError("seed range A..B needs 0 <= A < B")
    return [a, b]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
        p.add_argument("--seeds", type=parse_seed_range, help="seed indices A..B (B exclusive)")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--model", action="append", help="restrict to these model ids")
        p.add_argument("--passes", type=int)
        p.add_argument("--depths", type=lambda s: [int(x) for x in s.split(",")],
                       help="comma-separated RB depths")
        p.add_argument("--spam-us", type=float)
        p.add_argument("--shots-mode", action="store_true")
        if verb == "validate":
            p.add_argument("--dataset", type=Path, help="external r dataset CSV to validate")
    return parser


def _apply_overrides(raw: dict, args) -> dict:
    raw = json.loads(json.dumps(raw))
    if args.seeds:
        raw["seeds"] = args.seeds
    sched = raw.setdefault("schedule", {})
    for key, attr in (("passes", "passes"), ("depths", "depths"), ("spam_us", "spam_us")):
        val = getattr(args, attr, None)
        if val is not None:
            sched[key] = val
    if getattr(args, "shots_mode", False):
        sched["shots_mode"] = True
    models = getattr(args, "model", None)
    if models:
        known = {m["id"] for m in raw["models"]}
        unknown = set(models) - known
        if unknown:
            raise ConfigError(f"unknown model ids {sorted(unknown)}")
        raw["models"] = [m for m in raw["models"] if m["id"] in models]
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        cfg = ExperimentConfig.from_dict(_apply_overrides(raw, args))
        out = args.out or Path(cfg.raw["out_dir"])
        ctx = Context(cfg, out, args.jobs, args.verb)
        if args.verb == "validate":
            result = cmd_validate(ctx, args.dataset)
        else:
            result = COMMANDS[args.verb](ctx)
        ctx.manifest(seeds=cfg.raw["seeds"], extra={"result": result} if args.verb == "compile" else None)
    except (ConfigError, MissingGateError, FileNotFoundError) as exc:
        print(f"driftlab {args.verb}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
