"""Experiment configs, run directories, sweeps and the command-line interface.

A run directory holds::

    config.json       canonical config (its sha256 is the config hash)
    series.csv        diagnostics every `cadence` steps
    snapshots.jsonl   grid snapshots used by the oracles
    checkpoint.json   latest resumable state
    manifest.json     hash, wall times, termination cause, artifact list
"""
from __future__ import annotations

import argparse
import copy
import csv
import fcntl
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import curvature as curv
from . import flow as fl
from . import geometry as geo
from . import oracles as orc
from .errors import (
    ConfigurationError,
    ConstructionError,
    DomainError,
    NotApplicable,
    ParameterError,
    UsageError,
)
from .profiles import LIBRARY_NAMES, SPEC_KEYS, Profile, library, library_profile, profile_from_spec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

GRID_DEFAULTS = {"N": 256, "X": 2.0, "sigma0": 1.0}
FLOW_DEFAULTS = {
    "t_end": None,
    "cfl": 0.1,
    "cadence": 10,
    "bc_outer": "linear_slope",
    "slope": None,
    "remesh_threshold": 1.25,
    "remesh_every": None,
    "dt_rule": "stiff",
    "max_halvings": 12,
    "extinction_ratio": 1e4,
    "snapshot_cadence": None,
    "checkpoint_every": 1000,
    "clip_to_tail": True,
    "max_steps": None,
}
ORACLE_KEYS = {"name", "tolerance_scale", "params"}
ORACLE_NAMES = ("fs_evolution", "f_equation", "phi_barrier", "supersolution", "ricci_pinch", "scalar_floor", "distance_distortion")
SWEEP_KEYS = {"parameter", "values"}
SWEEP_LEAVES = {"k", "eps", "N", "v", "slope"}
TOP_KEYS = {"name", "profile", "n", "grid", "flow", "oracles", "sweep", "output_dir"}
CONSTRUCTION_KINDS = {"cap_linear", "cap_cylinder", "smooth_cone"}


# ---------------------------------------------------------------------------
# config


def _reject_unknown(obj, allowed, path):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path or '<root>'}: expected a JSON object")
    for key in obj:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigurationError(f"unknown key '{where}'")


def _check_profile_spec(spec, path):
    if isinstance(spec, str):
        if spec not in LIBRARY_NAMES:
            raise ConfigurationError(f"{path}: unknown library profile '{spec}'")
        return
    _reject_unknown(spec, SPEC_KEYS, path)
    if "kind" not in spec:
        raise ConfigurationError(f"{path}.kind is required")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigurationError(f"{path}.params: expected a JSON object")
    if spec["kind"] in CONSTRUCTION_KINDS and "base" in params:
        _check_profile_spec(params["base"], f"{path}.params.base")


def _number(value, path, kind=float, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


@dataclass
class ExperimentConfig:
    name: str
    profile: dict | str
    n: int
    grid: dict = field(default_factory=lambda: dict(GRID_DEFAULTS))
    flow: dict = field(default_factory=lambda: dict(FLOW_DEFAULTS))
    oracles: list = field(default_factory=list)
    sweep: dict | None = None
    output_dir: str = "runs"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _reject_unknown(d, TOP_KEYS, "")
        for key in ("name", "profile", "n"):
            if key not in d:
                raise ConfigurationError(f"'{key}' is required")
        if not isinstance(d["name"], str) or not d["name"] or "/" in d["name"]:
            raise ConfigurationError("name: expected a non-empty string without '/'")
        _check_profile_spec(d["profile"], "profile")
        n = _number(d["n"], "n", int)
        if n < 2:
            raise ConfigurationError("n: fiber dimension must be >= 2")

        grid = dict(GRID_DEFAULTS)
        raw = d.get("grid", {})
        _reject_unknown(raw, GRID_DEFAULTS, "grid")
        grid.update(raw)
        grid["N"] = _number(grid["N"], "grid.N", int)
        grid["X"] = _number(grid["X"], "grid.X")
        grid["sigma0"] = _number(grid["sigma0"], "grid.sigma0")

        flow = dict(FLOW_DEFAULTS)
        raw = d.get("flow", {})
        _reject_unknown(raw, FLOW_DEFAULTS, "flow")
        flow.update(raw)
        if flow["t_end"] is None:
            raise ConfigurationError("flow.t_end is required")
        for key in ("t_end", "cfl", "extinction_ratio"):
            flow[key] = _number(flow[key], f"flow.{key}")
        for key in ("slope", "remesh_threshold"):
            flow[key] = _number(flow[key], f"flow.{key}", allow_none=True)
        for key in ("cadence", "max_halvings"):
            flow[key] = _number(flow[key], f"flow.{key}", int)
        for key in ("remesh_every", "snapshot_cadence", "checkpoint_every", "max_steps"):
            flow[key] = _number(flow[key], f"flow.{key}", int, allow_none=True)
        if flow["bc_outer"] not in fl.BC_KINDS:
            raise ConfigurationError(f"flow.bc_outer must be one of {fl.BC_KINDS}")
        if flow["dt_rule"] not in fl.DT_RULES:
            raise ConfigurationError(f"flow.dt_rule must be one of {fl.DT_RULES}")
        if not isinstance(flow["clip_to_tail"], bool):
            raise ConfigurationError("flow.clip_to_tail: expected true or false")

        oracles = []
        raw = d.get("oracles", [])
        if not isinstance(raw, list):
            raise ConfigurationError("oracles: expected a list")
        for i, entry in enumerate(raw):
            path = f"oracles[{i}]"
            if isinstance(entry, str):
                entry = {"name": entry}
            _reject_unknown(entry, ORACLE_KEYS, path)
            if entry.get("name") not in ORACLE_NAMES:
                raise ConfigurationError(f"{path}.name must be one of {ORACLE_NAMES}")
            params = entry.get("params", {})
            if not isinstance(params, dict):
                raise ConfigurationError(f"{path}.params: expected a JSON object")
            oracles.append(
                {
                    "name": entry["name"],
                    "tolerance_scale": _number(entry.get("tolerance_scale", 1.0), f"{path}.tolerance_scale"),
                    "params": params,
                }
            )

        sweep = d.get("sweep")
        if sweep is not None:
            _reject_unknown(sweep, SWEEP_KEYS, "sweep")
            param = sweep.get("parameter")
            if not isinstance(param, str) or param.split(".")[-1] not in SWEEP_LEAVES:
                raise ConfigurationError(f"sweep.parameter must be a dotted path ending in one of {sorted(SWEEP_LEAVES)}")
            values = sweep.get("values")
            if not isinstance(values, list) or not values:
                raise ConfigurationError("sweep.values: expected a non-empty list")
            sweep = {"parameter": param, "values": [_number(v, f"sweep.values[{i}]") if not isinstance(v, int) else v for i, v in enumerate(values)]}

        out = d.get("output_dir", "runs")
        if not isinstance(out, str):
            raise ConfigurationError("output_dir: expected a path string")
        return cls(d["name"], copy.deepcopy(d["profile"]), n, grid, flow, oracles, sweep, out)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sweep"] is None:
            del d["sweep"]
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def build_profile(self) -> Profile:
        spec = self.profile
        try:
            return library_profile(spec, self.n) if isinstance(spec, str) else profile_from_spec(spec)
        except (ParameterError, ConstructionError) as exc:
            raise ConfigurationError(f"profile: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def with_parameter(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with the dotted ``path`` set to ``value``."""
    d = cfg.to_dict()
    d.pop("sweep", None)
    parts = path.split(".")
    node = d
    for i, key in enumerate(parts[:-1]):
        if not isinstance(node, dict) or key not in node:
            raise ConfigurationError(f"sweep.parameter: '{'.'.join(parts[: i + 1])}' is not in the config")
        node = node[key]
    if not isinstance(node, dict):
        raise ConfigurationError(f"sweep.parameter: '{path}' does not name a config value")
    node[parts[-1]] = value
    d["name"] = f"{cfg.name}__{parts[-1]}={value}"
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# single runs


def tail_extinction_time(profile: Profile, n: int) -> float | None:
    """(eps/2)^2 / (2(n-1)) for cylinder caps, None otherwise."""
    if profile.kind != "cap_cylinder":
        return None
    return (profile.params["eps"] / 2.0) ** 2 / (2.0 * (n - 1))


def run_horizon(cfg: ExperimentConfig, profile: Profile) -> float:
    t_end = cfg.flow["t_end"]
    tail = tail_extinction_time(profile, cfg.n)
    if tail is not None and cfg.flow["clip_to_tail"]:
        t_end = min(t_end, 0.4 * tail)
    return t_end


def step_control(cfg: ExperimentConfig) -> fl.StepControl:
    return fl.StepControl(
        cfl=cfg.flow["cfl"],
        dt_rule=cfg.flow["dt_rule"],
        max_halvings=cfg.flow["max_halvings"],
        extinction_ratio=cfg.flow["extinction_ratio"],
    )


def initial_state(cfg: ExperimentConfig, profile: Profile) -> fl.GridState:
    g = cfg.grid
    return fl.init_state(profile, cfg.n, N=g["N"], X=g["X"], bc_outer=cfg.flow["bc_outer"], slope=cfg.flow["slope"], sigma0=g["sigma0"])


def _row(values) -> str:
    return ",".join(repr(float(v)) for v in values) + "\n"


class _RunFiles:
    """Append-only writers for one run directory, flushed at every checkpoint."""

    def __init__(self, run_dir: Path, n: int, bc_outer: str, mode: str):
        self.run_dir = run_dir
        self.n, self.bc_outer = n, bc_outer
        self.series = open(run_dir / "series.csv", mode)
        self.snaps = open(run_dir / "snapshots.jsonl", mode)
        if mode == "w":
            self.series.write(",".join(fl.SERIES_COLUMNS) + "\n")

    def record(self, rec):
        self.series.write(_row(rec.row()))

    def snapshot(self, snap):
        self.snaps.write(fl.snapshot_to_json(snap, self.n, self.bc_outer) + "\n")

    def checkpoint(self, state):
        for fh in (self.series, self.snaps):
            fh.flush()
            os.fsync(fh.fileno())
        fl.write_checkpoint(self.run_dir / "checkpoint.json", state)

    def close(self):
        self.series.close()
        self.snaps.close()


def _registry_append(root: Path, entry: dict) -> None:
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "registry.jsonl", "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _execute(cfg: ExperimentConfig, run_dir: Path, state: fl.GridState, mode: str, started: float) -> dict:
    profile = cfg.build_profile()
    t_end = run_horizon(cfg, profile)
    ctl = step_control(cfg)
    files = _RunFiles(run_dir, cfg.n, cfg.flow["bc_outer"], mode)
    try:
        run = fl.evolve(
            state,
            t_end,
            cadence=cfg.flow["cadence"],
            control=ctl,
            remesh_threshold=cfg.flow["remesh_threshold"],
            remesh_every=cfg.flow["remesh_every"],
            snapshot_cadence=cfg.flow["snapshot_cadence"],
            keep_snapshots=False,
            checkpoint_every=cfg.flow["checkpoint_every"],
            checkpoint_writer=files.checkpoint,
            record_writer=files.record,
            snapshot_writer=files.snapshot,
            max_steps=cfg.flow["max_steps"],
        )
        files.checkpoint(run.final)
    finally:
        files.close()
    artifacts = ["config.json", "series.csv", "snapshots.jsonl", "checkpoint.json"]
    failure = None
    if run.failure_state is not None:
        (run_dir / "failure_state.json").write_text(fl.state_to_json(run.failure_state))
        artifacts.append("failure_state.json")
        failure = {"t": run.failure_state.t, "x": run.failure_x}
    dt0 = fl.stable_dt(initial_state(cfg, profile), ctl)
    manifest = {
        "name": cfg.name,
        "config_hash": cfg.config_hash(),
        "software_version": __version__,
        "start_wall": started,
        "end_wall": time.time(),
        "termination": run.termination,
        "message": run.message,
        "t_end": t_end,
        "t_final": run.final.t,
        "steps": run.final.steps,
        "remeshes": run.remeshes,
        "dt0": dt0,
        "failure": failure,
        "artifacts": artifacts,
    }
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    _registry_append(run_dir.parent, {k: manifest[k] for k in ("name", "config_hash", "termination", "t_final", "end_wall")})
    return manifest


def run_flow(cfg: ExperimentConfig, run_dir=None) -> dict:
    """Run one experiment from scratch and return its manifest."""
    run_dir = Path(run_dir) if run_dir is not None else Path(cfg.output_dir) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    (run_dir / "config.json").write_text(cfg.canonical_json())
    state = initial_state(cfg, cfg.build_profile())
    return _execute(cfg, run_dir, state, "w", started)


def _truncate_lines(path: Path, keep, header: bool):
    lines = path.read_text().splitlines(keepends=True) if path.exists() else []
    head, body = (lines[:1], lines[1:]) if header else ([], lines)
    kept = []
    for line in body:
        if not line.endswith("\n"):
            break  # torn write from an interrupted run
        try:
            if not keep(line):
                break
        except (ValueError, json.JSONDecodeError):
            break
        kept.append(line)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(head + kept))
    os.replace(tmp, path)


def resume_run(run_dir, t_end: float | None = None) -> dict:
    """Continue a run from its latest checkpoint.

    Series and snapshot lines written after the checkpoint are dropped and
    regenerated, so the result matches an uninterrupted run.
    """
    run_dir = Path(run_dir)
    cfg_path, ckpt = run_dir / "config.json", run_dir / "checkpoint.json"
    if not cfg_path.exists() or not ckpt.exists():
        raise UsageError(f"{run_dir} has no config.json/checkpoint.json to resume from")
    cfg = load_config(cfg_path)
    if t_end is not None:
        cfg.flow["t_end"] = float(t_end)
    cfg.flow["max_steps"] = None
    (run_dir / "config.json").write_text(cfg.canonical_json())
    state = fl.read_checkpoint(ckpt)
    # a step-0 checkpoint makes evolve re-record the initial state, so nothing is kept
    started_steps = state.steps > 0
    _truncate_lines(run_dir / "series.csv", lambda line: started_steps and float(line.split(",", 1)[0]) <= state.t, header=True)
    _truncate_lines(run_dir / "snapshots.jsonl", lambda line: started_steps and json.loads(line)["steps"] <= state.steps, header=False)
    if state.t >= run_horizon(cfg, cfg.build_profile()) * (1 - 1e-14):
        raise UsageError(f"run already reached its horizon t={state.t}")
    return _execute(cfg, run_dir, state, "a", time.time())


# ---------------------------------------------------------------------------
# reading runs back


@dataclass
class StoredRun:
    n: int
    records: list
    snapshots: list
    dt0: float
    manifest: dict


def read_series(path) -> list:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != fl.SERIES_COLUMNS:
        raise UsageError(f"{path}: not a series file")
    return [fl.DiagnosticsRecord(*map(float, r)) for r in rows[1:]]


def read_snapshots(path) -> list:
    with open(path) as fh:
        return [fl.snapshot_from_dict(json.loads(line)) for line in fh if line.strip()]


def load_run(run_dir, with_snapshots: bool = True) -> StoredRun:
    run_dir = Path(run_dir)
    try:
        cfg = load_config(run_dir / "config.json")
        manifest = json.loads((run_dir / "manifest.json").read_text())
        records = read_series(run_dir / "series.csv")
    except FileNotFoundError as exc:
        raise UsageError(f"{run_dir} is not a completed run directory ({exc.filename} missing)") from exc
    snaps = []
    if with_snapshots:
        path = run_dir / "snapshots.jsonl"
        if not path.exists():
            raise UsageError(f"{run_dir} has no stored snapshots")
        snaps = read_snapshots(path)
    return StoredRun(cfg.n, records, snaps, manifest["dt0"], manifest)


# ---------------------------------------------------------------------------
# verification


def _finite_or_none(v):
    if isinstance(v, dict):
        return {k: _finite_or_none(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite_or_none(x) for x in v]
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    return v


def _report_dict(rep: orc.OracleReport) -> dict:
    """JSON-ready report; non-finite numbers (vacuous checks) become null."""
    d = asdict(rep)
    d["worst_location"] = {"x": d["worst_location"].get("x"), "t": d["worst_location"].get("t")}
    return _finite_or_none(d)


def _window(params, key="window"):
    w = params.get(key)
    return None if w is None else tuple(w)


def _residual_oracle(name, fn, run, params, tolerance_scale):
    reps = fn(run, window=_window(params), region=_window(params, "region"))
    if not reps:
        return orc.OracleReport(name, True, 0.0, {"x": None, "t": None}, 0.0, "vacuous")
    worst = max(reps, key=lambda r: r.sup_abs_residual)
    tol = tolerance_scale * orc.TOLERANCE_FACTOR * worst.grid_h**2
    return orc.OracleReport(
        name,
        True,
        worst.sup_abs_residual,
        {"x": worst.s, "t": worst.t},
        tol,
        "clean" if worst.sup_abs_residual <= tol else "above_tolerance",
        {"grid_h": worst.grid_h, "expected_order": worst.expected_order, "reports": len(reps)},
    )


def run_oracle(name: str, run: StoredRun, params: dict | None = None, tolerance_scale: float = 1.0) -> orc.OracleReport:
    params = dict(params or {})
    if name == "fs_evolution":
        return _residual_oracle(name, orc.fs_evolution_residual, run, params, tolerance_scale)
    if name == "f_equation":
        return _residual_oracle(name, orc.f_equation_residual, run, params, tolerance_scale)
    if name == "phi_barrier":
        delta = params.get("delta")
        if delta is None:
            delta = float(np.min(run.snapshots[0].fs))
        return orc.phi_barrier_check(run, float(delta), inner=params.get("inner"), tolerance_scale=tolerance_scale)
    if name == "supersolution":
        try:
            return orc.supersolution_check(run, tolerance_scale=tolerance_scale)
        except NotApplicable as exc:
            return orc.OracleReport(name, False, math.nan, {"x": None, "t": None}, math.nan, "not_applicable", {"reason": str(exc)})
    if name == "ricci_pinch":
        return orc.ricci_pinch_residual(run, window=_window(params), region=_window(params, "region"), c=params.get("c"), tolerance_scale=tolerance_scale)
    if name == "scalar_floor":
        return orc.scalar_floor_check(run, params.get("K0"))
    if name == "distance_distortion":
        c_fit = max((r.lambda_t for r in run.records), default=0.0)
        rep = fl.distance_distortion_check(run.snapshots, c_fit)
        ok = math.isfinite(rep.beta_fit)
        return orc.OracleReport(name, True, rep.beta_fit, {"x": None, "t": None}, math.inf, "clean" if ok else "violated", asdict(rep))
    raise UsageError(f"unknown oracle '{name}'")


def verify_run(run_dir, names=None, tolerance_scale: float = 1.0) -> list:
    """Run oracles on a stored run and write one JSON report per oracle."""
    run_dir = Path(run_dir)
    run = load_run(run_dir)
    cfg = load_config(run_dir / "config.json")
    configured = {o["name"]: o for o in cfg.oracles}
    names = list(names) if names else (list(configured) or ["fs_evolution"])
    out = []
    for name in names:
        entry = configured.get(name, {"params": {}, "tolerance_scale": 1.0})
        rep = run_oracle(name, run, entry["params"], tolerance_scale * entry["tolerance_scale"])
        d = _report_dict(rep)
        with open(run_dir / f"oracle_{name}.json", "w") as fh:
            json.dump(d, fh, indent=2, default=_json_default)
        out.append(d)
    return out


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")


# ---------------------------------------------------------------------------
# sweeps


def _sweep_member(payload):
    cfg_dict, run_dir = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return run_flow(cfg, run_dir)
    except Exception as exc:  # reported per member, never fatal for the family
        return {"name": cfg.name, "termination": "error", "message": f"{type(exc).__name__}: {exc}"}


def run_sweep(cfg: ExperimentConfig, jobs: int | None = None) -> dict:
    """Run every member of ``cfg.sweep`` and summarize the family."""
    if cfg.sweep is None:
        raise ConfigurationError("config has no 'sweep' section")
    root = Path(cfg.output_dir) / cfg.name
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(cfg.canonical_json())
    param, values = cfg.sweep["parameter"], cfg.sweep["values"]
    members = [with_parameter(cfg, param, v) for v in values]
    for m in members:
        m.output_dir = str(root)
    payloads = [(m.to_dict(), str(root / m.name)) for m in members]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            manifests = list(pool.map(_sweep_member, payloads))
    else:
        manifests = [_sweep_member(p) for p in payloads]

    rows, causes, runs = [], {}, []
    for value, member, man in zip(values, members, manifests):
        row = {"value": value, "name": member.name, "termination": man["termination"], "t_final": man.get("t_final")}
        if man["termination"] in ("error", "blowup", "interrupted"):
            causes[str(value)] = man.get("message") or man["termination"]
            rows.append(row)
            continue
        stored = load_run(root / member.name, with_snapshots=False)
        runs.append(stored)
        row["lambda_fit"] = orc.lambda_of(stored)
        row["final_min_f"] = stored.records[-1].min_f
        profile = member.build_profile()
        tail = tail_extinction_time(profile, member.n)
        if tail is not None:
            row["tail_prediction"] = tail
            row["extinction_time"] = man["t_final"] if man["termination"] == "extinction" else None
        if profile.kind == "cylinder":
            c = profile.params.get("radius", 1.0)
            exact = math.sqrt(c * c - 2.0 * (member.n - 1) * man["t_final"])
            row["rel_error"] = abs(row["final_min_f"] - exact) / exact
        rows.append(row)

    family = {"parameter": param, "values": values, "rows": rows, "causes": causes}
    if causes:
        family["verdict"] = "incomplete"
    elif len(runs) >= 3:
        fit = orc.lambda_fit(runs, labels=[float(v) for v in values])
        family.update(verdict=fit.verdict, trend=fit.trend, spread=fit.spread, upward_drift=fit.upward_drift)
    else:
        family["verdict"] = "too_few_runs"
    with open(root / "family.json", "w") as fh:
        json.dump(family, fh, indent=2, default=_json_default)
    cols = ["value", "name", "termination", "t_final", "lambda_fit", "final_min_f", "tail_prediction", "extinction_time", "rel_error"]
    with open(root / "family.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in cols})
    return family


# ---------------------------------------------------------------------------
# static analysis


def analyze_profile(profile: Profile, n: int, out_dir=None, samples: int = 2001, scan: bool = False) -> dict:
    """Curvature table, PIC1 and growth verdicts and the volume report."""
    S = profile.domain_end
    lo = 0.0 if not profile.tip_anchored else S / (samples - 1)
    s = np.linspace(lo, S, samples)
    sample = curv.profile_curvature(profile, s, n)
    report: dict = {"profile": profile.to_spec(), "n": n}
    report["lcf_residual"] = curv.lcf_reconstruction_check(sample, profile(s), profile(s, 1), n)
    if profile.tip_anchored:
        report["tip"] = asdict(curv.tip_curvature(profile, n))
        pic = curv.pic1_check(profile, n)
        report["pic1"] = asdict(pic)
        if pic.holds:
            report["growth"] = asdict(curv.growth_bound_check(profile, n))
        else:
            report["growth"] = {"holds": None, "reason": f"PIC1 fails at s={pic.first_failure:.6g}"}
        delta, where = geo.effective_delta(profile)
        report["effective_delta"] = {"delta": delta, "binding_s": where}
        if delta > 0:
            vol = geo.volume_ratio_lower_bound(delta, n)
            report["volume"] = asdict(vol)
            if scan:
                rs = geo.ratio_scan(profile, n)
                report["ratio_scan"] = {"min_ratio": rs.min_ratio, "argmin": rs.argmin, "above_v": rs.min_ratio >= vol.v}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        curv.write_curvature_csv(out / "curvature.csv", sample)
        with open(out / "analysis.json", "w") as fh:
            json.dump(report, fh, indent=2, default=_json_default)
        if "volume" in report:
            with open(out / "volume.json", "w") as fh:
                json.dump(report["volume"], fh, indent=2)
    return report


def _profile_arg(text: str, n: int) -> Profile:
    if text in LIBRARY_NAMES:
        try:
            return library_profile(text, n)
        except ConstructionError as exc:
            raise ConfigurationError(f"--profile {text}: {exc}") from exc
    try:
        spec = json.loads(text)
    except json.JSONDecodeError:
        if Path(text).exists():
            spec = json.loads(Path(text).read_text())
        else:
            raise ConfigurationError(f"--profile: '{text}' is neither a library name, JSON, nor a file")
    _check_profile_spec(spec, "profile")
    try:
        return profile_from_spec(spec)
    except (ParameterError, ConstructionError) as exc:
        raise ConfigurationError(f"profile: {exc}") from exc


# ---------------------------------------------------------------------------
# CLI


def _global_options(parser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="experiment config (JSON)")
    parser.add_argument("--output-dir", default=d, help="override the config's output directory")
    parser.add_argument("--jobs", type=int, default=d, help="parallel runs for sweeps")
    parser.add_argument("--tolerance-scale", type=float, default=argparse.SUPPRESS if suppress else 1.0, help="multiply oracle tolerances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warpflow", description="Rotationally symmetric Ricci flow experiments")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="static curvature, PIC1 and volume report for a profile")
    p.add_argument("--profile", help="library name, JSON spec or spec file (default: the config's profile)")
    p.add_argument("--n", type=int, help="fiber dimension (default 2 or the config's n)")
    p.add_argument("--scan", action="store_true", help="also run the volume-ratio scan")

    sub.add_parser("flow", parents=[common], help="run one experiment")
    sub.add_parser("sweep", parents=[common], help="run a parameter family and fit Lambda")

    p = sub.add_parser("verify", parents=[common], help="run oracles on a stored run")
    p.add_argument("run_dir")
    p.add_argument("--oracles", help="comma-separated oracle names (default: those in the run's config)")

    p = sub.add_parser("resume", parents=[common], help="continue a run from its checkpoint")
    p.add_argument("run_dir")
    p.add_argument("--t-end", type=float, help="new horizon (default: the stored one)")
    return parser


def _need_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigurationError("--config is required for this command")
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    return cfg


def _dispatch(args) -> int:
    if args.command == "analyze":
        cfg = load_config(args.config) if args.config else None
        n = args.n or (cfg.n if cfg else 2)
        if args.profile:
            profile = _profile_arg(args.profile, n)
        elif cfg is not None:
            profile = cfg.build_profile()
        else:
            raise ConfigurationError("analyze needs --profile or --config")
        out = args.output_dir or "analysis"
        rep = analyze_profile(profile, n, out, scan=args.scan)
        pic = rep.get("pic1", {})
        print(f"PIC1 {'holds' if pic.get('holds') else 'fails'}" + (f" (first violation at s={pic['first_failure']:.6g})" if pic.get("first_failure") is not None else ""))
        if "volume" in rep:
            print(f"volume lower bound v = {rep['volume']['v']:.6g} (delta = {rep['volume']['delta']:.6g})")
        print(f"wrote {out}/curvature.csv and {out}/analysis.json")
        return EXIT_OK
    if args.command == "flow":
        man = run_flow(_need_config(args))
        print(f"{man['name']}: {man['termination']} at t={man['t_final']:.6g} after {man['steps']} steps")
        return EXIT_NUMERICAL if man["termination"] == "blowup" else EXIT_OK
    if args.command == "sweep":
        fam = run_sweep(_need_config(args), args.jobs)
        for row in fam["rows"]:
            lam = row.get("lambda_fit")
            print(f"{fam['parameter']}={row['value']}: {row['termination']}" + (f", Lambda_fit={lam:.6g}" if lam is not None else ""))
        print(f"family verdict: {fam['verdict']}")
        return EXIT_NUMERICAL if fam["verdict"] == "incomplete" else EXIT_OK
    if args.command == "verify":
        names = [s for s in args.oracles.split(",") if s] if args.oracles else None
        reps = verify_run(args.run_dir, names, args.tolerance_scale)
        for r in reps:
            print(f"{r['name']}: {r['verdict']} (worst {r['worst_value']}, tolerance {r['tolerance']})")
        return EXIT_NUMERICAL if any(r["verdict"] == "violated" for r in reps) else EXIT_OK
    if args.command == "resume":
        man = resume_run(args.run_dir, args.t_end)
        print(f"{man['name']}: {man['termination']} at t={man['t_final']:.6g} after {man['steps']} steps")
        return EXIT_NUMERICAL if man["termination"] == "blowup" else EXIT_OK
    raise UsageError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigurationError, ParameterError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConstructionError, DomainError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
