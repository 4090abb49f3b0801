"""Rotationally symmetric Ricci flow as a 1D method-of-lines system.

The metric sigma(x,t)^2 dx^2 + f(x,t)^2 g_std lives on a cell-centred grid
x_i = (i + 1/2) h of [0, X]. Instead of stepping f directly, the solver evolves
the slope p = f_s together with sigma and rebuilds f by quadrature:

    p_t     = p_ss + (n-2) p p_s / f + (n-1)(1 - p^2) p / f^2
    sigma_t = n (p_s / f) sigma
    f(x)    = int_0^x sigma p dx'

Both equations follow from g_t = -2 Ric. Stepping f itself with a reflected
ghost node is linearly unstable at the tip (see the decisions ledger); the slope
equation is a radial heat equation with a regular, even-parity tip.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import interpolate

from .curvature import curvature_at
from .errors import BlowupSignal, ConfigurationError, ExtinctionSignal, FlowSignal, UsageError
from .geometry import arclength_at
from .profiles import Profile

SCHEMA_VERSION = 1
BC_KINDS = ("cylinder_neumann", "linear_slope", "frozen")
SERIES_COLUMNS = ("t", "sup_rm", "lambda_t", "min_fs", "min_f", "min_scal", "max_scal", "dt_taken")
DT_RULES = ("stiff", "cfl_only")


@dataclass
class GridState:
    """One time slice. ``fs`` is the evolved slope; ``f`` is derived from it."""

    n: int
    X: float
    N: int
    sigma: np.ndarray
    fs: np.ndarray
    t: float = 0.0
    bc_outer: str = "linear_slope"
    slope: float | None = None
    tip_free: bool = False
    f_left: float = 0.0
    ghost_fs: float | None = None
    epoch: int = 0
    steps: int = 0
    tracers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rm_ref: float = 0.0

    @property
    def h(self) -> float:
        return self.X / self.N

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.h

    @property
    def f(self) -> np.ndarray:
        return reconstruct_f(self.fs, self.sigma, self.h, self.f_left if self.tip_free else None)

    fvals = f

    def ghost_f(self) -> float:
        """f at the mirror node x = -h/2 (odd reflection about the tip)."""
        return -float(self.f[0]) if not self.tip_free else float(self.f[0])

    def copy(self) -> "GridState":
        return replace(self, sigma=self.sigma.copy(), fs=self.fs.copy(), tracers=self.tracers.copy())


def reconstruct_f(p, sigma, h, f_left=None):
    """Trapezoid integral of sigma p from the tip (or from f_left at x = 0)."""
    g = sigma * p
    f = np.empty_like(g)
    if f_left is None:
        f[0] = 0.5 * h * g[0]
    else:
        # p is odd about x = 0 on tip-free states
        f[0] = f_left + 0.25 * h * g[0]
    f[1:] = f[0] + np.cumsum(0.5 * h * (g[1:] + g[:-1]))
    return f


def slopes_from_f(f, sigma, h, f_left=None):
    """Invert :func:`reconstruct_f` (used to rebuild a state from plain f data)."""
    g = np.empty_like(f)
    g[0] = 2.0 * f[0] / h if f_left is None else 4.0 * (f[0] - f_left) / h
    for i in range(1, f.size):
        g[i] = 2.0 * (f[i] - f[i - 1]) / h - g[i - 1]
    return g / sigma


# ---------------------------------------------------------------------------
# initial data


def init_state(
    profile: Profile,
    n: int | None = None,
    N: int = 256,
    X: float = 2.0,
    bc_outer: str = "linear_slope",
    slope: float | None = None,
    sigma0: float = 1.0,
    bc_tol: float = 1e-6,
    n_tracers: int = 16,
) -> GridState:
    """Sample a profile on the cell-centred grid with sigma = sigma0."""
    n = profile.fiber_dim if n is None else int(n)
    if int(N) != N or N < 64:
        raise ConfigurationError(f"N must be an integer >= 64, got {N}")
    if bc_outer not in BC_KINDS:
        raise ConfigurationError(f"unknown bc_outer '{bc_outer}'")
    if not (X > 0 and sigma0 > 0):
        raise ConfigurationError("X and sigma0 must be positive")
    N = int(N)
    s_end = sigma0 * X
    if s_end > profile.domain_end * (1 + 1e-12):
        raise ConfigurationError(f"profile domain [0, {profile.domain_end}] does not cover arclength {s_end}")
    if profile.kind == "sphere_cap" and s_end > math.pi / 2 * profile.params.get("radius", 1.0) * (1 + 1e-12):
        raise ConfigurationError("sphere_cap grids must end at the equator (X <= pi/2 radius)")
    end_slope = float(profile(s_end, 1))
    if bc_outer == "cylinder_neumann" and abs(end_slope) > bc_tol:
        raise ConfigurationError(f"cylinder_neumann needs f'(X) = 0, profile has f'(X) = {end_slope:.3e}")
    if bc_outer == "linear_slope":
        if slope is None:
            slope = end_slope
        if abs(end_slope - slope) > bc_tol or abs(float(profile(s_end, 2))) > bc_tol:
            raise ConfigurationError(
                f"linear_slope({slope}) needs f'(X) = slope and f''(X) = 0; profile has f'={end_slope:.6g}, f''={float(profile(s_end, 2)):.3e}"
            )
    tip_free = not profile.tip_anchored
    if tip_free and abs(float(profile(0.0, 1))) > bc_tol:
        raise ConfigurationError("tip-free profiles need f'(0) = 0 (reflecting left end)")
    if not tip_free and abs(float(profile(0.0))) > 1e-12:
        raise ConfigurationError("tip-anchored profile must satisfy f(0) = 0")
    h = X / N
    x = (np.arange(N) + 0.5) * h
    fs = profile(sigma0 * x, 1)
    sigma = np.full(N, float(sigma0))
    ghost = None
    if bc_outer == "frozen":
        s_ghost = sigma0 * (X + 0.5 * h)
        ghost = float(profile(s_ghost, 1)) if s_ghost <= profile.domain_end else 2.0 * end_slope - float(fs[-1])
    idx = np.unique(np.linspace(0, N - 1, n_tracers).round().astype(int))
    state = GridState(
        n=n,
        X=float(X),
        N=N,
        sigma=sigma,
        fs=np.asarray(fs, dtype=float),
        bc_outer=bc_outer,
        slope=None if slope is None else float(slope),
        tip_free=tip_free,
        f_left=float(profile(0.0)) if tip_free else 0.0,
        ghost_fs=ghost,
        tracers=x[idx].copy(),
    )
    f = state.f
    if np.any(f <= 0):
        raise ConfigurationError("sampled f is not positive on the grid")
    state.rm_ref = max(float(diagnostics(state)["sup_rm"]), 1.0 / float(f.max()) ** 2)
    return state


# ---------------------------------------------------------------------------
# right-hand side


def _ghosts(state: GridState, p, sig):
    pe = np.empty(p.size + 2)
    se = np.empty(p.size + 2)
    pe[1:-1] = p
    se[1:-1] = sig
    pe[0] = -p[0] if state.tip_free else p[0]
    se[0] = sig[0]
    se[-1] = sig[-1]
    if state.bc_outer == "cylinder_neumann":
        pe[-1] = -p[-1]
    elif state.bc_outer == "linear_slope":
        pe[-1] = 2.0 * state.slope - p[-1]
    else:
        pe[-1] = state.ghost_fs
    return pe, se


def slope_derivatives(state: GridState, p=None, sig=None):
    """(p_x, p_s, p_ss) on the nodes using the ghost values of the boundary conditions."""
    p = state.fs if p is None else p
    sig = state.sigma if sig is None else sig
    h = state.h
    pe, se = _ghosts(state, p, sig)
    sf = 0.5 * (se[1:] + se[:-1])
    q = (pe[1:] - pe[:-1]) / (h * sf)
    pss = (q[1:] - q[:-1]) / (h * sig)
    px = (pe[2:] - pe[:-2]) / (2.0 * h)
    return px, px / sig, pss


def rhs(state: GridState, p, sig, f_left):
    n = state.n
    f = reconstruct_f(p, sig, state.h, f_left if state.tip_free else None)
    px, ps, pss = slope_derivatives(state, p, sig)
    pt = pss + (n - 2) * p * ps / f + (n - 1) * (1.0 - p * p) * p / (f * f)
    st = n * px / f
    if state.tip_free:
        # f_t = f_ss - (n-1)(1 - f_s^2)/f at x = 0, where f_s = 0
        ft_left = 2.0 * p[0] / (state.h * sig[0]) - (n - 1) / f_left
    else:
        ft_left = 0.0
    return pt, st, ft_left


# ---------------------------------------------------------------------------
# diagnostics


def curvature_field(state: GridState):
    _, ps, _ = slope_derivatives(state)
    return curvature_at(state.f, state.fs, ps, state.n, s=arclength_at(state, state.x))


def diagnostics(state: GridState, dt: float = 0.0) -> dict:
    f = state.f
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        return {
            "t": state.t, "sup_rm": math.nan, "lambda_t": math.nan, "min_fs": float(np.min(state.fs)),
            "min_f": float(np.min(f)), "min_scal": math.nan, "max_scal": math.nan, "dt_taken": dt,
        }
    _, ps, _ = slope_derivatives(state)
    c = curvature_at(f, state.fs, ps, state.n)
    sup_rm = float(np.max(c.rm_norm))
    return {
        "t": state.t,
        "sup_rm": sup_rm,
        "lambda_t": state.t * sup_rm,
        "min_fs": float(np.min(state.fs)),
        "min_f": float(np.min(f)),
        "min_scal": float(np.min(c.scal)),
        "max_scal": float(np.max(c.scal)),
        "dt_taken": dt,
    }


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    sup_rm: float
    lambda_t: float
    min_fs: float
    min_f: float
    min_scal: float
    max_scal: float
    dt_taken: float

    def row(self):
        return [getattr(self, c) for c in SERIES_COLUMNS]


# ---------------------------------------------------------------------------
# time stepping


@dataclass(frozen=True)
class StepControl:
    cfl: float = 0.1
    dt_rule: str = "stiff"
    max_halvings: int = 12
    jump_factor: float = 10.0
    extinction_ratio: float = 1e4
    blowup_slope: float = 1e6

    def __post_init__(self):
        if not 0 < self.cfl <= 0.2:
            raise ConfigurationError(f"cfl must lie in (0, 0.2], got {self.cfl}")
        if self.dt_rule not in DT_RULES:
            raise ConfigurationError(f"dt_rule must be one of {DT_RULES}")


def stable_dt(state: GridState, ctl: StepControl) -> float:
    """cfl * (min sigma h)^2, also capped by the reaction-term scale f^2/(n-1)."""
    dt = (float(np.min(state.sigma)) * state.h) ** 2
    if ctl.dt_rule == "stiff":
        f = state.f
        fmin = float(np.min(f))
        if state.tip_free:
            fmin = min(fmin, state.f_left)
        dt = min(dt, 4.0 * fmin * fmin / (state.n - 1))
    return ctl.cfl * dt


def _rk4(state: GridState, dt: float):
    p0, s0, l0 = state.fs, state.sigma, state.f_left
    k1 = rhs(state, p0, s0, l0)
    k2 = rhs(state, p0 + 0.5 * dt * k1[0], s0 + 0.5 * dt * k1[1], l0 + 0.5 * dt * k1[2])
    k3 = rhs(state, p0 + 0.5 * dt * k2[0], s0 + 0.5 * dt * k2[1], l0 + 0.5 * dt * k2[2])
    k4 = rhs(state, p0 + dt * k3[0], s0 + dt * k3[1], l0 + dt * k3[2])
    w = dt / 6.0
    p = p0 + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    s = s0 + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    lf = l0 + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return p, s, lf


def _sup_rm(state):
    f = state.f
    _, ps, _ = slope_derivatives(state)
    return float(np.max(np.maximum(np.abs(ps / f), np.abs((1.0 - state.fs**2) / f**2))))


def step(state: GridState, ctl: StepControl | None = None, dt_max: float | None = None) -> tuple[GridState, float]:
    """One RK4 step with adaptive halving. Returns (new state, dt taken)."""
    ctl = ctl or StepControl()
    dt = stable_dt(state, ctl)
    if dt_max is not None:
        dt = min(dt, dt_max)
    with np.errstate(all="ignore"):
        rm_old = _sup_rm(state)
        reason = None
        for attempt in range(ctl.max_halvings + 1):
            p, s, lf = _rk4(state, dt)
            new = replace(state, fs=p, sigma=s, f_left=lf, t=state.t + dt, steps=state.steps + 1)
            reason = _reject_reason(new, rm_old, ctl)
            if reason is None or (reason == "jump" and attempt == ctl.max_halvings):
                break
            if attempt < ctl.max_halvings:
                dt *= 0.5
        if reason in ("nonfinite", "sigma", "slope"):
            raise BlowupSignal(f"numerical blowup ({reason}) at t={state.t + dt:.6g}", t=state.t, state=state)
        if reason == "f":
            f = new.f
            i = int(np.argmin(f))
            raise ExtinctionSignal(f"f <= 0 at x={new.x[i]:.6g}, t={new.t:.6g}", t=new.t, x=float(new.x[i]), state=state)
        if state.rm_ref > 0 and _sup_rm(new) > ctl.extinction_ratio * state.rm_ref:
            f = new.f
            i = int(np.argmin(f / np.maximum(arclength_at(new, new.x), 1e-300)))
            raise ExtinctionSignal(
                f"curvature exceeded {ctl.extinction_ratio:g} x initial scale at t={new.t:.6g}",
                t=new.t,
                x=float(new.x[i]),
                state=new,
            )
    return new, dt


def _reject_reason(new: GridState, rm_old: float, ctl: StepControl):
    if not (np.all(np.isfinite(new.fs)) and np.all(np.isfinite(new.sigma)) and math.isfinite(new.f_left)):
        return "nonfinite"
    if np.any(new.sigma <= 0):
        return "sigma"
    if np.max(np.abs(new.fs)) > ctl.blowup_slope:
        return "slope"
    f = new.f
    if np.any(f <= 0) or (new.tip_free and new.f_left <= 0):
        return "f"
    if _sup_rm(new) > ctl.jump_factor * max(rm_old, 1.0):
        return "jump"
    return None


# ---------------------------------------------------------------------------
# remeshing


def remesh(state: GridState, threshold: float | None = None, force: bool = False) -> GridState:
    """Resample onto a grid uniform in current arclength with sigma = 1.

    The slope is interpolated by a C2 cubic spline in s (parity-extended at the
    tip and closed by the boundary condition at the outer end) and f is rebuilt
    by quadrature, so f and f_s stay consistent.
    """
    ratio = float(np.max(state.sigma) / np.min(state.sigma))
    if not force and (threshold is None or ratio <= threshold):
        return state
    if np.all(state.sigma == 1.0):
        return state
    # nodes and the outer end share one quadrature so their errors cancel in the reflection
    s_nodes, S = np.split(arclength_at(state, np.append(state.x, state.X)), [state.N])
    S = float(S[0])
    p = state.fs
    pe, _ = _ghosts(state, p, state.sigma)
    parity = -1.0 if state.tip_free else 1.0
    left_s = -s_nodes[2::-1]
    left_p = parity * p[2::-1]
    p_bound = 0.5 * (p[-1] + pe[-1])
    right_s = np.array([S, 2.0 * S - s_nodes[-1]])
    right_p = np.array([p_bound, pe[-1]])
    ss = np.concatenate([left_s, s_nodes, right_s])
    pp = np.concatenate([left_p, p, right_p])
    spline = interpolate.CubicSpline(ss, pp, bc_type="not-a-knot")
    hn = S / state.N
    xn = (np.arange(state.N) + 0.5) * hn
    new = replace(
        state,
        X=S,
        sigma=np.ones(state.N),
        fs=spline(xn),
        tracers=arclength_at(state, state.tracers),
        epoch=state.epoch + 1,
    )
    if state.bc_outer == "frozen":
        new.ghost_fs = float(spline(S + 0.5 * hn))
    return new


# ---------------------------------------------------------------------------
# evolution driver


@dataclass
class Snapshot:
    t: float
    steps: int
    epoch: int
    dt: float
    X: float
    sigma: np.ndarray
    f: np.ndarray
    fs: np.ndarray
    tracers: np.ndarray


@dataclass
class FlowRun:
    n: int
    bc_outer: str
    tip_free: bool
    records: list
    snapshots: list
    final: GridState
    termination: str = "horizon"
    message: str = ""
    dt0: float = 0.0
    remeshes: int = 0
    failure_state: GridState | None = None
    failure_x: float | None = None


def snapshot_of(state: GridState, dt: float) -> Snapshot:
    return Snapshot(
        t=state.t,
        steps=state.steps,
        epoch=state.epoch,
        dt=dt,
        X=state.X,
        sigma=state.sigma.copy(),
        f=state.f,
        fs=state.fs.copy(),
        tracers=state.tracers.copy(),
    )


def evolve(
    state: GridState,
    t_end: float,
    cadence: int = 10,
    control: StepControl | None = None,
    remesh_threshold: float | None = 1.25,
    remesh_every: int | None = None,
    snapshot_cadence: int | None = None,
    keep_snapshots: bool = True,
    checkpoint_every: int | None = None,
    checkpoint_writer=None,
    record_writer=None,
    snapshot_writer=None,
    raise_signals: bool = False,
    max_steps: int | None = None,
) -> FlowRun:
    """Step until t_end, recording diagnostics every ``cadence`` steps.

    Records and snapshots are taken when the global step counter is a multiple
    of the cadence, so a resumed run reproduces the uninterrupted one.
    """
    if not t_end > state.t:
        raise UsageError(f"t_end={t_end} must exceed the current time {state.t}")
    if cadence < 1:
        raise ConfigurationError("cadence must be >= 1")
    ctl = control or StepControl()
    snap_every = snapshot_cadence or cadence
    cur = state.copy()
    records, snaps = [], []
    run = FlowRun(cur.n, cur.bc_outer, cur.tip_free, records, snaps, cur)

    def record(st, dt):
        rec = DiagnosticsRecord(**diagnostics(st, dt))
        if not all(math.isfinite(v) for v in rec.row()):
            raise BlowupSignal(f"non-finite diagnostics at t={st.t:.6g}", t=st.t, state=st)
        records.append(rec)
        if record_writer is not None:
            record_writer(rec)

    def take_snapshot(st, dt):
        if not (keep_snapshots or snapshot_writer):
            return
        snap = snapshot_of(st, dt)
        if keep_snapshots:
            snaps.append(snap)
        if snapshot_writer is not None:
            snapshot_writer(snap)

    dt = 0.0
    try:
        if cur.steps == 0:
            record(cur, 0.0)
            take_snapshot(cur, stable_dt(cur, ctl))
            if checkpoint_writer is not None:
                checkpoint_writer(cur)
        else:
            # resuming from a checkpoint: redo the remesh decision that followed it
            cur = _maybe_remesh(cur, run, remesh_threshold, remesh_every)
        while cur.t < t_end * (1 - 1e-14):
            if max_steps is not None and cur.steps >= max_steps:
                run.termination = "interrupted"
                break
            cur, dt = step(cur, ctl, dt_max=t_end - cur.t)
            if run.dt0 == 0.0:
                run.dt0 = dt
            last = cur.t >= t_end * (1 - 1e-14)
            if cur.steps % cadence == 0 or last:
                record(cur, dt)
            if cur.steps % snap_every == 0 or last:
                take_snapshot(cur, dt)
            if checkpoint_writer is not None and checkpoint_every and (cur.steps % checkpoint_every == 0 or last):
                checkpoint_writer(cur)
            if not last:
                cur = _maybe_remesh(cur, run, remesh_threshold, remesh_every)
            run.final = cur
    except FlowSignal as sig:
        run.termination = sig.cause
        run.message = str(sig)
        run.failure_state = sig.state
        run.failure_x = sig.x
        run.final = cur
        if raise_signals:
            sig.run = run
            raise
    run.final = cur
    return run


def _maybe_remesh(cur, run, threshold, every):
    forced = bool(every) and cur.steps % every == 0
    nxt = remesh(cur, threshold, force=forced)
    if nxt is not cur:
        run.remeshes += 1
    return nxt


# ---------------------------------------------------------------------------
# checkpoints


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        raise ValueError("non-finite value in checkpoint")
    return format(v, ".17g")


def _dump(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f'"{k}": {_dump(v)}' for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def state_to_dict(state: GridState) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n": state.n,
        "X": state.X,
        "N": state.N,
        "t": state.t,
        "bc_outer": state.bc_outer,
        "slope": state.slope,
        "tip_free": state.tip_free,
        "f_left": state.f_left,
        "ghost_fs": state.ghost_fs,
        "epoch": state.epoch,
        "steps": state.steps,
        "rm_ref": state.rm_ref,
        "sigma": state.sigma,
        "f": state.f,
        "fs": state.fs,
        "tracers": state.tracers,
    }


def state_to_json(state: GridState) -> str:
    return _dump(state_to_dict(state))


def state_from_dict(d: dict) -> GridState:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported checkpoint schema {d.get('schema_version')}")
    sigma = np.asarray(d["sigma"], dtype=float)
    N = int(d["N"])
    X = float(d["X"])
    tip_free = bool(d.get("tip_free", False))
    f_left = float(d.get("f_left", 0.0))
    if "fs" in d:
        fs = np.asarray(d["fs"], dtype=float)
    else:
        fs = slopes_from_f(np.asarray(d["f"], dtype=float), sigma, X / N, f_left if tip_free else None)
    return GridState(
        n=int(d["n"]),
        X=X,
        N=N,
        sigma=sigma,
        fs=fs,
        t=float(d["t"]),
        bc_outer=d["bc_outer"],
        slope=d.get("slope"),
        tip_free=tip_free,
        f_left=f_left,
        ghost_fs=d.get("ghost_fs"),
        epoch=int(d.get("epoch", 0)),
        steps=int(d.get("steps", 0)),
        tracers=np.asarray(d.get("tracers", []), dtype=float),
        rm_ref=float(d.get("rm_ref", 0.0)),
    )


def write_checkpoint(path, state: GridState) -> None:
    """Atomically replace ``path`` with the serialized state."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(state_to_json(state))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_checkpoint(path) -> GridState:
    with open(path) as fh:
        return state_from_dict(json.load(fh))


def snapshot_to_json(snap: Snapshot, n: int, bc_outer: str) -> str:
    return _dump(
        {
            "schema_version": SCHEMA_VERSION,
            "n": n,
            "X": snap.X,
            "N": snap.f.size,
            "t": snap.t,
            "bc_outer": bc_outer,
            "steps": snap.steps,
            "epoch": snap.epoch,
            "dt": snap.dt,
            "sigma": snap.sigma,
            "f": snap.f,
            "fs": snap.fs,
            "tracers": snap.tracers,
        }
    )


def snapshot_from_dict(d: dict) -> Snapshot:
    st = state_from_dict(d)
    return Snapshot(
        t=st.t, steps=st.steps, epoch=st.epoch, dt=float(d.get("dt", 0.0)), X=st.X,
        sigma=st.sigma, f=np.asarray(d["f"], dtype=float), fs=st.fs, tracers=st.tracers,
    )


# ---------------------------------------------------------------------------
# shrinking-ball diagnostic


@dataclass(frozen=True)
class DistortionReport:
    beta_fit: float
    c_fit: float
    growth_rate: float
    n_tracers: int
    n_times: int


def distance_distortion_check(snapshots, c_fit: float) -> DistortionReport:
    """Smallest beta >= 0 with d_t(o, y) + beta sqrt(c t) nondecreasing in t.

    Distances are measured along the radial geodesic from the tip to tracked
    material points. ``growth_rate`` reports the opposite one-sided rate (how
    fast distances grow), which vanishes when the flow only shrinks distances.
    """
    snaps = [s for s in snapshots if s.tracers.size]
    if len(snaps) < 2:
        raise UsageError("distance_distortion_check needs at least two stored snapshots")
    if not c_fit > 0:
        return DistortionReport(0.0, c_fit, 0.0, snaps[0].tracers.size, len(snaps))
    dist = np.array([_tracer_distances(s) for s in snaps])
    t = np.array([s.t for s in snaps])
    dr = np.sqrt(c_fit * t[1:]) - np.sqrt(c_fit * t[:-1])
    dd = dist[1:] - dist[:-1]
    ok = dr > 0
    shrink = np.max(np.where(ok[:, None], -dd / np.where(ok, dr, 1.0)[:, None], 0.0))
    grow = np.max(np.where(ok[:, None], dd / np.where(ok, dr, 1.0)[:, None], 0.0))
    return DistortionReport(max(0.0, float(shrink)), c_fit, max(0.0, float(grow)), dist.shape[1], len(snaps))


class _SnapView:
    def __init__(self, snap):
        self.sigma = snap.sigma
        self.X = snap.X
        self.N = snap.sigma.size
        self.x = (np.arange(self.N) + 0.5) * (self.X / self.N)


def _tracer_distances(snap) -> np.ndarray:
    return arclength_at(_SnapView(snap), snap.tracers)
