"""Discrete checks of evolution identities and maximum-principle inequalities.

Every oracle works on stored snapshots (f, sigma on the grid) and never
re-runs the solver. Spatial derivatives are recomputed from f alone with
second-order stencils; time derivatives use the three-point formula on
consecutive snapshots that share a grid (no remesh in between).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NotApplicable, UsageError
from .geometry import arclength_at

BUFFER = 5
TOLERANCE_FACTOR = 10.0


@dataclass(frozen=True)
class ResidualReport:
    name: str
    t: float
    sup_abs_residual: float
    grid_h: float
    expected_order: int = 2
    s: float = math.nan


@dataclass
class OracleReport:
    name: str
    hypotheses_met: bool
    worst_value: float
    worst_location: dict
    tolerance: float
    verdict: str
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=float)


# ---------------------------------------------------------------------------
# stencils


@dataclass
class Frame:
    """Derived fields on one snapshot; arrays are restricted to the interior."""

    t: float
    x: np.ndarray
    h: float
    f: np.ndarray
    fs: np.ndarray
    fss: np.ndarray
    sigma: np.ndarray
    idx: slice
    s: np.ndarray

    def mask(self, region=None):
        """Interior nodes, optionally restricted to an arclength interval."""
        m = np.zeros(self.f.size, dtype=bool)
        m[self.idx] = True
        if region is not None:
            lo, hi = region
            if lo is not None:
                m &= self.s >= lo
            if hi is not None:
                m &= self.s <= hi
        return m


def _d1(u, sig, h):
    out = np.full_like(u, np.nan)
    out[1:-1] = (u[2:] - u[:-2]) / (2.0 * h * sig[1:-1])
    return out


def _d2(u, sig, h):
    out = np.full_like(u, np.nan)
    sf = 0.5 * (sig[1:] + sig[:-1])
    q = (u[1:] - u[:-1]) / (h * sf)
    out[1:-1] = (q[1:] - q[:-1]) / (h * sig[1:-1])
    return out


def frame_of(snap, buffer: int = BUFFER) -> Frame:
    N = snap.f.size
    h = snap.X / N
    if N <= 2 * buffer + 4:
        raise UsageError("grid too small for the interior buffer")
    return Frame(
        t=snap.t,
        x=(np.arange(N) + 0.5) * h,
        h=h,
        f=snap.f,
        fs=_d1(snap.f, snap.sigma, h),
        fss=_d2(snap.f, snap.sigma, h),
        sigma=snap.sigma,
        idx=slice(buffer, N - buffer),
        s=arclength_at(_GridView(snap.X, snap.sigma), (np.arange(N) + 0.5) * h),
    )


@dataclass
class _GridView:
    X: float
    sigma: np.ndarray

    @property
    def x(self):
        return (np.arange(self.sigma.size) + 0.5) * self.X / self.sigma.size


def radial_laplacian(u, fr: Frame, n: int):
    """u_ss + n (f_s / f) u_s."""
    return _d2(u, fr.sigma, fr.h) + n * fr.fs / fr.f * _d1(u, fr.sigma, fr.h)


def _scal(fr: Frame, n: int):
    K = -fr.fss / fr.f
    L = (1.0 - fr.fs**2) / fr.f**2
    return K, L, n * (2.0 * K + (n - 1) * L)


def _time_derivative(u_prev, u_mid, u_next, t_prev, t_mid, t_next):
    a, b = t_mid - t_prev, t_next - t_mid
    return (a * a * (u_next - u_mid) + b * b * (u_mid - u_prev)) / (a * b * (a + b))


def triplets(snapshots, max_gap_factor: float = 10.0, check: bool = True):
    """Consecutive snapshot triples on a common grid.

    Raises a usage error when snapshots are further apart than
    ``max_gap_factor`` solver steps, which would make time differences
    meaningless.
    """
    snaps = list(snapshots)
    if len(snaps) < 3:
        raise UsageError("need at least three stored snapshots")
    out = []
    for a, b, c in zip(snaps[:-2], snaps[1:-1], snaps[2:]):
        if check:
            for s0, s1 in ((a, b), (b, c)):
                if s1.steps - s0.steps > max_gap_factor:
                    raise UsageError(
                        f"cadence too sparse: records at t={s0.t:.6g} and t={s1.t:.6g} are {s1.steps - s0.steps} steps apart (limit {max_gap_factor:g})"
                    )
        if a.epoch == b.epoch == c.epoch and a.f.size == b.f.size == c.f.size:
            out.append((a, b, c))
    return out


def _in_window(t, window):
    if window is None:
        return True
    lo, hi = window
    return (lo is None or t >= lo) and (hi is None or t <= hi)


def _run_parts(run):
    snaps = run.snapshots if hasattr(run, "snapshots") else run
    n = run.n if hasattr(run, "n") else None
    return snaps, n


# ---------------------------------------------------------------------------
# f_s evolution identity


def fs_evolution_residual(run, n: int | None = None, window=None, buffer: int = BUFFER, region=None):
    """Residual of (d/dt - Laplacian) f_s = (Scal/n) f_s at interior nodes.

    Returns one :class:`ResidualReport` per interior snapshot in ``window``.
    ``region`` restricts the nodes to an interval of distance from the tip.
    Next to the tip the 1/f^2 coefficient turns the O(h^2) stencil error
    into O(h^2/s^2), so a fixed region is needed to see clean convergence.
    """
    snaps, rn = _run_parts(run)
    n = rn if n is None else n
    reports = []
    for a, b, c in triplets(snaps):
        if not _in_window(b.t, window):
            continue
        fa, fb, fc = (frame_of(s, buffer) for s in (a, b, c))
        gt = _time_derivative(fa.fs, fb.fs, fc.fs, a.t, b.t, c.t)
        _, _, scal = _scal(fb, n)
        res = gt - radial_laplacian(fb.fs, fb, n) - scal / n * fb.fs
        reports.append(_residual_report("fs_evolution", b.t, res, fb, region))
    return reports


def f_equation_residual(run, n: int | None = None, window=None, buffer: int = BUFFER, region=None):
    """Residual of f_t = f_ss - (n-1)(1 - f_s^2)/f, independent of the slope form."""
    snaps, rn = _run_parts(run)
    n = rn if n is None else n
    reports = []
    for a, b, c in triplets(snaps):
        if not _in_window(b.t, window):
            continue
        fb = frame_of(b, buffer)
        ft = _time_derivative(a.f, b.f, c.f, a.t, b.t, c.t)
        res = ft - fb.fss + (n - 1) * (1.0 - fb.fs**2) / fb.f
        reports.append(_residual_report("f_equation", b.t, res, fb, region))
    return reports


def _residual_report(name, t, res, fr: Frame, region):
    m = fr.mask(region)
    if not np.any(m):
        raise UsageError(f"no grid nodes in region {region}")
    r = np.where(m, np.abs(res), -np.inf)
    i = int(np.argmax(r))
    return ResidualReport(name, t, float(r[i]), fr.h, 2, float(fr.s[i]))


def sup_residual(reports) -> float:
    return max((r.sup_abs_residual for r in reports), default=0.0)


# ---------------------------------------------------------------------------
# barrier for the slope


def phi_barrier_check(run, delta: float, n: int | None = None, inner: float | None = None, buffer: int = BUFFER, tolerance_scale: float = 1.0) -> OracleReport:
    """Sub-solution test for phi = delta (1 - 2t) - f_s.

    Where phi > 0 the discrete (d/dt - Laplacian) phi - (Scal/n) phi must be
    <= tolerance. Also reports the first time f_s drops below delta/4 on the
    inner region x <= ``inner`` (the whole interior by default).
    """
    snaps, rn = _run_parts(run)
    n = rn if n is None else n
    snaps = list(snaps)
    fr0 = frame_of(snaps[0], buffer)
    region0 = _inner_mask(fr0, inner)
    fs0 = snaps[0].fs[region0] if snaps[0].fs is not None else fr0.fs[region0]
    problems = []
    if float(np.min(fs0)) < delta:
        j = int(np.argmin(fs0))
        problems.append({"hypothesis": "min f_s >= delta at t=0", "x": float(fr0.x[region0][j]), "value": float(fs0[j])})
    worst, where, scale = -math.inf, {"x": math.nan, "t": math.nan}, 0.0
    first_drop = None
    min_scal = math.inf
    for snap in snaps:
        fr = frame_of(snap, buffer)
        mask = _inner_mask(fr, inner)
        _, _, scal = _scal(fr, n)
        sc = float(np.nanmin(scal[mask]))
        if sc < min_scal:
            min_scal = sc
            if sc < -2.0:
                j = int(np.nanargmin(np.where(mask, scal, np.inf)))
                problems.append({"hypothesis": "Scal >= -2", "x": float(fr.x[j]), "t": snap.t, "value": sc})
        if first_drop is None and float(np.min(snap.fs[mask])) < delta / 4.0:
            first_drop = snap.t
    if problems:
        return OracleReport("phi_barrier", False, math.nan, where, math.nan, "hypotheses not met", {"problems": problems[:5]})
    h = 0.0
    for a, b, c in triplets(snaps):
        fb = frame_of(b, buffer)
        h = fb.h
        mask = _inner_mask(fb, inner)
        fa, fc = frame_of(a, buffer), frame_of(c, buffer)
        gt = _time_derivative(fa.fs, fb.fs, fc.fs, a.t, b.t, c.t)
        lap = radial_laplacian(fb.fs, fb, n)
        _, _, scal = _scal(fb, n)
        phi = delta * (1.0 - 2.0 * b.t) - fb.fs
        val = -2.0 * delta - (gt - lap) - scal / n * phi
        active = mask & (phi > 0)
        scale = max(scale, float(np.nanmax(np.abs(np.where(mask, gt, 0.0)))), 2.0 * delta)
        if np.any(active):
            v = np.where(active, val, -np.inf)
            j = int(np.argmax(v))
            if v[j] > worst:
                worst, where = float(v[j]), {"x": float(fb.x[j]), "t": b.t}
    tol = tolerance_scale * TOLERANCE_FACTOR * h * h * max(scale, 1.0)
    verdict = "clean" if worst <= tol else "violated"
    if worst == -math.inf:
        verdict = "vacuous"
    return OracleReport(
        "phi_barrier",
        True,
        worst,
        where,
        tol,
        verdict,
        {"first_time_fs_below_delta_over_4": first_drop, "delta": delta, "min_scal": min_scal, "t_end": snaps[-1].t},
    )


def _inner_mask(fr: Frame, inner):
    mask = np.zeros(fr.f.size, dtype=bool)
    mask[fr.idx] = True
    if inner is not None:
        mask &= fr.x <= inner
    return mask


# ---------------------------------------------------------------------------
# supersolution for n >= 3


def supersolution_values(snap_triplet, n: int, buffer: int = BUFFER):
    """(d/dt - d^2/ds^2) [e^{(n-1)(n-2) t} (f^n + 2/(n-2))] on one snapshot triple."""
    a, b, c = snap_triplet
    fb = frame_of(b, buffer)

    def u(s):
        return math.exp((n - 1) * (n - 2) * s.t) * (s.f**n + 2.0 / (n - 2))

    ut = _time_derivative(u(a), u(b), u(c), a.t, b.t, c.t)
    return fb, ut - _d2(u(b), b.sigma, fb.h), ut


def supersolution_check(run, n: int | None = None, buffer: int = BUFFER, tolerance_scale: float = 1.0) -> OracleReport:
    snaps, rn = _run_parts(run)
    n = rn if n is None else n
    if n < 3:
        raise NotApplicable("the supersolution contains 2/(n-2) and is undefined for n = 2")
    worst, where, h, scale = math.inf, {"x": math.nan, "t": math.nan}, 0.0, 0.0
    for trip in triplets(snaps):
        fb, val, ut = supersolution_values(trip, n, buffer)
        h = fb.h
        v = val[fb.idx]
        scale = max(scale, float(np.max(np.abs(ut[fb.idx]))))
        j = int(np.argmin(v))
        if v[j] < worst:
            worst, where = float(v[j]), {"x": float(fb.x[fb.idx][j]), "t": trip[1].t}
    tol = tolerance_scale * TOLERANCE_FACTOR * h * h * max(scale, 1.0)
    return OracleReport("supersolution", True, worst, where, tol, "clean" if worst >= -tol else "violated", {"scale": scale})


# ---------------------------------------------------------------------------
# scalar curvature floor


def scalar_floor_check(run, K0: float | None = None, slack: float = 1e-3) -> OracleReport:
    """Check min Scal(t) >= -2 K0 - slack along the recorded series.

    ``K0`` defaults to max(0, -min Scal(0)). The horizon of the lower bound is
    not quantified, so the report gives the first violating time (or None).
    """
    recs = list(run.records)
    if not recs:
        raise UsageError("scalar_floor_check needs recorded diagnostics")
    K0 = max(0.0, -recs[0].min_scal) if K0 is None else float(K0)
    floor = -2.0 * K0 - slack
    margins = np.array([r.min_scal - floor for r in recs])
    j = int(np.argmin(margins))
    bad = np.flatnonzero(margins < 0)
    first = recs[int(bad[0])].t if bad.size else None
    return OracleReport(
        "scalar_floor",
        True,
        float(recs[j].min_scal),
        {"x": None, "t": recs[j].t},
        slack,
        "clean" if first is None else "violated",
        {"K0": K0, "floor": floor, "first_violation_t": first},
    )


# ---------------------------------------------------------------------------
# Ricci pinching


def pinch_constant(m: int) -> float:
    """c(m) = max(((5m-3)^2 - 16(m+2)(m-1)) / (8(m-1)), m - 4) for manifold dimension m."""
    if m < 2:
        raise UsageError("manifold dimension must be >= 2")
    return max(((5 * m - 3) ** 2 - 16 * (m + 2) * (m - 1)) / (8.0 * (m - 1)), m - 4.0)


def ricci_deficit(fr: Frame, n: int):
    """l = max(0, -min Ricci eigenvalue)."""
    K, L, _ = _scal(fr, n)
    return np.maximum(0.0, -np.minimum(n * K, K + (n - 1) * L))


def ricci_pinch_values(snap_triplet, n: int, c: float, buffer: int = BUFFER):
    """Frame, l and (d/dt - Laplacian) l - Scal l - c l^2 at the middle snapshot.

    The returned mask marks smooth points: l > 0 on the whole stencil and at
    all three times.
    """
    frames = [frame_of(s, buffer) for s in snap_triplet]
    la, lb, lc = (ricci_deficit(fr, n) for fr in frames)
    a, b, cc = snap_triplet
    fb = frames[1]
    lt = _time_derivative(la, lb, lc, a.t, b.t, cc.t)
    _, _, scal = _scal(fb, n)
    lap = radial_laplacian(lb, fb, n)
    val = lt - lap - scal * lb - c * lb * lb
    pos = (la > 0) & (lb > 0) & (lc > 0)
    pos[1:-1] &= pos[:-2] & pos[2:]
    terms = np.abs(lt) + np.abs(lap) + np.abs(scal * lb) + abs(c) * lb * lb
    return fb, val, pos, terms


def ricci_pinch_residual(run, n: int | None = None, window=None, buffer: int = BUFFER, tolerance_scale: float = 1.0, c: float | None = None, region=None) -> OracleReport:
    """Check (d/dt - Laplacian) l <= Scal l + c(m) l^2 wherever l > 0.

    ``worst_value`` is the largest value of the left side minus the right side;
    ``details['sup_violation']`` its positive part (0 when the inequality holds
    at every tested node). ``c`` overrides the published constant; on
    hyperbolic space the inequality needs c >= m - 2, i.e. pinch_constant + 2.
    """
    snaps, rn = _run_parts(run)
    n = rn if n is None else n
    c = pinch_constant(n + 1) if c is None else float(c)
    worst, where, h, scale = -math.inf, {"x": math.nan, "t": math.nan}, 0.0, 0.0
    frames0 = frame_of(list(snaps)[0], buffer)
    l0max = float(np.nanmax(ricci_deficit(frames0, n)[frames0.idx]))
    tested = 0
    for a, b, cc in triplets(snaps):
        if not _in_window(b.t, window):
            continue
        fb, val, pos, terms = ricci_pinch_values((a, b, cc), n, c, buffer)
        h = fb.h
        pos &= fb.mask(region)
        if not np.any(pos):
            continue
        tested += int(pos.sum())
        scale = max(scale, float(np.max(terms[pos])))
        v = np.where(pos, val, -np.inf)
        j = int(np.argmax(v))
        if v[j] > worst:
            worst, where = float(v[j]), {"x": float(fb.x[j]), "t": b.t}
    tol = tolerance_scale * TOLERANCE_FACTOR * h * h * max(scale, 1.0)
    if tested == 0:
        verdict = "vacuous"
    else:
        verdict = "clean" if worst <= tol else "violated"
    return OracleReport(
        "ricci_pinch",
        True,
        worst,
        where,
        tol,
        verdict,
        {"c": c, "m": n + 1, "initial_max_l": l0max, "tested_points": tested, "sup_violation": max(0.0, worst) if tested else 0.0, "scale": scale},
    )


# ---------------------------------------------------------------------------
# uniform curvature decay across a family


@dataclass(frozen=True)
class LambdaFit:
    labels: list
    values: list
    verdict: str
    trend: str
    spread: float
    upward_drift: bool


def lambda_of(run, transient_factor: float = 5.0) -> float:
    t0 = transient_factor * run.dt0
    vals = [r.lambda_t for r in run.records if r.t >= t0]
    return max(vals) if vals else math.nan


def lambda_fit(runs, labels=None, transient_factor: float = 5.0, uniform_ratio: float = 1.25, drift_tolerance: float = 0.02) -> LambdaFit:
    """Fitted Lambda per run and the family verdict.

    The family is "uniform" when max <= 1.25 min. It has an upward drift when
    the values increase strictly with the label and the total rise exceeds
    ``drift_tolerance`` (relative), so round-off sized wiggles do not count.
    """
    runs = list(runs)
    if len(runs) < 3:
        raise UsageError("lambda_fit needs at least three runs")
    labels = list(labels) if labels is not None else list(range(len(runs)))
    order = np.argsort(labels, kind="stable")
    vals = [lambda_of(runs[i], transient_factor) for i in order]
    labs = [labels[i] for i in order]
    lo, hi = min(vals), max(vals)
    diffs = np.diff(vals)
    if np.all(diffs > 0):
        trend = "increasing"
    elif np.all(diffs < 0):
        trend = "decreasing"
    elif np.all(diffs == 0):
        trend = "flat"
    else:
        trend = "mixed"
    spread = hi / lo - 1.0 if lo > 0 else (0.0 if hi == lo else math.inf)
    uniform = hi <= uniform_ratio * lo if lo > 0 else hi == lo
    drift = trend == "increasing" and vals[-1] > (1.0 + drift_tolerance) * vals[0]
    return LambdaFit(labs, vals, "uniform" if uniform else "drifting", trend, spread, bool(drift))
