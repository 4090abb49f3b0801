"""Volumes, distances and volume-ratio lower bounds for warped products."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, ParameterError
from .profiles import Profile

QUAD_RTOL = 1e-10
NESTED_RTOL = 1e-8


def sphere_volume(m: int) -> float:
    """Volume of the unit round sphere S^m."""
    if int(m) != m or m < 1:
        raise ParameterError(f"sphere dimension must be an integer >= 1, got {m}")
    return 2.0 * math.pi ** ((m + 1) / 2.0) / math.gamma((m + 1) / 2.0)


def _sin_power_integral(theta, k):
    """Integral of sin^k over [0, theta] for theta in [0, pi], via the incomplete beta."""
    theta = np.asarray(theta, dtype=float)
    a = (k + 1) / 2.0
    full = special.beta(a, 0.5)
    low = np.minimum(theta, math.pi - theta)
    part = 0.5 * full * special.betainc(a, 0.5, np.sin(low) ** 2)
    return np.where(theta <= math.pi / 2, part, full - part)


def sphere_cap_volume(rho, n: int):
    """Volume of a geodesic ball of radius rho in the unit S^n."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("cap radius must be >= 0")
    out = sphere_volume(n - 1) * _sin_power_integral(np.minimum(rho, math.pi), n - 1) if n >= 2 else 2.0 * np.minimum(rho, math.pi)
    return float(out) if out.ndim == 0 else out


def sphere_cap_volume_quad(rho: float, n: int) -> float:
    """Same as :func:`sphere_cap_volume` by adaptive quadrature (cross-check)."""
    top = min(float(rho), math.pi)
    val = integrate.quad(lambda t: math.sin(t) ** (n - 1), 0.0, top, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return sphere_volume(n - 1) * val


def cap_volume_lower_bound(rho, n: int):
    """Cap-volume lower bound used in the annulus estimate.

    For rho >= pi/4 it is the constant A_n; below, sin t >= t/sqrt2 on
    [0, pi/4] gives (omega_{n-1}/n) 2^{-(n-1)/2} rho^n.
    """
    rho = np.asarray(rho, dtype=float)
    An = sphere_volume(n - 1) * float(_sin_power_integral(math.pi / 4, n - 1))
    small = sphere_volume(n - 1) / n * 2.0 ** (-(n - 1) / 2.0) * rho**n
    out = np.where(rho >= math.pi / 4, An, small)
    return float(out) if out.ndim == 0 else out


def _n_of(profile, n):
    return profile.fiber_dim if n is None else int(n)


def ball_volume_origin(profile: Profile, r: float, n: int | None = None) -> float:
    """Volume of the geodesic ball of radius r about the tip."""
    n = _n_of(profile, n)
    if not profile.tip_anchored:
        raise DomainError("ball_volume_origin needs a tip-anchored profile")
    if r > profile.domain_end * (1 + 1e-12):
        raise DomainError(f"r={r} exceeds domain_end={profile.domain_end}")
    if r <= 0:
        return 0.0
    val = integrate.quad(lambda s: profile(s) ** n, 0.0, r, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)[0]
    return sphere_volume(n) * val


def annulus_integrand(profile: Profile, s, r: float, n: int):
    f = profile(s)
    return f**n * sphere_cap_volume(r / f, n)


def annulus_volume(profile: Profile, s_center: float, r: float, n: int | None = None, clip_at_tip: bool = False) -> float:
    """Volume of {|s' - s| < r, d(theta, theta') < r / f(s')}."""
    n = _n_of(profile, n)
    lo, hi = s_center - r, s_center + r
    if clip_at_tip:
        lo = max(lo, 0.0)
    if lo < -1e-12 or hi > profile.domain_end * (1 + 1e-12):
        raise DomainError(f"annulus [{lo}, {hi}] leaves [0, {profile.domain_end}]")
    lo = max(lo, 0.0)

    def integrand(s):
        if s <= 0.0:
            return 0.0
        return float(annulus_integrand(profile, s, r, n))

    pts = _cap_switch_points(profile, lo, hi, r)
    return integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=NESTED_RTOL, limit=400, points=pts or None)[0]


def _cap_switch_points(profile, lo, hi, r):
    # the cap radius r/f crosses pi where f = r/pi; flag those kinks for quad
    s = np.linspace(lo, hi, 257)
    g = profile(s) - r / math.pi
    idx = np.nonzero(np.sign(g[1:]) != np.sign(g[:-1]))[0]
    return [float(0.5 * (s[i] + s[i + 1])) for i in idx]


@dataclass(frozen=True)
class VolumeReport:
    v1: float
    v2: float
    v: float
    A_n: float
    B_n: float
    delta: float
    n: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def volume_ratio_lower_bound(delta: float, n: int) -> VolumeReport:
    if not delta > 0:
        raise ParameterError(f"delta must be > 0, got {delta}")
    if int(n) != n or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n}")
    n = int(n)
    v1 = 0.25 ** (n + 1) * delta**n * sphere_volume(n) / (n + 1)
    A_n = sphere_volume(n - 1) * float(_sin_power_integral(math.pi / 4, n - 1))
    B_n = sphere_volume(n - 1) / (n * 2.0 ** ((n - 1) / 2.0) * 4.0**n)
    v2 = 0.5 * min(A_n * (delta / 4.0) ** n, B_n)
    return VolumeReport(v1=v1, v2=v2, v=min(v1, v2), A_n=A_n, B_n=B_n, delta=delta, n=n)


def effective_delta(profile: Profile, samples: int = 20001) -> tuple[float, float]:
    """Largest delta with f >= delta s on [0, 1] and f >= delta beyond.

    Returns (delta, location of the binding sample).
    """
    S = profile.domain_end
    s_in = np.linspace(0.0, min(1.0, S), samples)[1:]
    ratio = profile(s_in) / s_in
    cands = [(float(ratio.min()), float(s_in[int(np.argmin(ratio))]))]
    if S > 1.0:
        s_out = np.linspace(1.0, S, samples)
        vals = profile(s_out)
        cands.append((float(vals.min()), float(s_out[int(np.argmin(vals))])))
    return min(cands)


@dataclass(frozen=True)
class RatioScan:
    hypothesis_met: bool
    delta: float
    failing_s: float | None
    min_ratio: float
    argmin: tuple[float, float] | None
    rows: list


def ball_lower_bound(profile: Profile, s_center: float, r: float, n: int) -> float:
    """Lower bound for vol B(x, r) with x at distance s_center from the tip.

    Uses the annulus of half radius (contained in B(x, r) by going radially
    then along the fiber) and, when the tip is within r, the tip ball of
    radius r - s_center.
    """
    best = annulus_volume(profile, s_center, r / 2.0, n, clip_at_tip=True)
    if s_center < r:
        best = max(best, ball_volume_origin(profile, r - s_center, n))
    return best


def ratio_scan(profile: Profile, n: int | None = None, radii=(0.25, 0.5, 1.0), centers=None) -> RatioScan:
    """Empirical minimum of (volume lower bound)/r^{n+1} over centers and radii."""
    n = _n_of(profile, n)
    delta, where = effective_delta(profile)
    if not delta > 0:
        return RatioScan(False, delta, where, math.nan, None, [])
    rmax = max(radii)
    if centers is None:
        top = profile.domain_end - rmax / 2.0
        centers = np.unique(np.concatenate([np.linspace(0.0, min(2.0, top), 17), np.linspace(0.0, top, 25)]))
    rows = []
    for s in centers:
        for r in radii:
            if s + r / 2.0 > profile.domain_end:
                continue
            ratio = ball_lower_bound(profile, float(s), float(r), n) / r ** (n + 1)
            rows.append((float(s), float(r), ratio))
    i = int(np.argmin([row[2] for row in rows]))
    return RatioScan(True, delta, None, rows[i][2], rows[i][:2], rows)


def write_ratio_csv(path, scan: RatioScan) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s_center", "r", "ratio"])
        for row in scan.rows:
            w.writerow([repr(v) for v in row])


def _grid_nodes(state):
    x = state.x
    sig = np.asarray(state.sigma, dtype=float)
    left = 1.5 * sig[0] - 0.5 * sig[1]
    right = 1.5 * sig[-1] - 0.5 * sig[-2]
    return np.concatenate([[0.0], x, [state.X]]), np.concatenate([[left], sig, [right]])


def arclength_and_distance(state, x1: float, x2: float) -> float:
    """Radial distance between coordinates x1 and x2 (trapezoid on sigma)."""
    lo, hi = sorted((float(x1), float(x2)))
    if lo < -1e-12 or hi > state.X * (1 + 1e-12):
        raise DomainError(f"coordinates [{lo}, {hi}] leave [0, {state.X}]")
    a, b = arclength_at(state, [lo, hi])
    return float(b - a)


def arclength_at(state, xq) -> np.ndarray:
    """Vectorized distance from the tip to coordinates ``xq``."""
    xs, sig = _grid_nodes(state)
    xq = np.asarray(xq, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (sig[1:] + sig[:-1]) * np.diff(xs))])
    j = np.clip(np.searchsorted(xs, xq, side="right") - 1, 0, xs.size - 2)
    dx = xq - xs[j]
    slope = (sig[j + 1] - sig[j]) / (xs[j + 1] - xs[j])
    return cum[j] + sig[j] * dx + 0.5 * slope * dx * dx
