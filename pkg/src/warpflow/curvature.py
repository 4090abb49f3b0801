"""Pointwise curvature of g = ds^2 + f(s)^2 g_std on R^{n+1}.

K is the sectional curvature of planes containing d/ds, L that of planes
tangent to the sphere fibers. They are the only curvature eigenvalues, so
every quantity here is a function of (f, f', f'').
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DomainError, UsageError
from .profiles import Profile

CSV_COLUMNS = ("s", "K", "L", "ric_radial", "ric_sph", "scal", "rm_norm")


@dataclass(frozen=True)
class CurvatureSample:
    s: np.ndarray | float
    K: np.ndarray | float
    L: np.ndarray | float
    ric_radial: np.ndarray | float
    ric_sph: np.ndarray | float
    scal: np.ndarray | float
    rm_norm: np.ndarray | float


@dataclass(frozen=True)
class SchoutenPair:
    a_radial: np.ndarray | float
    a_spherical: np.ndarray | float


def _from_KL(s, K, L, n):
    return CurvatureSample(
        s=s,
        K=K,
        L=L,
        ric_radial=n * K,
        ric_sph=K + (n - 1) * L,
        scal=n * (2.0 * K + (n - 1) * L),
        rm_norm=np.maximum(np.abs(K), np.abs(L)),
    )


def curvature_at(f, fp, fpp, n: int, s=None) -> CurvatureSample:
    """Curvature quantities from the values of f, f', f''."""
    f, fp, fpp = (np.asarray(a, dtype=float) for a in (f, fp, fpp))
    if np.any(~(f > 0)):
        raise DomainError("curvature_at needs f > 0; use tip_curvature at the tip")
    K = -fpp / f
    L = (1.0 - fp * fp) / (f * f)
    out = _from_KL(s, K, L, n)
    if K.ndim == 0:
        out = CurvatureSample(*(float(getattr(out, fl.name)) if fl.name != "s" else s for fl in fields(out)))
    return out


def profile_curvature(profile: Profile, s, n: int | None = None) -> CurvatureSample:
    n = profile.fiber_dim if n is None else n
    s = np.asarray(s, dtype=float)
    return curvature_at(profile(s), profile(s, 1), profile(s, 2), n, s=s)


def schouten_pair(f, fp, fpp) -> SchoutenPair:
    """Eigenvalues of A_g, the curvature-operator shift used by the PIC1 test."""
    f, fp, fpp = (np.asarray(a, dtype=float) for a in (f, fp, fpp))
    half_L = (1.0 - fp * fp) / (2.0 * f * f)
    return SchoutenPair(a_radial=1.0 - fpp / f - half_L, a_spherical=half_L + 1.0)


@dataclass(frozen=True)
class TipCurvature:
    K: float
    L: float
    ric_radial: float
    ric_sph: float
    scal: float
    rm_norm: float
    slope: float
    L_divergent: bool
    L_coefficient: float
    K_divergent: bool


def tip_curvature(profile: Profile, n: int | None = None) -> TipCurvature:
    """Limits of the curvature quantities as s -> 0.

    For a smooth tip (f'(0) = 1) both K and L tend to -f'''(0). For a cone-like
    tip of slope v != 1 the spherical curvature blows up like
    ((1 - v^2)/v^2) / s^2; that coefficient is returned and L is flagged.
    """
    if not profile.tip_anchored:
        raise DomainError("tip_curvature needs a tip-anchored profile")
    n = profile.fiber_dim if n is None else n
    v = float(profile(0.0, 1))
    f2 = float(profile(0.0, 2))
    f3 = float(profile(0.0, 3))
    k_div = abs(f2) > 1e-12
    if k_div:
        K = -math.copysign(math.inf, f2 / v)
    else:
        K = -f3 / v
    if abs(v - 1.0) <= 1e-12:
        L, coeff, l_div = -f3, 0.0, False
    else:
        coeff = (1.0 - v * v) / (v * v)
        L, l_div = math.copysign(math.inf, coeff), True
    with np.errstate(invalid="ignore"):
        s = _from_KL(0.0, np.float64(K), np.float64(L), n)
    return TipCurvature(
        K=float(K),
        L=float(L),
        ric_radial=float(s.ric_radial),
        ric_sph=float(s.ric_sph),
        scal=float(s.scal),
        rm_norm=float(s.rm_norm),
        slope=v,
        L_divergent=l_div,
        L_coefficient=coeff,
        K_divergent=k_div,
    )


def sample_points(S: float, samples: int = 20001, s_min: float | None = None) -> np.ndarray:
    """Uniform points on (0, S] with extra geometric refinement toward the tip."""
    uni = np.linspace(0.0, S, samples)[1:]
    lo = S * 1e-4 if s_min is None else s_min
    geo = np.geomspace(lo, uni[0], 200)
    return np.unique(np.concatenate([geo, uni]))


@dataclass(frozen=True)
class Pic1Report:
    holds: bool
    worst_margin_1: float
    worst_margin_2: float
    argmin_1: float
    argmin_2: float
    first_failure: float | None
    s_max: float


def pic1_check(profile: Profile, n: int | None = None, samples: int = 20001, tolerance: float = 1e-7, s_max: float | None = None) -> Pic1Report:
    """Test the two scalar PIC1 conditions on a dense grid of (0, s_max]."""
    if not profile.tip_anchored:
        raise DomainError("pic1_check needs a tip-anchored profile")
    S = profile.domain_end if s_max is None else min(float(s_max), profile.domain_end)
    s = sample_points(S, samples)
    f, fp, fpp = profile(s), profile(s, 1), profile(s, 2)
    m1 = (1.0 - fp * fp) / (2.0 * f * f) + 1.0
    m2 = 2.0 - fpp / f
    bad = np.nonzero((m1 < -tolerance) | (m2 < -tolerance))[0]
    i1, i2 = int(np.argmin(m1)), int(np.argmin(m2))
    return Pic1Report(
        holds=bad.size == 0,
        worst_margin_1=float(m1[i1]),
        worst_margin_2=float(m2[i2]),
        argmin_1=float(s[i1]),
        argmin_2=float(s[i2]),
        first_failure=float(s[bad[0]]) if bad.size else None,
        s_max=S,
    )


def frame_weights(resolution: int = 61, manifold_dim: int | None = None) -> np.ndarray:
    """Values of c1^2 + c2^2 + 2 c3^2 over a grid of radial components.

    The grid on [-1, 1]^3 keeps points with c1^2 + c2^2 + c3^2 <= 1, which are
    exactly the radial projections realizable by an orthonormal triple once the
    manifold has dimension >= 4. In dimension 3 the triple is a full basis and
    the constraint becomes an equality.
    """
    c = np.linspace(-1.0, 1.0, resolution)
    c1, c2, c3 = np.meshgrid(c, c, c, indexing="ij")
    r2 = c1**2 + c2**2 + c3**2
    if manifold_dim == 3:
        keep = np.abs(r2 - 1.0) <= 2.0 / resolution
        c1, c2, c3 = c1[keep], c2[keep], c3[keep]
        norm = np.sqrt(c1**2 + c2**2 + c3**2)
        c1, c2, c3 = c1 / norm, c2 / norm, c3 / norm
    else:
        keep = r2 <= 1.0 + 1e-12
        c1, c2, c3 = c1[keep], c2[keep], c3[keep]
    return np.unique(c1**2 + c2**2 + 2.0 * c3**2)


def pic1_frame_oracle(a_radial, a_spherical, resolution: int = 61, manifold_dim: int | None = None, weights=None):
    """Brute-force min of A(e1,e1) + A(e2,e2) + 2 A(e3,e3) over orthonormal frames.

    A unit vector with radial component c has A(e, e) = a_sph + (a_rad - a_sph) c^2.
    """
    q = frame_weights(resolution, manifold_dim) if weights is None else weights
    ar = np.atleast_1d(np.asarray(a_radial, dtype=float))
    at = np.atleast_1d(np.asarray(a_spherical, dtype=float))
    vals = (4.0 * at)[:, None] + (ar - at)[:, None] * q[None, :]
    out = vals.min(axis=1)
    return float(out[0]) if np.ndim(a_radial) == 0 and np.ndim(a_spherical) == 0 else out


def lcf_reconstruction_check(sample: CurvatureSample, f, fp, n: int) -> float:
    """Rebuild K and L from the Schouten tensor and compare with the direct values.

    With W = 0 the curvature operator is P (KN) g where
    P = (Ric - Scal/(2n) g)/(n - 1), so the mixed plane gets P_r + P_t and the
    spherical plane 2 P_t.
    """
    P_r = (np.asarray(sample.ric_radial) - np.asarray(sample.scal) / (2.0 * n)) / (n - 1)
    P_t = (np.asarray(sample.ric_sph) - np.asarray(sample.scal) / (2.0 * n)) / (n - 1)
    K_rec = P_r + P_t
    L_rec = 2.0 * P_t
    f, fp = np.asarray(f, dtype=float), np.asarray(fp, dtype=float)
    L_dir = (1.0 - fp * fp) / (f * f)
    K_dir = np.asarray(sample.K)
    scale = np.maximum(1.0, np.maximum(np.abs(K_dir), np.abs(L_dir)))
    res = np.maximum(np.abs(K_rec - K_dir), np.abs(L_rec - L_dir)) / scale
    return float(np.max(res))


@dataclass(frozen=True)
class GrowthReport:
    holds: bool
    worst_margin_f: float
    worst_margin_fp: float
    argmin_f: float
    argmin_fp: float
    s_max: float


def growth_envelope(s):
    """The bounds (e^{sqrt2 s} - 1)/sqrt2 on f and e^{sqrt2 s} on f'."""
    r2 = math.sqrt(2.0)
    s = np.asarray(s, dtype=float)
    return np.expm1(r2 * s) / r2, np.exp(r2 * s)


def growth_bound_check(profile: Profile, n: int | None = None, samples: int = 20001, tolerance: float = 1e-7, s_max: float | None = None) -> GrowthReport:
    """Check the growth envelope; refuses unless PIC1 holds on the same range."""
    pic = pic1_check(profile, n, samples=samples, tolerance=tolerance, s_max=s_max)
    if not pic.holds:
        raise UsageError(
            f"growth bound is only implied by PIC1, which fails at s={pic.first_failure:.6g}"
        )
    S = pic.s_max
    s = np.linspace(0.0, S, samples)
    bf, bfp = growth_envelope(s)
    mf = bf - profile(s)
    mfp = bfp - profile(s, 1)
    rel_f = mf / (1.0 + np.abs(bf))
    rel_fp = mfp / (1.0 + np.abs(bfp))
    i, j = int(np.argmin(rel_f)), int(np.argmin(rel_fp))
    return GrowthReport(
        holds=bool(rel_f[i] >= -tolerance and rel_fp[j] >= -tolerance),
        worst_margin_f=float(mf[i]),
        worst_margin_fp=float(mfp[j]),
        argmin_f=float(s[i]),
        argmin_fp=float(s[j]),
        s_max=S,
    )


def write_curvature_csv(path, sample: CurvatureSample) -> None:
    cols = [np.atleast_1d(np.asarray(getattr(sample, c), dtype=float)) for c in CSV_COLUMNS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
