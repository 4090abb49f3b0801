"""Warping functions f(s) for metrics ds^2 + f(s)^2 g_std.

A :class:`Profile` bundles a vectorized evaluator for f and its first three
derivatives with the data needed to rebuild it from JSON. Analytic kinds use
closed forms; the cap and cone-smoothing constructions glue pieces together
with a C-infinity transition built from the mollifier exp(-a / (x (1 - x))).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, special

from .errors import ConstructionError, ParameterError

Evaluator = Callable[[np.ndarray, int], np.ndarray]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True, eq=False)
class Profile:
    """A warping function on [0, domain_end] with derivatives up to order 3."""

    kind: str
    params: dict
    domain_end: float
    fiber_dim: int
    evaluator: Evaluator = field(repr=False)
    tip_anchored: bool = True
    metadata: dict = field(default_factory=dict)

    def __call__(self, s, order: int = 0):
        if order not in (0, 1, 2, 3):
            raise ParameterError(f"derivative order {order} not implemented")
        arr = np.asarray(s, dtype=float)
        out = self.evaluator(np.atleast_1d(arr), order)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def derivatives(self, s):
        """Return (f, f', f'', f''') at ``s``."""
        return tuple(self(s, d) for d in range(4))

    def to_spec(self) -> dict:
        return {
            "kind": self.kind,
            "params": _jsonable(self.params),
            "domain_end": self.domain_end,
            "fiber_dim": self.fiber_dim,
        }


def _jsonable(obj):
    if isinstance(obj, Profile):
        return obj.to_spec()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# analytic kinds


def _poly_eval(coeffs_by_order):
    def ev(s, order):
        return coeffs_by_order[order](s)

    return ev


def _linear(slope):
    return _poly_eval(
        [
            lambda s: slope * s,
            lambda s: np.full_like(s, slope),
            lambda s: np.zeros_like(s),
            lambda s: np.zeros_like(s),
        ]
    )


def _constant(c):
    return _poly_eval(
        [
            lambda s: np.full_like(s, c),
            lambda s: np.zeros_like(s),
            lambda s: np.zeros_like(s),
            lambda s: np.zeros_like(s),
        ]
    )


def _sphere(radius):
    r = radius
    return _poly_eval(
        [
            lambda s: r * np.sin(s / r),
            lambda s: np.cos(s / r),
            lambda s: -np.sin(s / r) / r,
            lambda s: -np.cos(s / r) / r**2,
        ]
    )


def _sinh(a):
    return _poly_eval(
        [
            lambda s: np.sinh(a * s) / a,
            lambda s: np.cosh(a * s),
            lambda s: a * np.sinh(a * s),
            lambda s: a * a * np.cosh(a * s),
        ]
    )


def _tanh(a):
    def ev(s, order):
        th = np.tanh(a * s)
        sech2 = 1.0 - th * th
        if order == 0:
            return th / a
        if order == 1:
            return sech2
        if order == 2:
            return -2.0 * a * sech2 * th
        return -2.0 * a * a * sech2 * (1.0 - 3.0 * th * th)

    return ev


def _exp_growth(a):
    return _poly_eval(
        [
            lambda s: np.expm1(a * s) / a,
            lambda s: np.exp(a * s),
            lambda s: a * np.exp(a * s),
            lambda s: a * a * np.exp(a * s),
        ]
    )


def _perturbed_linear(amp, freq):
    return _poly_eval(
        [
            lambda s: s + amp * np.sin(freq * s),
            lambda s: 1.0 + amp * freq * np.cos(freq * s),
            lambda s: -amp * freq**2 * np.sin(freq * s),
            lambda s: -amp * freq**3 * np.cos(freq * s),
        ]
    )


def _rounded_cone(v, width):
    # f' = v + (1 - v) exp(-(s/w)^2): smooth tip, slope v at infinity
    w = width
    c = (1.0 - v) * w * math.sqrt(math.pi) / 2.0

    def ev(s, order):
        u = s / w
        g = np.exp(-u * u)
        if order == 0:
            return v * s + c * special.erf(u)
        if order == 1:
            return v + (1.0 - v) * g
        if order == 2:
            return -(1.0 - v) * 2.0 * s / w**2 * g
        return -(1.0 - v) * 2.0 / w**2 * (1.0 - 2.0 * u * u) * g

    return ev


def _require(cond, msg):
    if not cond:
        raise ParameterError(msg)


def _positive(params, key, default=None):
    val = params.get(key, default)
    _require(val is not None, f"missing parameter '{key}'")
    val = float(val)
    _require(math.isfinite(val) and val > 0, f"parameter '{key}' must be > 0, got {val}")
    return val


def _build_analytic(kind, params, S):
    """Return (evaluator, tip_anchored, normalized params)."""
    if kind == "euclidean":
        return _linear(1.0), True, {}
    if kind == "cone":
        d = _positive(params, "slope")
        _require(d <= 1.0, f"cone slope must lie in (0, 1], got {d}")
        return _linear(d), True, {"slope": d}
    if kind == "linear":
        a = _positive(params, "slope")
        return _linear(a), True, {"slope": a}
    if kind == "cylinder":
        c = _positive(params, "radius")
        return _constant(c), False, {"radius": c}
    if kind == "sphere_cap":
        r = _positive(params, "radius", 1.0)
        _require(S < math.pi * r, f"sphere_cap needs domain_end < pi*radius, got {S}")
        return _sphere(r), True, {"radius": r}
    if kind == "sinh":
        a = _positive(params, "rate", 1.0)
        return _sinh(a), True, {"rate": a}
    if kind == "tanh":
        a = _positive(params, "rate", 1.0)
        return _tanh(a), True, {"rate": a}
    if kind == "exp_growth":
        a = _positive(params, "rate", 2.0)
        return _exp_growth(a), True, {"rate": a}
    if kind == "perturbed_linear":
        amp = float(params.get("amplitude", 0.1))
        freq = _positive(params, "frequency", 1.0)
        _require(abs(amp) * freq < 1.0, "perturbed_linear needs |amplitude|*frequency < 1")
        return _perturbed_linear(amp, freq), True, {"amplitude": amp, "frequency": freq}
    if kind == "rounded_cone":
        v = _positive(params, "slope")
        _require(v < 1.0, f"rounded_cone slope must lie in (0, 1), got {v}")
        w = _positive(params, "width")
        return _rounded_cone(v, w), True, {"slope": v, "width": w}
    raise ParameterError(f"unknown profile kind '{kind}'")


ANALYTIC_KINDS = (
    "euclidean",
    "cone",
    "linear",
    "cylinder",
    "sphere_cap",
    "sinh",
    "tanh",
    "exp_growth",
    "perturbed_linear",
    "rounded_cone",
)


def make_profile(kind: str, params: dict | None = None, S: float = 10.0, n: int = 2) -> Profile:
    """Build an analytic or spline profile on [0, S] for fiber dimension n."""
    params = dict(params or {})
    S = float(S)
    _require(math.isfinite(S) and S > 0, f"domain_end must be > 0, got {S}")
    _require(int(n) == n and n >= 2, f"fiber_dim must be an integer >= 2, got {n}")
    n = int(n)
    if kind == "spline":
        return _make_spline(params, S, n)
    if kind == "composite":
        return _make_composite(params, S, n)
    ev, tip, norm = _build_analytic(kind, params, S)
    return Profile(kind, norm, S, n, ev, tip_anchored=tip)


def _make_spline(params, S, n):
    try:
        knots = np.asarray(params["knots"], dtype=float)
        coeffs = np.asarray(params["coefficients"], dtype=float)
    except KeyError as exc:
        raise ParameterError(f"spline needs parameter {exc}") from None
    degree = int(params.get("degree", 5))
    tip_free = bool(params.get("tip_free", False))
    _require(degree >= 1, "spline degree must be >= 1")
    _require(knots.size == coeffs.size + degree + 1, "spline needs len(knots) == len(coefficients) + degree + 1")
    _require(bool(np.all(np.diff(knots) >= 0)), "spline knots must be nondecreasing")
    _require(knots[degree] <= 0.0 and knots[-degree - 1] >= S, "spline base interval must cover [0, domain_end]")
    spl = interpolate.BSpline(knots, coeffs, degree, extrapolate=True)
    derivs = [spl] + [spl.derivative(d) for d in (1, 2, 3)]

    def ev(s, order):
        return derivs[order](s)

    if not tip_free:
        _require(abs(float(spl(0.0))) <= 1e-12, "tip-anchored spline must satisfy f(0) = 0")
    norm = {"knots": knots.tolist(), "coefficients": coeffs.tolist(), "degree": degree, "tip_free": tip_free}
    return Profile("spline", norm, S, n, ev, tip_anchored=not tip_free)


# ---------------------------------------------------------------------------
# composite profiles


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    evaluator: Evaluator
    shift: float = 0.0


def _piecewise_evaluator(pieces):
    cuts = np.array([p.start for p in pieces[1:]])

    def ev(s, order):
        idx = np.searchsorted(cuts, s, side="right")
        out = np.empty_like(s)
        for j, piece in enumerate(pieces):
            mask = idx == j
            if np.any(mask):
                arg = s[mask] if piece.shift == 0.0 else s[mask] - piece.shift
                out[mask] = piece.evaluator(arg, order)
        return out

    return ev


def junction_mismatch(pieces, orders=(0, 1, 2)):
    """Largest relative jump of the requested derivative orders across junctions."""
    worst = 0.0
    for left, right in zip(pieces[:-1], pieces[1:]):
        x = np.array([right.start])
        for d in orders:
            a = float(left.evaluator(x - left.shift, d)[0])
            b = float(right.evaluator(x - right.shift, d)[0])
            worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))
    return worst


def _make_composite(params, S, n):
    raw = params.get("pieces")
    _require(isinstance(raw, list) and len(raw) >= 1, "composite needs a non-empty 'pieces' list")
    pieces, norm_pieces = [], []
    prev_end = 0.0
    for i, item in enumerate(raw):
        _require(isinstance(item, dict), f"pieces[{i}] must be an object")
        start, end = float(item.get("start", prev_end)), float(item["end"])
        shift = float(item.get("shift", 0.0))
        _require(abs(start - prev_end) <= 1e-12, f"pieces[{i}] must start where the previous piece ends")
        _require(end > start, f"pieces[{i}] must have end > start")
        sub = profile_from_spec(item["profile"])
        pieces.append(Piece(start, end, sub.evaluator, shift))
        norm_pieces.append({"start": start, "end": end, "shift": shift, "profile": sub.to_spec()})
        prev_end = end
    _require(abs(prev_end - S) <= 1e-12, "composite pieces must end at domain_end")
    jump = junction_mismatch(pieces)
    if jump > 1e-9:
        raise ConstructionError(f"composite pieces do not match to second order at a junction (relative jump {jump:.3e})")
    first = profile_from_spec(raw[0]["profile"])
    return Profile(
        "composite",
        {"pieces": norm_pieces},
        S,
        n,
        _piecewise_evaluator(pieces),
        tip_anchored=first.tip_anchored,
    )


# ---------------------------------------------------------------------------
# bump functions


def _mollifier(x, a, order):
    """exp(-a / (x (1 - x))) on (0, 1), zero outside, and its first two derivatives."""
    out = np.zeros_like(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    u = xi * (1.0 - xi)
    m = np.exp(-a / u)
    live = m > 0.0
    res = np.zeros_like(xi)
    if order == 0:
        res = m
    else:
        up = 1.0 - 2.0 * xi
        uu = u[live]
        upl = up[live]
        if order == 1:
            res[live] = m[live] * a * upl / uu**2
        elif order == 2:
            res[live] = m[live] * (a * a * upl**2 / uu**4 + a * (-2.0 * uu - 2.0 * upl**2) / uu**3)
        else:
            raise ParameterError("mollifier derivatives above order 2 are not implemented")
    out[inside] = res
    return out


@dataclass(frozen=True, eq=False)
class Transition:
    """Smooth step S: 0 on (-inf, 0], 1 on [1, inf), S' = m / Z."""

    sharpness: float = 1.0
    norm: float = field(init=False)

    def __post_init__(self):
        a = float(self.sharpness)
        if not (a > 0 and math.isfinite(a)):
            raise ParameterError("sharpness must be > 0")
        z = integrate.quad(lambda x: math.exp(-a / (x * (1 - x))) if 0 < x < 1 else 0.0, 0.0, 1.0, epsabs=1e-300, epsrel=1e-13, limit=200)[0]
        object.__setattr__(self, "norm", z)

    def density(self, x, order=0):
        return _mollifier(np.asarray(x, dtype=float), self.sharpness, order) / self.norm

    def _partial(self, x):
        # integral of m over [0, x] for x in [0, 1/2], Gauss-Legendre
        u = 0.5 * x[:, None] * (_GL_X[None, :] + 1.0)
        vals = _mollifier(u.ravel(), self.sharpness, 0).reshape(u.shape)
        return 0.5 * x * (vals @ _GL_W) / self.norm

    def __call__(self, x, order=0):
        """S and its derivatives up to order 3."""
        x = np.asarray(x, dtype=float)
        if order > 0:
            return self.density(x, order - 1)
        xc = np.clip(x, 0.0, 1.0).ravel()
        out = np.empty_like(xc)
        low = xc <= 0.5
        out[low] = self._partial(xc[low])
        out[~low] = 1.0 - self._partial(1.0 - xc[~low])
        return out.reshape(x.shape)

    def antiderivative(self, x):
        """Integral of S over [0, x] for x in [0, 1]; linear continuation beyond."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, 0.0, 1.0).ravel()
        u = 0.5 * xc[:, None] * (_GL_X[None, :] + 1.0)
        m = _mollifier(u.ravel(), self.sharpness, 0).reshape(u.shape)
        val = 0.5 * xc * (((xc[:, None] - u) * m) @ _GL_W) / self.norm
        extra = np.maximum(x.ravel() - 1.0, 0.0)
        return (val + extra).reshape(x.shape)


@dataclass(frozen=True, eq=False)
class BumpPsi:
    """psi = 1 - S: equals 1 at 0, vanishes to all orders at 1, nonincreasing.

    ``bound`` is the realized sup of |psi'| + |psi''| + |psi'''| on [0, 1].
    """

    sharpness: float = 1.0
    transition: Transition = field(init=False, repr=False)
    bound: float = field(init=False)

    def __post_init__(self):
        tr = Transition(self.sharpness)
        object.__setattr__(self, "transition", tr)
        x = np.linspace(0.0, 1.0, 200001)
        total = sum(np.abs(tr.density(x, d)) for d in range(3))
        object.__setattr__(self, "bound", float(total.max()))

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return 1.0 - self.transition(x)
        return -self.transition(x, order)


@dataclass(frozen=True, eq=False)
class CapPsiBig:
    """Psi with Psi(0)=0, Psi'(0)=1, Psi'(1)=v and -Psi'' = (1 - v) S'.

    Higher derivatives vanish at both ends, so the scaled cap glues smoothly
    onto a cone of slope v.
    """

    end_slope: float
    sharpness: float = 1.0
    transition: Transition = field(init=False, repr=False)

    def __post_init__(self):
        v = float(self.end_slope)
        if not (0.0 < v < 1.0):
            raise ParameterError(f"end slope must lie in (0, 1), got {v}")
        object.__setattr__(self, "transition", Transition(self.sharpness))

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        c = 1.0 - self.end_slope
        tr = self.transition
        if order == 0:
            return x - c * tr.antiderivative(x)
        if order == 1:
            return 1.0 - c * tr(x)
        return -c * tr.density(x, order - 2)

    @property
    def end_value(self) -> float:
        return float(self(np.array([1.0]))[0])


# ---------------------------------------------------------------------------
# constructions


def _dense(a, b, per_unit=10_000, minimum=1001, maximum=2_000_001):
    count = int(min(maximum, max(minimum, math.ceil((b - a) * per_unit) + 1)))
    return np.linspace(a, b, count)


def _blend_evaluator(base: Evaluator, target: Evaluator, start: float, tr: Transition):
    """(1 - w) f + w g with w = S(s - start), derivatives by Leibniz."""
    binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1]]

    def ev(s, order):
        x = s - start
        out = np.zeros_like(s)
        for i in range(order + 1):
            w = tr(x, i)
            one_minus_w = 1.0 - w if i == 0 else -w
            j = order - i
            out += binom[order][i] * (one_minus_w * base(s, j) + w * target(s, j))
        return out

    return ev


def _check_tip_anchored(f: Profile, what: str):
    if not f.tip_anchored:
        raise ConstructionError(f"{what} needs a tip-anchored profile")


def cap_linear(f: Profile, k: float, sharpness: float = 1.0) -> Profile:
    """Keep f on [0, k] and continue it linearly beyond k + 1."""
    _check_tip_anchored(f, "cap_linear")
    k = float(k)
    if not (k > 0 and k + 1.0 <= f.domain_end):
        raise ConstructionError(f"cap_linear needs 0 < k and k + 1 <= domain_end, got k={k}, S={f.domain_end}")
    zone = _dense(k, k + 1.0)
    slope_zone = f(zone, 1)
    bad = np.nonzero(slope_zone <= 0.0)[0]
    if bad.size:
        raise ConstructionError(f"f' <= 0 at s={zone[bad[0]]:.6g} in the blend zone [{k}, {k + 1}]")
    f_k0, slope = float(f(k)), float(f(k, 1))
    line = _poly_eval(
        [
            lambda s: f_k0 + slope * (s - k),
            lambda s: np.full_like(s, slope),
            lambda s: np.zeros_like(s),
            lambda s: np.zeros_like(s),
        ]
    )
    tr = Transition(sharpness)
    pieces = [
        Piece(0.0, k, f.evaluator),
        Piece(k, k + 1.0, _blend_evaluator(f.evaluator, line, k, tr)),
        Piece(k + 1.0, f.domain_end, line),
    ]
    ev = _piecewise_evaluator(pieces)
    tail = _dense(k, f.domain_end, maximum=400_001)
    dmin = float(ev(tail, 1).min())
    if dmin <= 0.0:
        where = tail[int(np.argmin(ev(tail, 1)))]
        raise ConstructionError(f"capped profile has f_k' <= 0 at s={where:.6g}")
    return Profile(
        "cap_linear",
        {"base": f, "k": k, "sharpness": sharpness},
        f.domain_end,
        f.fiber_dim,
        ev,
        metadata={"slope": slope, "min_slope_beyond_k": dmin, "junctions": [k, k + 1.0]},
    )


def cap_cylinder(f: Profile, k: float, eps: float, sharpness: float = 1.0) -> Profile:
    """Keep f on [0, k] and blend to the constant eps/2 on [k, k + 1]."""
    _check_tip_anchored(f, "cap_cylinder")
    k, eps = float(k), float(eps)
    if not eps > 0:
        raise ConstructionError(f"cap_cylinder needs eps > 0, got {eps}")
    if not (k > 0 and k + 1.0 <= f.domain_end):
        raise ConstructionError(f"cap_cylinder needs 0 < k and k + 1 <= domain_end, got k={k}, S={f.domain_end}")
    zone = _dense(k, k + 1.0)
    vals = f(zone)
    bad = np.nonzero(vals < eps)[0]
    if bad.size:
        raise ConstructionError(f"f < eps at s={zone[bad[0]]:.6g} in the blend zone [{k}, {k + 1}]")
    tr = Transition(sharpness)
    const = _constant(eps / 2.0)
    pieces = [
        Piece(0.0, k, f.evaluator),
        Piece(k, k + 1.0, _blend_evaluator(f.evaluator, const, k, tr)),
        Piece(k + 1.0, f.domain_end, const),
    ]
    ev = _piecewise_evaluator(pieces)
    fmin = float(ev(zone, 0).min())
    if fmin < eps / 2.0:
        raise ConstructionError(f"blend dips below eps/2 (min {fmin:.6g})")
    return Profile(
        "cap_cylinder",
        {"base": f, "k": k, "eps": eps, "sharpness": sharpness},
        f.domain_end,
        f.fiber_dim,
        ev,
        metadata={"tail_radius": eps / 2.0, "junctions": [k, k + 1.0]},
    )


def epsilon_k_branches(v: float, L: float, C: float, k: float) -> tuple[float, float, float]:
    """The three candidate smoothing scales whose minimum is epsilon_k."""
    return (
        math.sqrt((1.0 - v * v / 16.0) / 100.0) / (C * k * k),
        v / (4.0 * C * k),
        v * L / (2.0 * k**3 * C),
    )


def epsilon_k(v: float, L: float, C: float, k: float) -> float:
    return min(epsilon_k_branches(v, L, C, k))


def tip_radius(f: Profile, v: float, samples: int = 1000) -> float:
    """Largest d with f^2 and f''^2 below (1 - v^2/4)/100 on [0, d], by bisection."""
    bound = (1.0 - v * v / 4.0) / 100.0

    def ok(d):
        s = np.linspace(0.0, d, samples)
        return bool(np.all(f(s) ** 2 <= bound) and np.all(f(s, 2) ** 2 <= bound))

    hi = f.domain_end
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def smooth_cone(
    f: Profile,
    k: float,
    v: float | None = None,
    L: float = 1.0,
    C: float | None = None,
    sharpness: float = 1.0,
) -> Profile:
    """Replace the cone-like tip of f by a small smooth cap.

    On [0, s0] with s0 = eps_k / Psi(1) the result is s0 * Psi(s / s0); beyond,
    it is F(s - s0) where F(s) = eps_k psi(k s) + f(s). Every inequality the
    construction relies on is checked by dense sampling.
    """
    _check_tip_anchored(f, "smooth_cone")
    n = f.fiber_dim
    f0, f1_0, f2_0 = float(f(0.0)), float(f(0.0, 1)), float(f(0.0, 2))
    if abs(f0) > 1e-12:
        raise ConstructionError(f"f(0) = 0 fails (f(0) = {f0:.3e})")
    if abs(f2_0) > 1e-9:
        raise ConstructionError(f"f''(0) = 0 fails (f''(0) = {f2_0:.3e})")
    if v is None:
        v = f1_0
    v = float(v)
    if abs(v - f1_0) > 1e-9:
        raise ConstructionError(f"f'(0) = v fails (f'(0) = {f1_0}, v = {v})")
    if not 0.0 < v < 1.0:
        raise ConstructionError(f"0 < v < 1 fails (v = {v})")
    if not L > 0:
        raise ConstructionError(f"L > 0 fails (L = {L})")
    psi = BumpPsi(sharpness)
    if C is None:
        C = psi.bound
    C = float(C)
    if not C > 0:
        raise ConstructionError(f"C > 0 fails (C = {C})")
    d0 = tip_radius(f, v)
    if not k > 1.0 / d0:
        raise ConstructionError(f"k > 1/delta0 fails (k = {k}, 1/delta0 = {1.0 / d0:.6g})")
    probe = np.linspace(0.0, d0, 1000)
    slopes = f(probe, 1)
    bad = np.nonzero((slopes < v / 2.0) | (slopes > (v + 1.0) / 2.0))[0]
    if bad.size:
        raise ConstructionError(f"v/2 <= f' <= (v+1)/2 fails at s={probe[bad[0]]:.6g}")

    eps = epsilon_k(v, L, C, k)
    big = CapPsiBig(v, sharpness)
    s0 = eps / big.end_value
    base = f.evaluator

    def F(s, order):
        return eps * k**order * psi(k * s, order) + base(s, order)

    def cap(s, order):
        return s0 ** (1 - order) * big(s / s0, order)

    pieces = [Piece(0.0, s0, cap), Piece(s0, f.domain_end, F, shift=s0)]
    jump = junction_mismatch(pieces)
    if jump > 1e-9:
        raise ConstructionError(f"cap and F_k disagree at the junction (relative jump {jump:.3e})")

    def check(name, values, where):
        bad = np.nonzero(~values)[0]
        if bad.size:
            raise ConstructionError(f"{name} fails at s={where[bad[0]]:.6g}")

    s_f = np.unique(np.concatenate([_dense(0.0, 1.0 / k, per_unit=10_000 * k), _dense(0.0, f.domain_end - s0, maximum=400_001)]))
    F0, F1, F2 = F(s_f, 0), F(s_f, 1), F(s_f, 2)
    check("f_k' >= v/4", F1 >= v / 4.0, s_f)
    inner = s_f <= 1.0 / k
    lhs = -2.0 * F0 * F2 + (n - 1) * (1.0 - F1**2)
    check(
        "-2 F F'' + (n-1)(1 - F'^2) >= (n-2)(1 - v^2/16)",
        ~inner | (lhs >= (n - 2) * (1.0 - v * v / 16.0)),
        s_f,
    )
    check("-F''/F >= -2L where F'' >= 0", (F2 < 0.0) | (-F2 / F0 >= -2.0 * L), s_f)
    ric_rad = -n * F2 / F0
    ric_sph = -F2 / F0 + (n - 1) * (1.0 - F1**2) / F0**2
    u = np.linspace(0.0, 1.0, 2001)[1:]
    g0, g1, g2 = cap(u * s0, 0), cap(u * s0, 1), cap(u * s0, 2)
    cap_ric = np.minimum(-n * g2 / g0, -g2 / g0 + (n - 1) * (1.0 - g1**2) / g0**2)
    min_ric = float(min(np.minimum(ric_rad, ric_sph).min(), cap_ric.min()))
    meta = {
        "epsilon_k": eps,
        "epsilon_branches": list(epsilon_k_branches(v, L, C, k)),
        "C": C,
        "C_realized": psi.bound,
        "delta0": d0,
        "v": v,
        "cap_length": s0,
        "min_ricci": min_ric,
        "junctions": [s0],
    }
    return Profile(
        "smooth_cone",
        {"base": f, "k": k, "v": v, "L": L, "C": C, "sharpness": sharpness},
        f.domain_end,
        n,
        _piecewise_evaluator(pieces),
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# JSON round trip

_CONSTRUCTIONS = {
    "cap_linear": (cap_linear, ("k",), ("sharpness",)),
    "cap_cylinder": (cap_cylinder, ("k", "eps"), ("sharpness",)),
    "smooth_cone": (smooth_cone, ("k",), ("v", "L", "C", "sharpness")),
}

SPEC_KEYS = {"kind", "params", "domain_end", "fiber_dim"}


def profile_from_spec(spec: dict) -> Profile:
    """Build a profile from {"kind", "params", "domain_end", "fiber_dim"}."""
    if isinstance(spec, Profile):
        return spec
    if not isinstance(spec, dict):
        raise ParameterError("profile spec must be a JSON object")
    unknown = set(spec) - SPEC_KEYS
    if unknown:
        raise ParameterError(f"unknown profile spec key(s): {sorted(unknown)}")
    if "kind" not in spec:
        raise ParameterError("profile spec needs 'kind'")
    kind = spec["kind"]
    params = dict(spec.get("params", {}))
    if kind in _CONSTRUCTIONS:
        fn, required, optional = _CONSTRUCTIONS[kind]
        if "base" not in params:
            raise ParameterError(f"{kind} needs params.base")
        extra = set(params) - {"base", *required, *optional}
        if extra:
            raise ParameterError(f"unknown {kind} parameter(s): {sorted(extra)}")
        base = profile_from_spec(params.pop("base"))
        missing = [r for r in required if r not in params]
        if missing:
            raise ParameterError(f"{kind} needs parameter(s) {missing}")
        return fn(base, **params)
    return make_profile(kind, params, spec.get("domain_end", 10.0), spec.get("fiber_dim", 2))


_LIBRARY = {
    "euclidean": lambda n: make_profile("euclidean", {}, 10.0, n),
    "cone_half": lambda n: make_profile("cone", {"slope": 0.5}, 10.0, n),
    "hemisphere": lambda n: make_profile("sphere_cap", {}, math.pi / 2, n),
    "rounded_cone": lambda n: make_profile("rounded_cone", {"slope": 0.5, "width": 0.3}, 8.0, n),
    "sinh_linear_cap": lambda n: cap_linear(make_profile("sinh", {"rate": 1.0}, 6.0, n), 1.0),
    "tanh_linear_cap": lambda n: cap_linear(make_profile("tanh", {"rate": 1.0}, 8.0, n), 2.0),
    "smoothed_cone_k10": lambda n: smooth_cone(make_profile("cone", {"slope": 0.5}, 4.0, n), 10),
    "cylinder_capped_cone": lambda n: cap_cylinder(make_profile("cone", {"slope": 0.5}, 8.0, n), 5.0, 1.0),
    "sinh_saturating": lambda n: make_profile("sinh", {"rate": math.sqrt(2.0)}, 3.0, n),
    "rapid_growth": lambda n: make_profile("exp_growth", {"rate": 2.0}, 5.0, n),
    "perturbed_linear": lambda n: make_profile("perturbed_linear", {"amplitude": 0.1, "frequency": 1.0}, 10.0, n),
}

LIBRARY_NAMES = tuple(_LIBRARY)


def library_profile(name: str, n: int = 2) -> Profile:
    """One named library profile; construction failures propagate."""
    if name not in _LIBRARY:
        raise ParameterError(f"unknown library profile '{name}'")
    return _LIBRARY[name](n)


def library(n: int = 2) -> dict[str, Profile]:
    """Named profiles used by the examples, tests and CLI.

    Constructions whose hypotheses fail in fiber dimension n are left out
    (the cone smoothing needs n <= 5 at slope 1/2).
    """
    out = {}
    for name, build in _LIBRARY.items():
        try:
            out[name] = build(n)
        except ConstructionError:
            continue
    return out
