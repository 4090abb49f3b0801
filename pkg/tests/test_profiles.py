import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warpflow.errors import ConstructionError, ParameterError
from warpflow.profiles import (
    BumpPsi,
    CapPsiBig,
    Transition,
    cap_cylinder,
    cap_linear,
    epsilon_k,
    epsilon_k_branches,
    library,
    make_profile,
    profile_from_spec,
    smooth_cone,
)

DENSE = np.linspace(0.0, 1.0, 20001)


def fd_error(profile, s, order, h):
    """Max deviation between the order-d evaluator and a centered difference of order d-1."""
    lower = lambda x: profile(x, order - 1)
    fd = (lower(s + h) - lower(s - h)) / (2.0 * h)
    return float(np.max(np.abs(fd - profile(s, order))))


def test_euclidean_closed_form():
    p = make_profile("euclidean", {}, 10.0, 2)
    s = np.linspace(0.0, 10.0, 11)
    assert np.array_equal(p(s), s)
    assert np.all(p(s, 1) == 1.0)
    assert np.all(p(s, 2) == 0.0)


def test_cylinder_closed_form():
    p = make_profile("cylinder", {"radius": 1.0}, 10.0, 2)
    s = np.linspace(0.0, 10.0, 11)
    assert np.all(p(s) == 1.0)
    assert np.all(p(s, 1) == 0.0)
    assert not p.tip_anchored


def test_sphere_cap_closed_form():
    p = make_profile("sphere_cap", {}, math.pi / 2, 2)
    s = np.linspace(0.0, math.pi / 2, 17)
    np.testing.assert_allclose(p(s), np.sin(s), rtol=0, atol=1e-15)
    np.testing.assert_allclose(p(s, 2), -np.sin(s), rtol=0, atol=1e-15)


@pytest.mark.parametrize(
    "kind,params,S",
    [
        ("cone", {"slope": 0.0}, 10.0),
        ("cone", {"slope": 1.5}, 10.0),
        ("cylinder", {"radius": -1.0}, 10.0),
        ("sphere_cap", {}, 4.0),
        ("no_such_kind", {}, 10.0),
        ("euclidean", {}, -1.0),
    ],
)
def test_make_profile_rejects_bad_parameters(kind, params, S):
    with pytest.raises(ParameterError):
        make_profile(kind, params, S, 2)


def test_make_profile_rejects_small_fiber_dim():
    with pytest.raises(ParameterError):
        make_profile("euclidean", {}, 1.0, 1)


def test_cap_linear_is_idempotent_on_lines():
    f = make_profile("euclidean", {}, 10.0, 2)
    fk = cap_linear(f, 5.0)
    s = np.linspace(0.0, 10.0, 10001)
    np.testing.assert_allclose(fk(s), s, rtol=0, atol=1e-14)
    np.testing.assert_allclose(fk(s, 1), 1.0, rtol=0, atol=1e-14)


def test_cap_linear_on_wavy_profile():
    f = make_profile("perturbed_linear", {"amplitude": 0.1, "frequency": 1.0}, 10.0, 2)
    fk = cap_linear(f, 5.0)
    inner = np.linspace(0.0, 5.0, 5001)
    assert np.array_equal(fk(inner), f(inner))
    outer = np.linspace(6.0, 10.0, 4001)
    slope = fk(outer, 1)
    assert np.ptp(slope) == 0.0
    assert np.all(fk(outer, 2) == 0.0)
    samples = np.linspace(0.0, 10.0, 10_000)
    assert fk(samples, 1).min() > 0.0
    assert fk.metadata["min_slope_beyond_k"] > 0.0


def test_cap_linear_rejects_decreasing_blend_zone():
    f = make_profile("sphere_cap", {"radius": 2.0}, 6.2, 2)
    assert f(5.5, 1) < 0
    with pytest.raises(ConstructionError, match=r"f' <= 0 at s=5"):
        cap_linear(f, 5.0)


def test_cap_cylinder_on_line():
    f = make_profile("euclidean", {}, 10.0, 2)
    fk = cap_cylinder(f, 5.0, 1.0)
    inner = np.linspace(0.0, 5.0, 5001)
    assert np.array_equal(fk(inner), f(inner))
    assert np.all(fk(np.linspace(6.0, 10.0, 4001)) == 0.5)
    blend = np.linspace(5.0, 6.0, 10_001)
    assert fk(blend).min() >= 0.5
    assert fk.metadata["tail_radius"] == 0.5


def test_cap_cylinder_rejects_tip_free_input():
    f = make_profile("cylinder", {"radius": 1.0}, 10.0, 2)
    with pytest.raises(ConstructionError):
        cap_cylinder(f, 5.0, 2.0)


def test_cap_cylinder_rejects_thin_blend_zone():
    f = make_profile("cone", {"slope": 0.1}, 10.0, 2)
    with pytest.raises(ConstructionError, match="f < eps"):
        cap_cylinder(f, 5.0, 1.0)


def test_epsilon_k_branches_match_hand_arithmetic():
    branches = epsilon_k_branches(0.5, 1.0, 10.0, 20)
    expected = (math.sqrt((1 - 1 / 64) / 100) / 4000.0, 0.5 / 800.0, 0.5 / 160000.0)
    np.testing.assert_allclose(branches, expected, rtol=1e-14)
    np.testing.assert_allclose(branches, (2.48e-5, 6.25e-4, 3.125e-6), rtol=1e-2)
    assert epsilon_k(0.5, 1.0, 10.0, 20) == pytest.approx(3.125e-6, rel=1e-14)


@pytest.fixture(scope="module")
def smoothed():
    base = make_profile("cone", {"slope": 0.5}, 4.0, 2)
    return base, smooth_cone(base, 20, v=0.5, L=1.0, C=10.0)


def test_smooth_cone_uses_min_branch(smoothed):
    _, fk = smoothed
    assert fk.metadata["epsilon_k"] == pytest.approx(3.125e-6, rel=1e-14)


def test_smooth_cone_tip(smoothed):
    _, fk = smoothed
    assert fk(0.0) == 0.0
    assert abs(fk(0.0, 1) - 1.0) <= 1e-9


def test_smooth_cone_is_shifted_F_beyond_cap(smoothed):
    base, fk = smoothed
    eps, s0 = fk.metadata["epsilon_k"], fk.metadata["cap_length"]
    psi = BumpPsi()
    s = np.linspace(s0 * 1.001, 3.0, 5001)
    F = eps * psi(20 * (s - s0)) + base(s - s0)
    assert np.array_equal(fk(s), F)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_smooth_cone_tip_positivity(n):
    base = make_profile("cone", {"slope": 0.5}, 4.0, n)
    k, v = 20, 0.5
    fk = smooth_cone(base, k, v=v, L=1.0, C=10.0)
    eps, psi = fk.metadata["epsilon_k"], BumpPsi()
    s = np.linspace(0.0, 1.0 / k, 20001)
    F = [eps * k**d * psi(k * s, d) + base(s, d) for d in range(3)]
    lhs = -2.0 * F[0] * F[2] + (n - 1) * (1.0 - F[1] ** 2)
    assert lhs.min() >= (n - 2) * (1.0 - v * v / 16.0)


def test_smooth_cone_ricci_lower_bound(smoothed):
    base, fk = smoothed
    eps, psi, k = fk.metadata["epsilon_k"], BumpPsi(), 20
    s = np.linspace(1e-6, 3.0, 200001)
    F0 = eps * psi(k * s) + base(s)
    F2 = eps * k * k * psi(k * s, 2)
    where = F2 >= 0
    assert np.all(-F2[where] / F0[where] >= -2.0)
    assert fk.metadata["min_ricci"] >= -2.0


def test_smooth_cone_rejects_non_cone_tip():
    with pytest.raises(ConstructionError, match="0 < v < 1"):
        smooth_cone(make_profile("euclidean", {}, 4.0, 2), 20)
    with pytest.raises(ConstructionError, match="delta0"):
        smooth_cone(make_profile("cone", {"slope": 0.5}, 4.0, 2), 2)


def test_bump_psi_invariants():
    psi = BumpPsi()
    assert psi(0.0) == 1.0
    assert psi(1.0) == 0.0
    for d in (1, 2, 3):
        assert psi(np.array([0.0, 1.0]), d).tolist() == [0.0, 0.0]
    assert np.all(psi(DENSE, 1) <= 0.0)
    total = sum(np.abs(psi(DENSE, d)) for d in (1, 2, 3))
    assert total.max() <= psi.bound * (1 + 1e-12)


@pytest.mark.parametrize("v", [0.1, 0.5, 0.9])
def test_cap_psi_big_invariants(v):
    cap = CapPsiBig(v)
    assert cap(0.0) == 0.0
    assert cap(0.0, 1) == 1.0
    assert cap(1.0, 1) == pytest.approx(v, abs=1e-13)
    assert np.all(cap(DENSE, 2) <= 0.0)
    for d in (2, 3):
        assert cap(np.array([0.0, 1.0]), d).tolist() == [0.0, 0.0]


def test_transition_antiderivative_matches_quadrature():
    tr = Transition()
    x = np.linspace(0.0, 1.0, 2001)
    vals = tr(x)
    trapz = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(x))])
    np.testing.assert_allclose(tr.antiderivative(x), trapz, atol=1e-7)


# (sample range, finite-difference step) covering each profile's curved part
CONSTRUCTED = {
    "sinh_linear_cap": (0.3, 2.5, 2e-3),
    "tanh_linear_cap": (0.3, 3.5, 2e-3),
    "cylinder_capped_cone": (4.9, 6.1, 2e-3),
    "smoothed_cone_k10": (0.01, 0.09, 2e-4),
    "rounded_cone": (0.1, 7.5, 2e-3),
    "perturbed_linear": (0.1, 9.5, 2e-3),
}


@pytest.mark.parametrize("name", sorted(CONSTRUCTED))
@pytest.mark.parametrize("order", [1, 2, 3])
def test_evaluators_agree_with_finite_differences_to_second_order(name, order):
    p = library(2)[name]
    lo, hi, h = CONSTRUCTED[name]
    s = np.linspace(lo, hi, 97)
    e1, e2 = fd_error(p, s, order, h), fd_error(p, s, order, h / 2)
    assert 3.5 <= e1 / e2 <= 4.5


@pytest.mark.parametrize("builder", ["cap_linear", "cap_cylinder"])
def test_caps_are_bitwise_identity_on_inner_zone(builder):
    f = make_profile("sinh", {"rate": 1.0}, 6.0, 2)
    fk = cap_linear(f, 2.0) if builder == "cap_linear" else cap_cylinder(f, 2.0, 1.0)
    s = np.linspace(0.0, 2.0, 10001)
    for d in range(4):
        assert np.array_equal(fk(s, d), f(s, d))


@pytest.mark.parametrize("name", sorted(library(2)))
def test_library_profiles_positive_away_from_tip(name):
    p = library(2)[name]
    s = np.linspace(0.0, p.domain_end, 5001)[1:]
    assert np.all(p(s) > 0)
    assert p(0.0) == 0.0


@pytest.mark.parametrize("name", ["sinh_linear_cap", "cylinder_capped_cone", "smoothed_cone_k10", "rounded_cone"])
def test_profile_json_round_trip(name):
    p = library(2)[name]
    spec = json.loads(json.dumps(p.to_spec()))
    q = profile_from_spec(spec)
    s = np.linspace(0.0, p.domain_end, 1001)
    assert np.array_equal(p(s), q(s))
    assert q.to_spec() == spec


def test_profile_json_rejects_unknown_keys():
    with pytest.raises(ParameterError, match="unknown"):
        profile_from_spec({"kind": "euclidean", "params": {}, "domain_end": 1.0, "fiberdim": 2})
    with pytest.raises(ParameterError, match="unknown cap_linear"):
        profile_from_spec({"kind": "cap_linear", "params": {"base": {"kind": "euclidean"}, "k": 1, "kk": 2}})


def test_composite_matches_at_junction():
    spec = {
        "kind": "composite",
        "params": {
            "pieces": [
                {"end": 1.0, "profile": {"kind": "euclidean", "domain_end": 1.0}},
                {"end": 2.0, "profile": {"kind": "linear", "params": {"slope": 1.0}, "domain_end": 2.0}},
            ]
        },
        "domain_end": 2.0,
        "fiber_dim": 2,
    }
    p = profile_from_spec(spec)
    assert p(1.5) == 1.5
    bad = json.loads(json.dumps(spec))
    bad["params"]["pieces"][1]["profile"]["params"]["slope"] = 2.0
    with pytest.raises(ConstructionError, match="junction"):
        profile_from_spec(bad)


def test_spline_profile_certifies_low_orders():
    from scipy.interpolate import make_interp_spline

    s = np.linspace(-1.0, 4.0, 60)
    spl = make_interp_spline(s, np.sin(s), k=5)
    p = make_profile("spline", {"knots": spl.t.tolist(), "coefficients": spl.c.tolist(), "degree": 5}, 3.0, 2)
    x = np.linspace(0.2, 2.8, 50)
    np.testing.assert_allclose(p(x), np.sin(x), atol=1e-6)
    np.testing.assert_allclose(p(x, 3), -np.cos(x), atol=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.05, max_value=1.0), st.floats(min_value=0.0, max_value=10.0))
def test_cone_slope_is_exact(slope, s):
    p = make_profile("cone", {"slope": slope}, 10.0, 2)
    assert p(s) == slope * s
    assert p(s, 1) == slope
