import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warpflow.errors import DomainError, ParameterError
from warpflow.geometry import (
    annulus_volume,
    arclength_and_distance,
    ball_volume_origin,
    cap_volume_lower_bound,
    effective_delta,
    ratio_scan,
    sphere_cap_volume,
    sphere_cap_volume_quad,
    sphere_volume,
    volume_ratio_lower_bound,
)
from warpflow.profiles import cap_cylinder, library, make_profile


@pytest.mark.parametrize("m,expected", [(1, 2 * math.pi), (2, 4 * math.pi), (3, 2 * math.pi**2)])
def test_sphere_volume(m, expected):
    assert sphere_volume(m) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("m", [0, -1, 1.5])
def test_sphere_volume_rejects_bad_dimension(m):
    with pytest.raises(ParameterError):
        sphere_volume(m)


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_euclidean_ball_volume(n, r):
    p = make_profile("euclidean", {}, 10.0, n)
    assert ball_volume_origin(p, r) == pytest.approx(sphere_volume(n) * r ** (n + 1) / (n + 1), rel=1e-8)


def test_cone_and_sphere_ball_volume():
    cone = make_profile("cone", {"slope": 0.3}, 10.0, 2)
    assert ball_volume_origin(cone, 1.0) == pytest.approx(4 * math.pi / 3 * 0.09, rel=1e-8)
    assert ball_volume_origin(library(2)["hemisphere"], math.pi / 2) == pytest.approx(math.pi**2, rel=1e-8)


def test_ball_beyond_domain_is_an_error():
    with pytest.raises(DomainError):
        ball_volume_origin(library(2)["hemisphere"], 2.0)


def test_sphere_cap_volume_examples():
    assert sphere_cap_volume(math.pi, 2) == pytest.approx(4 * math.pi, rel=1e-14)
    assert sphere_cap_volume(math.pi / 4, 2) == pytest.approx(2 * math.pi * (1 - math.sqrt(2) / 2), rel=1e-14)
    assert sphere_cap_volume(math.pi / 4, 2) == pytest.approx(1.84030, abs=1e-5)
    assert sphere_cap_volume(0.0, 2) == 0.0


@pytest.mark.parametrize("n", [2, 3, 4, 7])
def test_sphere_cap_volume_monotone_and_saturating(n):
    rho = np.linspace(0.0, 5.0, 2001)
    v = sphere_cap_volume(rho, n)
    assert np.all(np.diff(v) >= 0)
    np.testing.assert_allclose(v[rho >= math.pi], sphere_volume(n), rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=4.0), st.integers(min_value=2, max_value=8))
def test_sphere_cap_closed_form_matches_quadrature(rho, n):
    assert sphere_cap_volume(rho, n) == pytest.approx(sphere_cap_volume_quad(rho, n), rel=1e-10, abs=1e-14)


def test_cylinder_annulus_volume():
    cyl = make_profile("cylinder", {"radius": 1.0}, 10.0, 2)
    expected = 0.5 * 2 * math.pi * (1 - math.cos(0.25))
    assert annulus_volume(cyl, 5.0, 0.25) == pytest.approx(expected, rel=1e-8)
    assert expected == pytest.approx(0.0976645, abs=1e-7)


def test_thin_cone_annulus_sweeps_full_spheres():
    p = make_profile("cone", {"slope": 0.01}, 10.0, 2)
    s, r = 2.0, 0.5
    shell = sphere_volume(2) * (0.01**2) * ((s + r) ** 3 - (s - r) ** 3) / 3
    assert annulus_volume(p, s, r) == pytest.approx(shell, rel=1e-8)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_small_cap_integrand_is_radius_independent(n):
    # f^n times the small-cap bound at r = 1/4 cancels to a constant
    B = volume_ratio_lower_bound(1.0, n).B_n
    vals = [c**n * cap_volume_lower_bound(0.25 / c, n) for c in (1.0, 2.0, 5.0)]
    np.testing.assert_allclose(vals, B, rtol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_exact_annulus_per_length_depends_weakly_on_radius(n):
    # the exact cap volume exceeds the bound, so independence holds only asymptotically
    per_len = []
    for c in (1.0, 2.0, 5.0):
        cyl = make_profile("cylinder", {"radius": c}, 10.0, n)
        per_len.append(annulus_volume(cyl, 5.0, 0.25) / 0.5)
    limit = sphere_volume(n - 1) / n * 0.25**n
    assert per_len[-1] == pytest.approx(limit, rel=1e-2)
    assert abs(per_len[-1] / limit - 1) < abs(per_len[0] / limit - 1)


def test_volume_report_constants_n2():
    r = volume_ratio_lower_bound(0.5, 2)
    assert abs(r.v1 - math.pi / 192) <= 1e-12
    assert r.A_n == pytest.approx(1.84030, abs=1e-5)
    assert r.B_n == pytest.approx(2 * math.pi / (2 * math.sqrt(2) * 16), rel=1e-14)
    assert abs(r.v2 - 0.014377) <= 1e-5
    assert r.v == r.v2
    assert json.loads(r.to_json())["n"] == 2


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1.0), st.integers(min_value=2, max_value=8))
def test_volume_report_invariants(delta, n):
    r = volume_ratio_lower_bound(delta, n)
    assert r.v1 == pytest.approx(0.25 ** (n + 1) * delta**n * sphere_volume(n) / (n + 1))
    assert r.v2 == pytest.approx(0.5 * min(r.A_n * (delta / 4) ** n, r.B_n))
    assert r.v == min(r.v1, r.v2) > 0


def test_volume_report_rejects_bad_input():
    with pytest.raises(ParameterError):
        volume_ratio_lower_bound(0.0, 2)
    with pytest.raises(ParameterError):
        volume_ratio_lower_bound(0.5, 1)


def test_ratio_scan_euclidean():
    scan = ratio_scan(library(2)["euclidean"], radii=(1.0,), centers=[0.0])
    assert scan.min_ratio == pytest.approx(4 * math.pi / 3, rel=1e-8)
    assert scan.min_ratio > volume_ratio_lower_bound(1.0, 2).v


@pytest.mark.parametrize("n", [2, 3])
def test_ratio_scan_respects_lower_bound_on_capped_cone(n):
    p = cap_cylinder(make_profile("cone", {"slope": 0.5}, 8.0, n), 5.0, 1.0)
    scan = ratio_scan(p, radii=(0.25, 0.5, 1.0), centers=np.linspace(0.0, 7.0, 15))
    assert scan.hypothesis_met
    assert scan.delta == pytest.approx(0.5)
    assert scan.min_ratio >= volume_ratio_lower_bound(scan.delta, n).v


def test_ratio_scan_degrades_like_eps_power():
    mins = {}
    for eps in (0.25, 0.125):
        p = cap_cylinder(make_profile("euclidean", {}, 6.0, 2), 2.0, eps)
        scan = ratio_scan(p, radii=(1.0,), centers=np.linspace(3.5, 5.0, 4))
        mins[eps] = scan.min_ratio
        assert scan.min_ratio >= volume_ratio_lower_bound(scan.delta, 2).v
    assert mins[0.25] / mins[0.125] == pytest.approx(4.0, rel=0.05)


def test_effective_delta_reports_binding_point():
    delta, where = effective_delta(cap_cylinder(make_profile("euclidean", {}, 6.0, 2), 2.0, 0.5))
    assert delta == pytest.approx(0.25)
    assert where > 2.0


class Grid:
    def __init__(self, sigma, X):
        self.sigma = np.asarray(sigma, dtype=float)
        self.X = X
        self.N = self.sigma.size
        self.x = (np.arange(self.N) + 0.5) * X / self.N


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_distance_constant_stretch(c):
    assert arclength_and_distance(Grid(np.full(100, c), 1.0), 0.0, 1.0) == pytest.approx(c, rel=1e-14)


def test_distance_linear_stretch_is_exact():
    for N in (64, 128):
        g = Grid(1 + (np.arange(N) + 0.5) / N, 1.0)
        assert arclength_and_distance(g, 0.0, 1.0) == pytest.approx(1.5, rel=1e-13)
        assert arclength_and_distance(g, 1.0, 0.0) == pytest.approx(1.5, rel=1e-13)


def test_distance_second_order_for_curved_stretch():
    errs = []
    for N in (64, 128):
        x = (np.arange(N) + 0.5) / N
        errs.append(abs(arclength_and_distance(Grid(np.exp(x), 1.0), 0.0, 1.0) - (math.e - 1)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_distance_outside_grid_is_an_error():
    with pytest.raises(DomainError):
        arclength_and_distance(Grid(np.ones(64), 1.0), 0.0, 1.5)
