import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warpflow.curvature import (
    CSV_COLUMNS,
    curvature_at,
    frame_weights,
    growth_bound_check,
    growth_envelope,
    lcf_reconstruction_check,
    pic1_check,
    pic1_frame_oracle,
    profile_curvature,
    schouten_pair,
    tip_curvature,
    write_curvature_csv,
)
from warpflow.errors import DomainError, UsageError
from warpflow.profiles import library, make_profile


def test_euclidean_point():
    c = curvature_at(1.0, 1.0, 0.0, 2)
    assert (c.K, c.L, c.scal) == (0.0, 0.0, 0.0)


def test_round_sphere_point():
    s = math.pi / 4
    c = curvature_at(math.sin(s), math.cos(s), -math.sin(s), 2)
    assert c.K == pytest.approx(1.0, abs=1e-15)
    assert c.L == pytest.approx(1.0, abs=1e-15)
    assert c.scal == pytest.approx(6.0, abs=1e-14)


def test_cylinder_point():
    c = curvature_at(1.0, 0.0, 0.0, 2)
    assert (c.K, c.L, c.scal, c.rm_norm) == (0.0, 1.0, 2.0, 1.0)


def test_ricci_components():
    c = curvature_at(0.7, 0.4, -0.3, 3)
    assert c.ric_radial == pytest.approx(3 * c.K)
    assert c.ric_sph == pytest.approx(c.K + 2 * c.L)
    assert c.rm_norm == max(abs(c.K), abs(c.L))


def test_nonpositive_f_is_a_domain_error():
    with pytest.raises(DomainError):
        curvature_at(0.0, 1.0, 0.0, 2)
    with pytest.raises(DomainError):
        curvature_at(np.array([1.0, -1.0]), np.ones(2), np.zeros(2), 2)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(min_value=1e-3, max_value=1e3),
    st.floats(min_value=-10.0, max_value=10.0),
    st.floats(min_value=-1e3, max_value=1e3),
    st.integers(min_value=2, max_value=12),
)
def test_scalar_curvature_identity(f, fp, fpp, n):
    c = curvature_at(f, fp, fpp, n)
    assert abs(c.scal - n * (2 * c.K + (n - 1) * c.L)) <= 1e-12 * (1 + abs(c.scal))
    assert abs(c.scal - (c.ric_radial + n * c.ric_sph)) <= 1e-12 * (1 + abs(c.scal)) * max(1.0, abs(c.K), abs(c.L))


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=1e-2, max_value=1e2),
    st.floats(min_value=-5.0, max_value=5.0),
    st.floats(min_value=-1e2, max_value=1e2),
)
def test_schouten_pair_scalars(f, fp, fpp):
    a = schouten_pair(f, fp, fpp)
    assert a.a_spherical == pytest.approx((1 - fp * fp) / (2 * f * f) + 1, rel=1e-12, abs=1e-12)
    assert a.a_radial + a.a_spherical == pytest.approx(2 - fpp / f, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize(
    "name,K,L",
    [("euclidean", 0.0, 0.0), ("hemisphere", 1.0, 1.0)],
)
def test_tip_limits_for_smooth_tips(name, K, L):
    tip = tip_curvature(library(2)[name])
    assert tip.K == pytest.approx(K, abs=1e-14)
    assert tip.L == pytest.approx(L, abs=1e-14)
    assert not tip.L_divergent


def test_tip_limit_for_cone_is_flagged():
    tip = tip_curvature(library(2)["cone_half"])
    assert tip.L_divergent
    assert tip.L_coefficient == pytest.approx(3.0)
    s = 1e-4
    c = profile_curvature(library(2)["cone_half"], s)
    assert c.L * s * s == pytest.approx(3.0)


def test_tip_limit_matches_small_s_values():
    p = library(3)["hemisphere"]
    c = profile_curvature(p, 1e-4)
    tip = tip_curvature(p)
    assert c.K == pytest.approx(tip.K, abs=1e-7)
    assert c.L == pytest.approx(tip.L, abs=1e-7)


def test_pic1_euclidean_margins():
    r = pic1_check(library(2)["euclidean"])
    assert r.holds
    assert r.worst_margin_1 == pytest.approx(1.0)
    assert r.worst_margin_2 == pytest.approx(2.0)


def test_pic1_round_sphere_margins():
    r = pic1_check(library(2)["hemisphere"])
    assert r.holds
    assert r.worst_margin_1 == pytest.approx(1.5)
    assert r.worst_margin_2 == pytest.approx(3.0)


def test_pic1_rapid_growth_fails_with_location():
    p = library(2)["rapid_growth"]
    r = pic1_check(p)
    assert not r.holds
    assert r.first_failure is not None and r.first_failure < 5.0
    s = 5.0
    f, fp = p(s), p(s, 1)
    assert (1 - fp * fp) / (2 * f * f) + 1 < 0


@pytest.mark.parametrize(
    "a_r,a_t,expected",
    [(1.0, 1.0, 4.0), (-1.0, 1.0, 0.0), (0.0, -0.5, -2.0)],
)
def test_frame_oracle_examples(a_r, a_t, expected):
    assert pic1_frame_oracle(a_r, a_t, resolution=101) == pytest.approx(expected, abs=1e-12)


def test_frame_oracle_matches_two_scalar_conditions():
    rng = np.random.default_rng(7)
    pairs = rng.uniform(-5.0, 5.0, size=(1000, 2))
    brute = pic1_frame_oracle(pairs[:, 0], pairs[:, 1], weights=frame_weights(61))
    closed = np.minimum(4 * pairs[:, 1], 2 * (pairs[:, 0] + pairs[:, 1]))
    assert np.max(np.abs(brute - closed)) <= 1e-3


def test_frame_oracle_in_dimension_three():
    # an orthonormal triple is a full basis, so the all-spherical frame is unavailable
    rng = np.random.default_rng(8)
    pairs = rng.uniform(-5.0, 5.0, size=(1000, 2))
    brute = pic1_frame_oracle(pairs[:, 0], pairs[:, 1], weights=frame_weights(201, 3))
    closed = np.minimum(3 * pairs[:, 1] + pairs[:, 0], 2 * (pairs[:, 0] + pairs[:, 1]))
    assert np.max(np.abs(brute - closed) / (1 + np.abs(closed))) <= 2e-2


ANALYTIC = ["euclidean", "cone_half", "hemisphere", "rounded_cone", "sinh_saturating", "rapid_growth", "perturbed_linear"]


@pytest.mark.parametrize("name", ANALYTIC)
@pytest.mark.parametrize("n", [2, 3, 5])
def test_lcf_reconstruction(name, n):
    p = library(n)[name]
    s = np.linspace(1e-3, p.domain_end, 2001)
    c = profile_curvature(p, s)
    assert lcf_reconstruction_check(c, p(s), p(s, 1), n) <= 1e-10


def test_lcf_examples():
    s = 0.8
    c = curvature_at(math.sin(s), math.cos(s), -math.sin(s), 3)
    assert lcf_reconstruction_check(c, math.sin(s), math.cos(s), 3) <= 1e-12
    cyl = curvature_at(2.0, 0.0, 0.0, 2)
    assert (cyl.K, cyl.L) == (0.0, 0.25)
    assert lcf_reconstruction_check(cyl, 2.0, 0.0, 2) == 0.0


def test_growth_bound_euclidean():
    r = growth_bound_check(library(2)["euclidean"])
    assert r.holds and r.worst_margin_f >= 0 and r.worst_margin_fp >= 0


def test_growth_bound_saturating_profile():
    p = library(2)["sinh_saturating"]
    r = growth_bound_check(p)
    assert r.holds
    assert r.worst_margin_f >= 0 and r.worst_margin_fp >= 0
    # f' = sqrt(1 + 2 f^2) makes the first PIC1 margin vanish identically
    s = np.linspace(0.1, p.domain_end, 1001)
    f, fp = p(s), p(s, 1)
    np.testing.assert_allclose(fp, np.sqrt(1 + 2 * f * f), rtol=1e-12)
    assert abs(pic1_check(p).worst_margin_1) <= 1e-7


def test_growth_bound_refused_without_pic1():
    steep = make_profile("linear", {"slope": 2.0}, 1.0, 2)
    with pytest.raises(UsageError, match="PIC1"):
        growth_bound_check(steep)


def test_steep_line_violates_envelope_near_tip():
    # contrapositive: f = 2s breaks the envelope exactly where PIC1 fails
    s = np.linspace(1e-3, 0.5, 100)
    bf, _ = growth_envelope(s)
    fails = 2 * s > bf
    pic_fails = (1 - 4) / (2 * (2 * s) ** 2) + 1 < 0
    assert fails.any()
    assert np.all(pic_fails[fails])


def test_curvature_csv_round_trip(tmp_path):
    p = library(2)["euclidean"]
    s = np.linspace(0.5, 2.0, 4)
    path = tmp_path / "c.csv"
    write_curvature_csv(path, profile_curvature(p, s))
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(float(v) == 0.0 for row in rows[1:] for v in row[1:])
