import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from discsde.checks import geometry_suite
from discsde.errors import CenterSingularity, DistanceExceedsReach, NotOnSurface, ValidationError
from discsde.geometry import Hyperplane, Points1D, Sphere, surface_from_config, vnorm

circle = Sphere([0.0, 0.0], 2.0)
plane = Hyperplane([0.0, 0.0], [0.0, 1.0])
pair = Points1D([0.0, 1.0])


# --- oracles -------------------------------------------------------------

def test_distance_examples():
    assert circle.distance([3.0, 0.0]) == pytest.approx(1.0, abs=1e-15)
    assert circle.distance([0.0, 2.0]) == 0.0
    assert pair.distance([0.4]) == pytest.approx(0.4, abs=1e-15)


def test_project_examples():
    np.testing.assert_allclose(circle.project([3.0, 0.0]), [2.0, 0.0], atol=1e-15)
    np.testing.assert_array_equal(circle.project([0.0, 2.0]), [0.0, 2.0])
    np.testing.assert_array_equal(plane.project([5.0, 3.0]), [5.0, 0.0])


def test_normal_examples():
    np.testing.assert_array_equal(circle.normal_at([0.0, 2.0]), [0.0, 1.0])
    np.testing.assert_array_equal(plane.normal_at([7.0, 0.0]), [0.0, 1.0])
    np.testing.assert_array_equal(pair.normal_at([0.0]), [1.0])


def test_signed_offset_examples():
    assert circle.signed_offset([0.0, 2.3]) == pytest.approx(0.3, abs=1e-15)
    assert circle.signed_offset([0.0, 1.5]) == pytest.approx(-0.5, abs=1e-15)
    for s, th in ((circle, [2.0, 0.0]), (plane, [1.0, 0.0]), (pair, [1.0])):
        assert s.signed_offset(th) == 0.0


def test_projection_jacobian_examples():
    np.testing.assert_array_equal(plane.projection_jacobian([3.0, -2.0]), [[1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(circle.projection_jacobian([0.0, 2.0]), [[1.0, 0.0], [0.0, 0.0]],
                               atol=1e-15)
    np.testing.assert_allclose(circle.projection_jacobian([0.0, 4.0]), [[0.5, 0.0], [0.0, 0.0]],
                               atol=1e-15)


def test_reach_values():
    assert circle.reach == 2.0
    assert plane.reach == math.inf
    assert Points1D([0.0, 1.0, 3.0]).reach == 0.5
    assert Points1D([2.0]).reach == math.inf


def test_errors():
    with pytest.raises(DistanceExceedsReach):
        circle.project([4.5, 0.0])
    with pytest.raises(CenterSingularity):
        circle.project([0.0, 0.0])
    with pytest.raises(NotOnSurface):
        circle.normal_at([0.0, 2.1])
    with pytest.raises(DistanceExceedsReach):
        pair.signed_offset([0.5])
    with pytest.raises(ValidationError):
        Sphere([0.0, 0.0], -1.0)


def test_surface_from_config():
    s = surface_from_config("sphere", {"center": [1.0, 2.0], "radius": [0.5]})
    assert isinstance(s, Sphere) and s.radius == 0.5
    h = surface_from_config("Hyperplane", {"base": [0.0, 0.0], "normal": [3.0, 4.0]})
    np.testing.assert_allclose(h.normal_at([0.0, 0.0]), [0.6, 0.8])
    assert surface_from_config("points1d", {"points": [1.0, -1.0]}).reach == 1.0
    with pytest.raises(ValidationError):
        surface_from_config("torus", {})
    with pytest.raises(ValidationError):
        surface_from_config("sphere", {"center": [0.0]})


def test_fd_jacobian_fallback_matches_analytic():
    # the base-class finite-difference Jacobian against the sphere's closed form
    s = Sphere([0.5, -0.25, 1.0], 1.5)
    x = np.array([[1.2, 0.3, 1.9], [0.1, -1.0, 0.2]])
    fd = super(Sphere, s).projection_jacobian(x)
    np.testing.assert_allclose(fd, s.projection_jacobian(x), atol=1e-8)


# --- properties ----------------------------------------------------------

coords = st.floats(-5.0, 5.0)
angles = st.floats(0.0, 2.0 * math.pi)


@st.composite
def spheres(draw):
    c = [draw(coords), draw(coords)]
    return Sphere(c, draw(st.floats(0.1, 4.0)))


@given(spheres(), angles, st.floats(-0.999, 0.999).filter(lambda f: abs(f) > 1e-9 or f == 0))
def test_sphere_projection_roundtrip(s, t, frac):
    theta = s.center + s.radius * np.array([math.cos(t), math.sin(t)])
    lam = frac * s.reach
    x = theta + lam * s.normal_at(theta)
    assert vnorm(s.project(x) - theta) <= 1e-10 * max(1.0, s.radius)
    if lam != 0:
        assert np.sign(s.signed_offset(x)) == np.sign(lam)


@given(spheres(), angles, st.floats(-0.99, 0.99))
def test_projection_idempotent_and_distance(s, t, frac):
    x = s.center + (s.radius * (1 + frac)) * np.array([math.cos(t), math.sin(t)])
    pr = s.project(x)
    assert vnorm(s.project(pr) - pr) <= 1e-12 * max(1.0, vnorm(pr))
    assert abs(vnorm(pr - x) - s.distance(x)) <= 1e-12 * max(1.0, vnorm(x))
    assert abs(vnorm(s.normal_at(pr)) - 1.0) <= 1e-12


@given(st.lists(coords, min_size=2, max_size=2), st.lists(coords, min_size=2, max_size=2),
       st.lists(coords, min_size=2, max_size=2).filter(lambda v: vnorm(v) > 1e-3))
def test_distance_is_one_lipschitz(x, y, nrm):
    for s in (circle, Hyperplane([0.3, -0.2], nrm)):
        assert abs(s.distance(x) - s.distance(y)) <= vnorm(np.subtract(x, y)) + 1e-12


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6, unique=True), st.floats(-12, 12))
def test_points1d_distance_is_min_gap(points, x):
    s = Points1D(points)
    assert s.distance([x]) == pytest.approx(min(abs(x - p) for p in points), abs=1e-15)


@given(st.lists(coords, min_size=3, max_size=3).filter(lambda v: vnorm(v) > 1e-3),
       st.lists(coords, min_size=3, max_size=3))
def test_hyperplane_jacobian_is_tangent_projector(nrm, x):
    h = Hyperplane([0.0, 1.0, -1.0], nrm)
    n = h.normal_at(h.project(x))
    np.testing.assert_allclose(h.projection_jacobian(x), np.eye(3) - np.outer(n, n), atol=1e-15)


@pytest.mark.parametrize("surface", [
    circle, Sphere([1.0, -1.0, 0.5], 0.7), plane, Hyperplane([0, 0, 0], [1, 2, 2]),
    Points1D([0.0, 1.0, 3.0]), Points1D([-1.0]),
])
def test_geometry_suite_passes(surface):
    rows = geometry_suite(surface, n=2000, seed=3)
    assert all(r.passed for r in rows), [r for r in rows if not r.passed]
