import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atl.errors import ConfigError
from atl.oracles import (AnalyticArrival, Dumbbell, Ellipsoid, Sphere, Torus, check_initial_mean_convexity,
                         cylinder_arrival, project_to_surface, sphere_arrival, surface_from_dict)


def random_rotation(seed, d):
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def test_sphere_arrival_values():
    assert sphere_arrival([0.0, 0.0, 0.0], 1.0) == pytest.approx(0.25)
    assert sphere_arrival([0.0, 0.0], 1.0) == pytest.approx(0.5)
    assert sphere_arrival([1.0, 0.0], 1.0) == pytest.approx(0.0)
    assert sphere_arrival([2.0, 1.0], 1.0, center=[2.0, 1.0]) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        sphere_arrival([0.0, 0.0, 0.0], 1.0, n=1)


def test_cylinder_arrival_values():
    x = np.array([0.3, -0.4, 5.0])
    assert cylinder_arrival(x, 1) == pytest.approx(-(0.09 + 0.16) / 2)
    assert cylinder_arrival(x, 2) == pytest.approx(-(0.09 + 0.16 + 25.0) / 4)
    assert cylinder_arrival([0.0, 0.0, 7.0], 1) == 0.0
    with pytest.raises(ConfigError):
        cylinder_arrival(x, 3)


@given(st.integers(0, 10_000), st.integers(1, 2))
def test_cylinder_frame_invariance(seed, k):
    frame = random_rotation(seed, 3)
    x = np.random.default_rng(seed + 1).normal(size=(5, 3))
    direct = cylinder_arrival(x, k, frame=frame)
    assert np.allclose(direct, cylinder_arrival(x @ frame, k))


def test_analytic_arrival_round_trip():
    oracle = AnalyticArrival("cylinder", 3, k=1, center=(0.1, 0.2, 0.3), frame=random_rotation(3, 3))
    back = AnalyticArrival.from_dict(oracle.to_dict())
    x = np.random.default_rng(0).normal(size=(4, 3))
    assert np.allclose(back(x), oracle(x))
    with pytest.raises(ConfigError):
        AnalyticArrival("cone", 3)
    with pytest.raises(ConfigError):
        AnalyticArrival("cylinder", 3, k=3)
    with pytest.raises(ConfigError):
        AnalyticArrival("sphere", 2, frame=np.ones((2, 2)))


@pytest.mark.parametrize("d", [2, 3])
def test_sphere_surface_distance_and_curvature(d):
    s = Sphere(d, radius=0.7, center=(0.1,) * d)
    x = np.array([[0.1] * d, [0.1 + 0.7] + [0.1] * (d - 1), [1.5] * d])
    sd = s.signed_distance(x)
    assert sd[0] == pytest.approx(0.7)
    assert sd[1] == pytest.approx(0.0, abs=1e-12)
    assert sd[2] < 0
    on = np.array([[0.1 + 0.7 * np.cos(a), 0.1 + 0.7 * np.sin(a)] + [0.1] * (d - 2) for a in (0.3, 2.0)])
    assert np.allclose(s.mean_curvature(on), (d - 1) / 0.7, rtol=1e-4)


def test_ellipse_curvature_matches_formula():
    e = Ellipsoid(2, semi_axes=(1.0, 0.5))
    # curvature at the ends of the major axis is a / b^2
    assert e.mean_curvature(np.array([[1.0, 0.0]]))[0] == pytest.approx(4.0, rel=1e-3)
    assert e.mean_curvature(np.array([[0.0, 0.5]]))[0] == pytest.approx(0.5 / 1.0, rel=1e-3)


def test_projection_lands_on_zero_set():
    e = Ellipsoid(3, semi_axes=(1.0, 0.6, 0.4), rotation=random_rotation(1, 3))
    pts = project_to_surface(e, np.random.default_rng(0).uniform(-1, 1, size=(50, 3)))
    assert np.max(np.abs(e.value(pts))) < 1e-9


def test_mean_convexity_screen():
    rep = check_initial_mean_convexity(Ellipsoid(3, semi_axes=(1.0, 0.6, 0.4)), samples=300, seed=1)
    assert rep.mean_convex and rep.min_h > 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fat = Torus(3, major=1.0, minor=0.6)
    assert fat.mean_convex_warning
    assert not check_initial_mean_convexity(fat, samples=300).mean_convex


def test_torus_warns_when_not_mean_convex():
    with pytest.warns(UserWarning):
        Torus(3, major=1.0, minor=0.55)
    with pytest.raises(ConfigError):
        Torus(2)


def test_default_dumbbell_is_mean_convex():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d = Dumbbell(3)
    assert not d.mean_convex_warning
    lo, hi = d.bounding_box()
    assert lo[0] < -0.9 and hi[0] > 0.9
    assert d.value(np.zeros(3)) > 0


def test_placement_round_trip():
    rot = random_rotation(5, 3)
    d = Ellipsoid(3, semi_axes=(1.0, 0.5, 0.3)).moved(center=(0.2, 0.0, -0.1), rotation=rot)
    again = surface_from_dict(d.to_dict())
    x = np.random.default_rng(2).normal(size=(6, 3))
    assert np.allclose(again.value(x), d.value(x))
    assert np.allclose(d.to_world(d.to_local(x)), x)


def test_surface_from_dict_errors():
    with pytest.raises(ConfigError):
        surface_from_dict({"name": "cube", "dimension": 3})
    with pytest.raises(ConfigError):
        surface_from_dict({"name": "sphere", "dimension": 3, "size": 1.0})
    with pytest.raises(ConfigError):
        Sphere(3, radius=-1.0)
    with pytest.raises(ConfigError):
        Dumbbell(3, neck_radius=0.3)


def test_dumbbell_distance_at_ball_center():
    d = Dumbbell(3)
    center = np.array([[-0.5 * d.separation, 0.0, 0.0]])
    assert d.signed_distance(center)[0] == pytest.approx(d.ball_radius, abs=d.smoothing * np.log(3))


@pytest.mark.parametrize("neck,smoothing", [(0.085, 0.01), (0.02, 0.02)])
def test_dumbbell_failing_parameter_sets(neck, smoothing):
    # a blend much narrower than the neck leaves a concave crease where the capsule meets a ball
    with pytest.warns(UserWarning, match="mean-convexity"):
        d = Dumbbell(3, neck_radius=neck, smoothing=smoothing)
    assert d.mean_convex_warning
