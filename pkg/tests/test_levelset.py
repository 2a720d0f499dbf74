import numpy as np
import pytest

from atl.errors import ConfigError, DegenerateFieldError, NumericalInstabilityError
from atl.grid import GridSpec, ScalarField, gradient_field, one_laplacian_field
from atl.levelset import SolverOptions, evolution_speed, evolve_step, redistance, solve_arrival
from atl.oracles import Ellipsoid, Sphere, sphere_arrival

GRID = GridSpec.from_bounds([-1.15, -1.15], [1.15, 1.15], 1 / 32)


@pytest.fixture(scope="module")
def circle():
    return solve_arrival(Sphere(2, radius=1.0), GRID)


def bumpy(grid):
    x = grid.coordinates()
    return ScalarField(grid, 0.5 - np.sum(x ** 2, axis=-1) + 0.1 * np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1]))


def test_speed_without_blend_is_one_laplacian():
    v = bumpy(GRID)
    a = evolution_speed(v, critical_blend=0.0)
    b = one_laplacian_field(v)
    inner = np.isfinite(b)
    np.testing.assert_allclose(a[inner], b[inner], atol=1e-9)


@pytest.mark.parametrize("blend", [0.0, 0.5])
def test_kernel_matches_numpy_reference(blend):
    v = bumpy(GRID)
    dt = 0.2 * GRID.spacing ** 2
    stepped = evolve_step(v, dt, critical_blend=blend)
    ref = v.values + dt * evolution_speed(v, critical_blend=blend)
    inner = np.isfinite(ref)
    np.testing.assert_allclose(stepped.values[inner], ref[inner], atol=1e-10)
    np.testing.assert_array_equal(stepped.values[~inner], v.values[~inner])


def test_step_size_checked():
    with pytest.raises(ConfigError):
        evolve_step(bumpy(GRID), 0.3 * GRID.spacing ** 2)
    with pytest.raises(ConfigError):
        SolverOptions(cfl=0.3)


def test_non_finite_update_raises():
    vals = bumpy(GRID).values.copy()
    vals[20, 20] = np.nan
    with pytest.raises(NumericalInstabilityError):
        evolve_step(ScalarField(GRID, vals), 0.1 * GRID.spacing ** 2)


def test_redistance_keeps_zero_set_and_unit_slope():
    x = GRID.coordinates()
    r = np.linalg.norm(x, axis=-1)
    v = ScalarField(GRID, 3.0 * (0.8 - r) * (1 + r))
    d = redistance(v)
    assert np.array_equal(d.values > 0, v.values > 0)
    band = np.abs(r - 0.8) < 0.3
    np.testing.assert_allclose(d.values[band], (0.8 - r)[band], atol=0.6 * GRID.spacing)
    with pytest.raises(DegenerateFieldError):
        redistance(ScalarField(GRID, np.ones(GRID.counts)))


def test_circle_matches_oracle(circle):
    u = circle.u.values
    assert circle.arrived.count() == circle.initial_interior.count()
    exact = sphere_arrival(GRID.coordinates(), 1.0)
    ok = np.isfinite(u)
    assert np.max(np.abs(u[ok] - exact[ok])) < 2e-3
    assert circle.extinction_time == pytest.approx(0.5, abs=2e-3)
    assert not circle.warnings


def test_circle_symmetry(circle):
    u = circle.u.values
    ok = np.isfinite(u)
    for image in (u[::-1, :], u[:, ::-1], u.T):
        assert np.array_equal(np.isfinite(image), ok)
        np.testing.assert_allclose(image[ok], u[ok], atol=1e-12)


def test_nested_domains_ordered(circle):
    small = solve_arrival(Sphere(2, radius=0.6), GRID)
    both = np.isfinite(small.u.values)
    assert np.all(small.u.values[both] <= circle.u.values[both] + 1e-12)


def test_arrival_grows_inward(circle):
    grad = gradient_field(circle.u)
    x = GRID.coordinates()
    r = np.linalg.norm(x, axis=-1)
    ring = np.isfinite(grad).all(axis=-1) & (r > 0.3)
    radial = np.einsum("...i,...i->...", grad, x)[ring] / r[ring]
    assert np.all(radial < 0)


def test_snapshots_recorded():
    res = solve_arrival(Sphere(2, radius=0.6), GRID, SolverOptions(record_snapshots=[0.05]))
    snap = res.snapshots[0.05]
    # interior of the snapshot is the disc of radius sqrt(0.36 - 2 * 0.05)
    area = np.sum(snap.values > 0) * GRID.spacing ** 2
    assert area == pytest.approx(np.pi * (0.36 - 0.1), rel=0.05)


def test_ellipse_extinction_is_rotation_invariant():
    e = Ellipsoid(2, semi_axes=(0.9, 0.5))
    rot = np.array([[np.cos(0.6), -np.sin(0.6)], [np.sin(0.6), np.cos(0.6)]])
    a = solve_arrival(e, GRID).extinction_time
    b = solve_arrival(e.moved(rotation=rot), GRID).extinction_time
    assert a == pytest.approx(b, rel=0.02)


def test_setup_errors():
    with pytest.raises(ConfigError):
        solve_arrival(Sphere(2, radius=1.2), GRID)
    with pytest.raises(ConfigError):
        solve_arrival(Sphere(3, radius=0.5), GRID)


def test_thin_padding_warns():
    res = solve_arrival(Sphere(2, radius=1.1), GRID)
    assert any("padding" in w for w in res.warnings)
