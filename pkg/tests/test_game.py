import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atl.errors import ConfigError, ContractError
from atl.game import (GameOptions, bellman_update, direction_set, epsilon_sweep, solve_game,
                      validate_setup)
from atl.grid import GridSpec, ScalarField
from atl.oracles import Ellipsoid, Sphere

GRID = GridSpec.from_bounds([-1.15, -1.15], [1.15, 1.15], 1 / 32)
DISC = Sphere(2, radius=1.0)


@pytest.fixture(scope="module")
def disc_game():
    return solve_game(DISC, GRID, GameOptions(0.1))


@pytest.mark.parametrize("d,m", [(2, 1), (2, 8), (2, 32), (3, 1), (3, 32)])
def test_direction_set_unit_and_distinct(d, m):
    dirs = direction_set(d, m)
    assert dirs.shape == (m, d)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)
    # no two lines coincide, even up to sign
    gram = np.abs(dirs @ dirs.T) - np.eye(m)
    assert gram.max(initial=0.0) < 1 - 1e-9


def test_options_checked_and_round_trip():
    opts = GameOptions(0.05, directions=16, tangent_lines=2)
    assert GameOptions.from_dict(opts.to_dict()) == opts
    assert opts.step == pytest.approx(np.sqrt(2) * 0.05)
    assert opts.tolerance == pytest.approx(1e-3 * 0.05 ** 2)
    assert opts.tangent_count(2) == 1 and opts.tangent_count(3) == 2
    for bad in ({"epsilon": 0.0}, {"epsilon": 0.1, "directions": 0}, {"epsilon": 0.1, "guided_passes": 0}):
        with pytest.raises(ConfigError):
            GameOptions(**bad)


def test_setup_validation():
    with pytest.raises(ConfigError, match="two grid cells"):
        validate_setup(DISC, GRID, GameOptions(0.02))
    with pytest.raises(ConfigError, match="inradius"):
        validate_setup(DISC, GRID, GameOptions(0.3))
    with pytest.raises(ConfigError, match="boundary"):
        validate_setup(Sphere(2, radius=1.2), GRID, GameOptions(0.1))
    warns, inradius = validate_setup(DISC, GRID, GameOptions(0.1, directions=4))
    assert inradius == pytest.approx(1.0, abs=GRID.spacing)
    assert any("recommended" in w for w in warns)


def test_operator_rejects_negative_input():
    f = ScalarField(GRID, -np.ones(GRID.counts))
    with pytest.raises(ContractError):
        bellman_update(f, DISC, GameOptions(0.1))


@given(st.integers(0, 10_000))
def test_operator_is_monotone(seed):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, GRID.counts)
    g = f + rng.uniform(0, 0.5, GRID.counts)
    opts = GameOptions(0.1, directions=8)
    tf = bellman_update(ScalarField(GRID, f), DISC, opts).values
    tg = bellman_update(ScalarField(GRID, g), DISC, opts).values
    assert np.all(tf <= tg + 1e-12)


def test_operator_zero_outside_and_adds_eps2():
    opts = GameOptions(0.1)
    tz = bellman_update(ScalarField(GRID, np.zeros(GRID.counts)), DISC, opts).values
    outside = DISC.value(GRID.coordinates()) <= 0
    assert np.all(tz[outside] == 0)
    assert np.allclose(tz[~outside], 0.01)


def test_disc_value_near_arrival_time(disc_game):
    assert disc_game.converged and not disc_game.diverged
    assert disc_game.value_at((0.0, 0.0)) == pytest.approx(0.5, abs=0.03)
    assert disc_game.value_at((0.5, 0.0)) == pytest.approx(0.375, abs=0.03)
    outside = DISC.value(GRID.coordinates()) <= 0
    assert np.all(disc_game.u_eps.values[outside] == 0)


def test_domain_monotonicity(disc_game):
    small = solve_game(Sphere(2, radius=0.7), GRID, GameOptions(0.1))
    assert np.all(small.u_eps.values <= disc_game.u_eps.values + 1e-9)


def test_single_line_on_thin_domain_diverges():
    # with one fixed line and no tangent lines Carol can always push along the long axis
    grid = GridSpec.from_bounds([-1.15, -0.45], [1.15, 0.45], 1 / 64)
    strip = Ellipsoid(2, semi_axes=(1.0, 0.3))
    opts = GameOptions(0.05, directions=1, tangent_lines=0, guided_passes=1, max_iter=20_000)
    res = solve_game(strip, grid, opts)
    assert res.diverged and not res.converged
    assert any("cap" in w for w in res.warnings)


def test_epsilon_sweep_rows():
    rows, results = epsilon_sweep(DISC, GRID, [0.15, 0.1], GameOptions(0.1, directions=16), (0.0, 0.0))
    assert [r.epsilon for r in rows] == [0.15, 0.1]
    assert all(r.converged for r in rows)
    assert rows[1].value == pytest.approx(results[1].value_at((0.0, 0.0)))
