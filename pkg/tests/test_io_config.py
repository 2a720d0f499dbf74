import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atl import io
from atl.config import RunConfig
from atl.errors import ConfigError
from atl.grid import GridSpec, ScalarField


def sample_field(d):
    grid = GridSpec(tuple([-0.5] * d), 0.25, tuple(range(5, 5 + d)))
    vals = np.random.default_rng(d).normal(size=grid.counts)
    vals.flat[3] = np.nan
    return ScalarField(grid, vals, "u")


@pytest.mark.parametrize("d", [2, 3])
def test_csv_round_trip_and_layout(tmp_path, d):
    f = sample_field(d)
    path = io.write_csv(f, tmp_path / "u.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ("i,j,x,y,value" if d == 2 else "i,j,k,x,y,z,value")
    # row-major: the last index varies fastest
    assert lines[1].startswith("0," * d) and lines[2].startswith("0," * (d - 1) + "1,")
    assert "nan" in lines[4]
    back = io.read_csv(path)
    assert back.grid == f.grid
    np.testing.assert_array_equal(back.values, f.values)


@pytest.mark.parametrize("d", [2, 3])
def test_vtk_round_trip(tmp_path, d):
    f = sample_field(d)
    path = io.write_vtk(f, tmp_path / "u.vtk")
    text = path.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0" and text[3] == "DATASET STRUCTURED_POINTS"
    dims = [int(v) for v in text[4].split()[1:]]
    assert dims == list(f.grid.counts) + [1] * (3 - d)
    # VTK orders points with x fastest
    assert float(text[10]) == f.values.flat[0]
    assert float(text[11]) == f.values[(1,) + (0,) * (d - 1)]
    back = io.read_field(path)
    np.testing.assert_array_equal(back.values, f.values)
    assert back.grid == f.grid


def test_write_field_keeps_dotted_stems(tmp_path):
    paths = io.write_field(sample_field(2), tmp_path / "u_eps_0.05")
    assert sorted(p.name for p in paths) == ["u_eps_0.05.csv", "u_eps_0.05.vtk"]


def test_bad_field_files(tmp_path):
    (tmp_path / "a.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ConfigError):
        io.read_field(tmp_path / "a.csv")
    with pytest.raises(ConfigError):
        io.read_field(tmp_path / "a.txt")
    (tmp_path / "b.json").write_text("{not json")
    with pytest.raises(ConfigError):
        io.read_json(tmp_path / "b.json")


def test_json_is_strict_and_sorted(tmp_path):
    path = io.write_json({"b": np.float64(np.nan), "a": np.arange(2), "c": np.bool_(True)}, tmp_path / "x.json")
    text = path.read_text()
    assert json.loads(text) == {"a": [0, 1], "b": None, "c": True}
    assert text.index('"a"') < text.index('"b"')


def test_table(tmp_path):
    path = io.write_table([{"x": 1.5, "v": [1, 2]}, {"x": float("nan"), "w": "s"}], tmp_path / "t.csv")
    assert path.read_text().splitlines() == ["x,v,w", "1.5,1 2,", "nan,,s"]


FULL = {
    "seed": 7,
    "surface": {"name": "dumbbell", "dimension": 3},
    "oracle": {"kind": "cylinder", "dimension": 3, "k": 1},
    "grid": {"lower": [-1, -0.5, -0.5], "upper": [1, 0.5, 0.5], "spacing": 0.0625},
    "game": {"epsilons": [0.1], "directions": 16},
    "analysis": {"tau_cells": [1.0, 3.0]},
    "output": {"formats": ["csv"], "figures": False},
    "accept": {"criteria": [3, 1]},
}


def test_config_defaults_are_written_out():
    cfg = RunConfig.from_dict(FULL)
    d = cfg.to_dict()
    assert d["analysis"]["tau_cells"] == [1.0, 3.0]
    assert "seed" not in d["analysis"] and cfg.analysis.seed == 7
    assert d["solver"]["cfl"] == 0.2
    assert d["accept"]["criteria"] == [1, 3]
    assert d["grid"]["counts"] == [33, 17, 17]
    assert RunConfig.from_dict(d).to_dict() == d


@given(st.integers(0, 2 ** 32), st.sampled_from(["sphere", "ellipsoid", "torus"]),
       st.lists(st.floats(0.01, 0.2), min_size=1, max_size=3), st.integers(1, 64))
def test_config_round_trip_identity(seed, name, eps, m):
    surface = {"name": name, "dimension": 3}
    if name == "ellipsoid":
        surface["semi_axes"] = [1.0, 0.5, 0.4]
    cfg = RunConfig.from_dict({"seed": seed, "surface": surface, "game": {"epsilons": eps, "directions": m}})
    d = cfg.to_dict()
    again = RunConfig.from_dict(json.loads(json.dumps(d)))
    assert again.to_dict() == d


def test_config_save_load(tmp_path):
    cfg = RunConfig.from_dict(FULL)
    path = cfg.save(tmp_path / "c.json")
    assert RunConfig.load(path).to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")


@pytest.mark.parametrize("bad", [
    {"unknown": 1},
    {"seed": -1},
    {"game": {"epsilon": 0.1}},
    {"game": {"epsilons": []}},
    {"analysis": {"seed": 3}},
    {"solver": {"cfl": 0.5}},
    {"solver": {"dt": 0.1}},
    {"grid": {"origin": [0, 0], "spacing": 0.1}},
    {"grid": {"lower": [0, 0], "upper": [1, 1], "spacing": 0.1, "extra": 1}},
    {"surface": {"name": "blob", "dimension": 3}},
    {"oracle": {"kind": "sphere", "dimension": 3, "radius": -1}},
    {"output": {"formats": ["png"]}},
    {"accept": {"criteria": [15]}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_require_and_probe():
    cfg = RunConfig.from_dict({"surface": {"name": "sphere", "dimension": 2, "radius": 1.0, "center": [0.1, 0.2]}})
    with pytest.raises(ConfigError):
        cfg.require("grid")
    np.testing.assert_allclose(cfg.probe_point(), [0.1, 0.2])
