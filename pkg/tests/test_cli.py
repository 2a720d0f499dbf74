import json

import numpy as np
import pytest

from atl import io
from atl.cli import main

CIRCLE = {"surface": {"name": "sphere", "dimension": 2, "radius": 1.0},
          "oracle": {"kind": "sphere", "dimension": 2, "radius": 1.0},
          "grid": {"lower": [-1.15, -1.15], "upper": [1.15, 1.15], "spacing": 0.03125}}


def run(tmp_path, command, cfg, name="run"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, "--config", str(path), "--out", str(out)]), out


def test_oracle_outputs(tmp_path):
    code, out = run(tmp_path, "oracle", CIRCLE)
    assert code == 0
    for name in ("oracle.csv", "oracle.vtk", "oracle.png", "oracle_summary.json", "config_resolved.json", "atl.log"):
        assert (out / name).exists()
    summary = json.loads((out / "oracle_summary.json").read_text())
    assert summary["value_at_center"] == 0.5


def test_solve_analyze_compare(tmp_path):
    code, out = run(tmp_path, "solve", CIRCLE, "solve")
    assert code == 0
    report = json.loads((out / "solve_report.json").read_text())
    assert report["extinction_time"] == pytest.approx(0.5, abs=3e-3)
    assert report["mean_convexity"]["mean_convex"]

    code, an = run(tmp_path, "analyze", {"u_field": str(out / "u.csv")}, "analyze")
    assert code == 0
    rep = json.loads((an / "regularity_report.json").read_text())
    assert rep["critical_points"] and all(p["classified_k"] == 1 for p in rep["critical_points"])
    assert (an / "critical_points.csv").read_text().startswith("index,location")

    cmp_cfg = {"oracle": CIRCLE["oracle"], "compare": {"field_a": str(out / "u.vtk"), "mask_radius": 0.8}}
    code, cmp_out = run(tmp_path, "compare", cmp_cfg, "compare")
    assert code == 0
    norms = json.loads((cmp_out / "compare.json").read_text())
    assert norms["linf"] < 3e-3 and norms["count"] > 1000


def test_outputs_are_deterministic(tmp_path):
    cfg = dict(CIRCLE, output={"figures": False})
    _, a = run(tmp_path, "solve", cfg, "a")
    _, b = run(tmp_path, "solve", cfg, "b")
    for name in ("u.csv", "u.vtk", "solve_report.json", "config_resolved.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_resolved_config_round_trips(tmp_path):
    _, out = run(tmp_path, "oracle", CIRCLE)
    resolved = out / "config_resolved.json"
    _, again = run(tmp_path, "oracle", json.loads(resolved.read_text()), "again")
    assert (again / "config_resolved.json").read_bytes() == resolved.read_bytes()


def test_game_sweep(tmp_path):
    cfg = dict(CIRCLE, game={"epsilons": [0.1], "directions": 16}, output={"figures": True})
    code, out = run(tmp_path, "game", cfg)
    assert code == 0
    rows = (out / "game_sweep.csv").read_text().splitlines()
    assert rows[0] == "epsilon,value_at_probe,iterations,converged,diverged"
    assert (out / "u_eps_0.1.csv").exists() and (out / "game_sweep.png").exists()
    value = float(rows[1].split(",")[1])
    assert value == pytest.approx(0.5, abs=0.03)


def test_config_errors_exit_2(tmp_path):
    assert run(tmp_path, "solve", {"bogus": 1}, "a")[0] == 2
    assert run(tmp_path, "oracle", {"oracle": CIRCLE["oracle"]}, "b")[0] == 2
    assert run(tmp_path, "analyze", {}, "c")[0] == 2
    assert run(tmp_path, "analyze", {"u_field": str(tmp_path / "none.csv")}, "d")[0] == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    small = dict(CIRCLE, surface={"name": "sphere", "dimension": 2, "radius": 1.2})
    assert run(tmp_path, "solve", small, "e")[0] == 2


def test_divergent_game_exits_3(tmp_path):
    cfg = {"surface": {"name": "ellipsoid", "dimension": 2, "semi_axes": [1.0, 0.3]},
           "grid": {"lower": [-1.15, -0.45], "upper": [1.15, 0.45], "spacing": 0.015625},
           "game": {"epsilons": [0.05], "directions": 1, "tangent_lines": 0, "guided_passes": 1},
           "output": {"figures": False}}
    code, out = run(tmp_path, "game", cfg)
    assert code == 3
    rep = json.loads((out / "game_report.json").read_text())
    assert rep["sweep"][0]["diverged"]


def test_accept_subset(tmp_path, capsys):
    code, out = run(tmp_path, "accept", {"accept": {"criteria": [1]}, "output": {"figures": False}})
    assert code == 0
    assert "[PASS]  1" in capsys.readouterr().out
    data = json.loads((out / "acceptance.json").read_text())
    assert [c["id"] for c in data["criteria"]] == [1]
    assert "runtime_s" not in data["criteria"][0]


def test_compare_grid_mismatch(tmp_path):
    g1 = io.write_csv(io.read_csv(_tiny(tmp_path, 5)), tmp_path / "a.csv")
    g2 = _tiny(tmp_path, 6)
    code, _ = run(tmp_path, "compare", {"compare": {"field_a": str(g1), "field_b": str(g2)}})
    assert code == 2


def _tiny(tmp_path, n):
    from atl.grid import GridSpec, ScalarField
    grid = GridSpec((0.0, 0.0), 0.1, (n, n))
    return io.write_csv(ScalarField(grid, np.zeros(grid.counts)), tmp_path / f"t{n}.csv")
