"""Command-line front end: ``atl oracle|solve|game|analyze|compare|accept --config <path> [--out <dir>]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io, plotting
from .config import RunConfig
from .errors import AtlError, ConfigError
from .grid import ScalarField

log = logging.getLogger("atl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPT = 0, 2, 3, 4


def _setup_logging(out: Path) -> None:
    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(logging.INFO)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    err = logging.StreamHandler(sys.stderr)
    err.setFormatter(fmt)
    root.addHandler(err)
    fh = logging.FileHandler(out / "atl.log", mode="w")
    fh.setFormatter(fmt)
    root.addHandler(fh)


def _write_field(cfg: RunConfig, field: ScalarField, out: Path, stem: str, title: str) -> list[Path]:
    paths = io.write_field(field, out / stem, cfg.output.formats)
    if cfg.output.figures:
        paths.append(plotting.plot_field(field, out / f"{stem}.png", title))
    return paths


# ----------------------------------------------------------------------------
# subcommands

def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    cfg.require("oracle", "grid")
    if cfg.oracle.dimension != cfg.grid.dimension:
        raise ConfigError("oracle and grid dimensions differ")
    field = ScalarField.from_function(cfg.grid, cfg.oracle, f"{cfg.oracle.kind}_arrival")
    _write_field(cfg, field, out, "oracle", f"{cfg.oracle.kind} arrival time")
    center = np.zeros(cfg.grid.dimension) if cfg.oracle.center is None else np.asarray(cfg.oracle.center)
    summary = {
        "oracle": cfg.oracle.to_dict(),
        "grid": cfg.grid.to_dict(),
        "value_at_center": float(cfg.oracle(center)),
        "max": float(np.max(field.values)),
        "min": float(np.min(field.values)),
    }
    io.write_json(summary, out / "oracle_summary.json")
    log.info("oracle value at center %.6g", summary["value_at_center"])
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    from .levelset import solve_arrival
    from .oracles import check_initial_mean_convexity

    cfg.require("surface", "grid")
    mc = check_initial_mean_convexity(cfg.surface, seed=cfg.seed)
    if not mc.mean_convex:
        log.warning("initial surface is not mean convex (min H = %.4g)", mc.min_h)
    result = solve_arrival(cfg.surface, cfg.grid, cfg.solver,
                           progress=lambda step, t, left: log.info("step %d, t = %.5f, %d nodes left", step, t, left))
    _write_field(cfg, result.u, out, "u", "arrival time")
    for t, snap in sorted(result.snapshots.items()):
        io.write_field(snap, out / f"v_t{t:.6g}", cfg.output.formats)
    arrived = result.arrived.flags
    report = {
        "surface": cfg.surface.to_dict(),
        "grid": cfg.grid.to_dict(),
        "spacing": cfg.grid.spacing,
        "solver": cfg.solver.to_dict(),
        "steps_taken": result.steps_taken,
        "final_time": result.final_time,
        "extinction_time": result.extinction_time,
        "arrived_count": int(arrived.sum()),
        "initial_interior_count": int(result.initial_interior.flags.sum()),
        "recrossings": result.recrossings,
        "warnings": list(result.warnings),
        "mean_convexity": {"min_h": mc.min_h, "location": mc.location, "samples": mc.samples,
                           "mean_convex": mc.mean_convex, "seed": cfg.seed},
        "masks": {"u": "finite on arrived nodes, NaN elsewhere"},
    }
    io.write_json(report, out / "solve_report.json")
    log.info("solve finished: %d steps, extinction time %.6g", result.steps_taken, result.extinction_time)
    return EXIT_OK


def cmd_game(cfg: RunConfig, out: Path) -> int:
    from .game import solve_game

    cfg.require("surface", "grid")
    probe = cfg.probe_point()
    rows = []
    for eps in cfg.game.epsilons:
        res = solve_game(cfg.surface, cfg.grid, cfg.game.options(eps))
        stem = f"u_eps_{eps:g}"
        _write_field(cfg, res.u_eps, out, stem, f"game value, eps = {eps:g}")
        rows.append({"epsilon": eps, "value_at_probe": res.value_at(probe), "iterations": res.iterations,
                     "converged": res.converged, "diverged": res.diverged, "inconclusive": res.inconclusive,
                     "pass_changes": res.pass_changes, "warnings": res.warnings})
        log.info("eps %g: u_eps(probe) = %.6g after %d iterations", eps, rows[-1]["value_at_probe"], res.iterations)
    io.write_table([{k: r[k] for k in ("epsilon", "value_at_probe", "iterations", "converged", "diverged")}
                    for r in rows], out / "game_sweep.csv")
    io.write_json({"probe": probe, "grid": cfg.grid.to_dict(), "spacing": cfg.grid.spacing,
                   "game": asdict(cfg.game), "sweep": rows}, out / "game_report.json")
    if cfg.output.figures and cfg.surface.name == "sphere":
        r0 = cfg.surface.radius
        c = np.zeros(cfg.grid.dimension) if cfg.surface.center is None else np.asarray(cfg.surface.center)
        ref = (r0 ** 2 - float(np.sum((probe - c) ** 2))) / (2 * (cfg.grid.dimension - 1))
        plotting.plot_game_sweep([r["epsilon"] for r in rows], [r["value_at_probe"] for r in rows], ref,
                                 out / "game_sweep.png")
    if any(r["diverged"] for r in rows):
        log.error("game iteration diverged")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, out: Path) -> int:
    from . import regularity as reg

    if cfg.u_field is None:
        raise ConfigError("analyze needs 'u_field' (path to a CSV or VTK arrival field)")
    field = io.read_field(cfg.u_field, "u")
    report = reg.analyze(field, cfg.analysis)
    io.write_json(report.to_dict(), out / "regularity_report.json")
    rows = []
    for rec in report.critical_points:
        row = {"index": list(rec.index), "location": rec.location, "value": rec.value, "grad_norm": rec.grad_norm,
               "eigenvalues": rec.eigenvalues, "classified_k": "" if rec.classified_k is None else rec.classified_k,
               "spectrum_residual": rec.spectrum_residual, "equation_residual_b": rec.equation_residual_b,
               "b_angle_deg": rec.b_angle_deg}
        rows.append(row)
    io.write_table(rows, out / "critical_points.csv")
    if cfg.output.figures:
        if report.critical_points:
            plotting.plot_spectra(report.critical_points, out / "spectra.png")
        k = min((r.classified_k or r.n) for r in report.critical_points) if report.critical_points else 1
        if report.profile_fits:
            plotting.plot_profile(report.profile_fits, k, out / "profile.png")
        if report.axis_decay_tables:
            plotting.plot_axis_decay(report.axis_decay_tables, out / "axis_decay.png")
    log.info("analyze: %d critical points", len(report.critical_points))
    return EXIT_OK


def compare_fields(a: ScalarField, b: ScalarField, center=None, radius=None) -> dict:
    """Error norms of ``a - b`` over nodes where both are finite (and inside the optional ball)."""
    if a.grid.counts != b.grid.counts or not np.allclose(a.grid.origin, b.grid.origin) \
            or not np.isclose(a.grid.spacing, b.grid.spacing):
        raise ConfigError(f"grids differ: {a.grid.counts} vs {b.grid.counts}")
    mask = np.isfinite(a.values) & np.isfinite(b.values)
    if radius is not None:
        c = np.zeros(a.grid.dimension) if center is None else np.asarray(center, float)
        mask &= np.linalg.norm(a.grid.coordinates() - c, axis=-1) <= radius
    if not mask.any():
        raise ConfigError("comparison mask is empty")
    diff = np.abs(a.values - b.values)[mask]
    h = a.grid.spacing
    return {
        "linf": float(diff.max()),
        "l2": float(np.sqrt(np.sum(diff ** 2) * h ** a.grid.dimension)),
        "rms": float(np.sqrt(np.mean(diff ** 2))),
        "count": int(mask.sum()),
        "spacing": h,
        "mask": {"center": None if center is None else list(center), "radius": radius,
                 "rule": "both finite" + ("" if radius is None else " and within radius")},
    }


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    cc = cfg.compare
    if cc.field_a is None:
        raise ConfigError("compare needs 'compare.field_a'")
    a = io.read_field(cc.field_a, "a")
    if cc.field_b is not None:
        b = io.read_field(cc.field_b, "b")
        source = cc.field_b
    elif cfg.oracle is not None:
        b = ScalarField.from_function(a.grid, cfg.oracle, "oracle")
        source = f"oracle {cfg.oracle.kind}"
    else:
        raise ConfigError("compare needs 'compare.field_b' or an 'oracle' section")
    norms = compare_fields(a, b, cc.mask_center, cc.mask_radius)
    norms.update(field_a=cc.field_a, field_b=source)
    io.write_json(norms, out / "compare.json")
    io.write_table([{k: norms[k] for k in ("linf", "l2", "rms", "count", "spacing")}], out / "compare.csv")
    log.info("compare: Linf %.4g, L2 %.4g over %d nodes", norms["linf"], norms["l2"], norms["count"])
    return EXIT_OK


def cmd_accept(cfg: RunConfig, out: Path) -> int:
    from .acceptance import StandardRuns, Suite, write_figures

    suite = Suite(StandardRuns(cfg.seed, cfg.game.epsilons, cfg.game.directions), seed=cfg.seed)

    def show(res):
        print(res.line(), flush=True)
        log.info("criterion %d took %.1f s", res.id, res.runtime_s)

    manifest = suite.run(cfg.accept.criteria, on_result=show)
    data = manifest.to_dict()
    # wall times vary between runs; keep them in the log so the JSON stays reproducible
    data["settings"].pop("run_seconds", None)
    for c in data["criteria"]:
        c.pop("runtime_s", None)
    io.write_json(data, out / "acceptance.json")
    io.write_table([{"id": c.id, "name": c.name, "passed": c.passed, "details": c.details.replace(",", ";")}
                    for c in manifest.criteria], out / "acceptance.csv")
    if cfg.output.figures:
        write_figures(suite, out)
    print(f"{sum(c.passed for c in manifest.criteria)}/{len(manifest.criteria)} criteria passed")
    return manifest.exit_code


COMMANDS = {
    "oracle": cmd_oracle,
    "solve": cmd_solve,
    "game": cmd_game,
    "analyze": cmd_analyze,
    "compare": cmd_compare,
    "accept": cmd_accept,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atl", description="Arrival-time laboratory for mean curvature flow.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    _setup_logging(out)
    cfg.save(out / "config_resolved.json")
    try:
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except AtlError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    finally:
        logging.getLogger().handlers.clear()


if __name__ == "__main__":
    sys.exit(main())
