"""Acceptance suite: fourteen numbered checks over oracle fields and standard solver runs."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .game import GameOptions, GameResult, solve_game
from .grid import GridSpec, ScalarField, one_laplacian_field
from .levelset import ArrivalResult, solve_arrival
from .oracles import AnalyticArrival, Dumbbell, Sphere, Torus
from . import regularity as reg

log = logging.getLogger(__name__)

ORACLE_TOL = 1e-6


@dataclass
class CriterionResult:
    id: int
    name: str
    target: str
    tolerance: float | str
    measured: dict
    passed: bool
    runtime_s: float
    mandatory: bool = True
    details: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.id:2d} {self.name}: {self.details}"


@dataclass
class AcceptanceManifest:
    criteria: list[CriterionResult] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria if c.mandatory)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 4

    def to_dict(self) -> dict:
        return {"passed": self.passed, "settings": self.settings,
                "criteria": [asdict(c) for c in self.criteria]}


# ----------------------------------------------------------------------------
# standard runs

CIRCLE_BOX = 1.15


def circle_grid(n: int) -> GridSpec:
    return GridSpec.from_bounds([-CIRCLE_BOX] * 2, [CIRCLE_BOX] * 2, 1.0 / n)


def sphere_grid(n: int = 48) -> GridSpec:
    return GridSpec.from_bounds([-CIRCLE_BOX] * 3, [CIRCLE_BOX] * 3, 1.0 / n)


def dumbbell_grid(n: int = 48) -> GridSpec:
    return GridSpec.from_bounds([-1.0, -0.5, -0.5], [1.0, 0.5, 0.5], 1.0 / n)


def torus_grid(n: int = 48) -> GridSpec:
    return GridSpec.from_bounds([-1.45, -1.45, -0.45], [1.45, 1.45, 0.45], 1.0 / n)


class StandardRuns:
    """Lazily computed solver runs shared by the criteria; wall times are kept per run."""

    def __init__(self, seed: int = 0, epsilons=(0.1, 0.05, 0.025), directions: int = 32):
        self.seed = seed
        self.epsilons = tuple(epsilons)
        self.directions = directions
        self.timings: dict[str, float] = {}
        self._cache: dict[str, object] = {}

    def _get(self, key: str, build: Callable[[], object]):
        if key not in self._cache:
            t0 = time.perf_counter()
            self._cache[key] = build()
            self.timings[key] = time.perf_counter() - t0
            log.info("run %s took %.1f s", key, self.timings[key])
        return self._cache[key]

    def circle(self, n: int) -> ArrivalResult:
        return self._get(f"circle_{n}", lambda: solve_arrival(Sphere(2, radius=1.0), circle_grid(n)))

    def sphere3d(self) -> ArrivalResult:
        return self._get("sphere_48", lambda: solve_arrival(Sphere(3, radius=1.0), sphere_grid(48)))

    def dumbbell(self) -> ArrivalResult:
        return self._get("dumbbell_48", lambda: solve_arrival(Dumbbell(3), dumbbell_grid(48)))

    def torus(self) -> ArrivalResult:
        return self._get("torus_48", lambda: solve_arrival(Torus(3, major=1.0, minor=0.3), torus_grid(48)))

    def game(self, epsilon: float) -> GameResult:
        opts = GameOptions(epsilon, self.directions)
        return self._get(f"game_{epsilon:g}", lambda: solve_game(Sphere(2, radius=1.0), circle_grid(128), opts))

    def derivs(self, key: str, result: ArrivalResult) -> reg.FieldDerivatives:
        return self._get(f"derivs_{key}", lambda: reg.derivatives(result))

    def critical(self, key: str, result: ArrivalResult) -> list[reg.CriticalPointRecord]:
        return self._get(f"critical_{key}", lambda: reg.find_critical_points(result, derivs=self.derivs(key, result)))

    def cost(self, *keys: str) -> float:
        return sum(self.timings.get(k, 0.0) for k in keys)


def neck_points(records, surface: Dumbbell | None = None):
    """Critical points in the middle third between the ball centers."""
    surface = surface or Dumbbell(3)
    center = np.zeros(3) if surface.center is None else np.asarray(surface.center, float)
    reach = surface.separation / 6.0
    return [r for r in records if np.linalg.norm(r.location - center) <= reach]


# ----------------------------------------------------------------------------
# oracle fields

def oracle_cases(h: float = 1.0 / 16):
    """(name, field, k) for exact cylinder and sphere arrival times."""
    g3 = GridSpec.from_bounds([-1.0] * 3, [1.0] * 3, h)
    g2 = GridSpec.from_bounds([-1.0] * 2, [1.0] * 2, h)
    cases = []
    for name, arrival, grid, k in [
        ("cylinder_k1_d3", AnalyticArrival("cylinder", 3, k=1), g3, 1),
        ("cylinder_k2_d3", AnalyticArrival("cylinder", 3, k=2), g3, 2),
        ("sphere_d2", AnalyticArrival("sphere", 2, radius=1.0), g2, 1),
        ("sphere_d3", AnalyticArrival("sphere", 3, radius=1.0), g3, 2),
    ]:
        cases.append((name, ScalarField.from_function(grid, arrival, name), k))
    return cases


def oracle_checks(h: float = 1.0 / 16) -> dict:
    """Worst deviations of every regularity check over the oracle fields."""
    worst = {"classification": 0.0, "classical": 0.0, "condition_b": 0.0, "profile": 0.0, "axis_decay": 0.0}
    wrong_k = []
    for name, u, k in oracle_cases(h):
        res = ArrivalResult.from_field(u)
        derivs = reg.derivatives(res)
        recs = reg.find_critical_points(res, derivs=derivs)
        if not recs:
            wrong_k.append(f"{name}: no critical points")
            continue
        for rec in recs:
            if rec.classified_k != k:
                wrong_k.append(f"{name}: k={rec.classified_k}")
            worst["classification"] = max(worst["classification"], rec.spectrum_residual)
            worst["condition_b"] = max(worst["condition_b"], rec.equation_residual_b)
        grad = derivs.grad_norm
        lap1 = one_laplacian_field(u)
        sel = derivs.valid & (grad > 0.1)
        worst["classical"] = max(worst["classical"], float(np.max(np.abs(lap1[sel] + 1.0))))
        center = min(recs, key=lambda r: float(np.linalg.norm(r.location)))
        fits = reg.tangent_flow_profile(res, center, [h * h, 10 * h * h], derivs=derivs)
        for fit in fits:
            worst["profile"] = max(worst["profile"], abs(fit.mean_ratio - math.sqrt(2 * k)),
                                   abs(fit.max_ratio - math.sqrt(2 * k)), abs(fit.min_ratio - math.sqrt(2 * k)))
        if k < u.grid.dimension - 1:
            rows = reg.axis_decay(res, center, reg.fitted_axis(center), [8 * h, 4 * h, 2 * h], derivs=derivs)
            worst["axis_decay"] = max(worst["axis_decay"], max(r.ratio for r in rows))
    return {"worst": worst, "wrong_k": wrong_k}


def oracle_viscosity(seeds=(0, 1, 2), h: float = 1.0 / 16, trials: int = 100) -> dict:
    """Viscosity tests at axis, center and off-axis nodes of every oracle field."""
    tested = violations = 0
    for name, u, _ in oracle_cases(h):
        grid = u.grid
        mid = tuple(c // 2 for c in grid.counts)
        off = tuple(m + 5 if a == 0 else m for a, m in enumerate(mid))
        for seed in seeds:
            for idx in (mid, off):
                rep = reg.check_viscosity(u, idx, trials, radius_cells=3, seed=seed)
                tested += rep.tested
                violations += rep.violations
    return {"tested": tested, "violations": violations}


# ----------------------------------------------------------------------------
# criteria

def _circle_error(result: ArrivalResult, radius: float = 0.9) -> float:
    coords = result.grid.coordinates()
    exact = (1.0 - (coords ** 2).sum(axis=-1)) / 2.0
    mask = np.linalg.norm(coords, axis=-1) <= radius
    return float(np.max(np.abs(result.u.values[mask] - exact[mask])))


class Suite:
    def __init__(self, runs: StandardRuns | None = None, seed: int = 0):
        self.runs = runs or StandardRuns(seed)
        self.seed = seed

    def run(self, ids=range(1, 15), on_result=None) -> AcceptanceManifest:
        manifest = AcceptanceManifest(settings={"seed": self.seed, "epsilons": list(self.runs.epsilons),
                                                "directions": self.runs.directions})
        for cid in ids:
            res = getattr(self, f"c{cid}")()
            manifest.criteria.append(res)
            if on_result is not None:
                on_result(res)
        manifest.settings["run_seconds"] = dict(self.runs.timings)
        return manifest

    def _timed(self, cid, name, target, tol, fn, keys=(), limit=None) -> CriterionResult:
        t0 = time.perf_counter()
        before = set(self.runs.timings)
        passed, measured, details = fn()
        # runs reused from earlier criteria still count toward this one
        runtime = time.perf_counter() - t0 + self.runs.cost(*(k for k in keys if k in before))
        if limit is not None:
            measured["runtime_limit_s"] = limit
            if runtime > limit:
                passed = False
                details += f"; runtime {runtime:.1f}s over {limit:.0f}s"
        return CriterionResult(cid, name, target, tol, measured, bool(passed), runtime, details=details)

    def c1(self):
        def check():
            out = oracle_checks()
            w = out["worst"]
            ok = not out["wrong_k"] and all(v <= ORACLE_TOL for v in w.values())
            return ok, dict(w, wrong_k=out["wrong_k"]), ", ".join(f"{k} {v:.1e}" for k, v in w.items())
        return self._timed(1, "oracle exactness", "all residuals 0 on quadratic oracles", ORACLE_TOL, check, limit=10.0)

    def c2(self):
        def check():
            e64 = _circle_error(self.runs.circle(64))
            e128 = _circle_error(self.runs.circle(128))
            ratio = e64 / e128 if e128 > 0 else math.inf
            ok = e128 <= 0.02 and ratio >= 1.5
            return ok, {"error_h64": e64, "error_h128": e128, "ratio": ratio}, \
                f"Linf {e128:.2e} at h=1/128, ratio {ratio:.2f}"
        return self._timed(2, "2D solver convergence", "Linf <= 0.02 at h=1/128, ratio >= 1.5", 0.02, check,
                           keys=("circle_64", "circle_128"), limit=300.0)

    def c3(self):
        def check():
            r = self.runs.sphere3d()
            val = float(r.u.values[r.grid.nearest_index([0, 0, 0])])
            return abs(val - 0.25) <= 0.02, {"u_center": val}, f"u(0) = {val:.5f}"
        return self._timed(3, "3D sphere", "u(center) = 0.25", 0.02, check, keys=("sphere_48",), limit=1800.0)

    def c4(self):
        def check():
            r = self.runs.circle(128)
            recs = self.runs.critical("circle_128", r)
            dev = max((float(np.max(np.abs(c.eigenvalues + 1.0))) for c in recs), default=math.inf)
            ks = [c.classified_k for c in recs]
            ok = bool(recs) and all(k == 1 for k in ks) and dev <= 0.1
            return ok, {"count": len(recs), "k": ks, "max_eig_deviation": dev}, \
                f"{len(recs)} point(s), k={ks}, max |lambda+1| {dev:.2e}"
        return self._timed(4, "spherical critical point", "k = n = 1, eigenvalues -1 +- 0.1", 0.1, check,
                           keys=("circle_128",))

    def c5(self):
        def check():
            r = self.runs.dumbbell()
            recs = neck_points(self.runs.critical("dumbbell_48", r))
            rows = []
            ok = bool(recs)
            for c in recs:
                e = c.eigenvalues
                dev = float(np.max(np.abs(e - np.array([-1.0, -1.0, 0.0]))))
                gap = bool(e[0] < -0.5 and e[1] < -0.5 and e[2] > -0.25)
                ok &= c.classified_k == 1 and dev <= 0.2 and gap
                rows.append({"location": c.location, "eigenvalues": e, "k": c.classified_k, "deviation": dev, "gap": gap})
            detail = "; ".join(f"eig {np.round(x['eigenvalues'], 3).tolist()} k={x['k']}" for x in rows) or "no neck point"
            return ok, {"neck_points": rows}, detail
        return self._timed(5, "cylindrical critical point", "k = 1, eigenvalues {-1,-1,0} +- 0.2 with gap", 0.2, check,
                           keys=("dumbbell_48",))

    def c6(self):
        def check():
            r = self.runs.torus()
            recs = self.runs.critical("torus_48", r)
            if len(recs) < 3:
                return False, {"count": len(recs)}, f"only {len(recs)} critical points"
            fit = reg.fit_circle([c.location for c in recs])
            frac = sum(c.classified_k == 1 for c in recs) / len(recs)
            h = r.grid.spacing
            ok = fit.max_deviation <= 2 * h and frac >= 0.8
            return ok, {"count": len(recs), "radius": fit.radius, "max_deviation": fit.max_deviation,
                        "spacing": h, "fraction_k1": frac}, \
                f"{len(recs)} points, radius {fit.radius:.4f}, max dev {fit.max_deviation:.4f} (2h={2 * h:.4f}), k=1 {frac:.0%}"
        return self._timed(6, "critical-set geometry", "circle fit within 2h, >= 80% k=1", "2h", check,
                           keys=("torus_48",))

    def c7(self):
        def check():
            r = self.runs.circle(128)
            st = reg.classical_residual_stats(r, self.runs.critical("circle_128", r),
                                              derivs=self.runs.derivs("circle_128", r))
            ok = st.median <= 0.05 and st.q95 <= 0.15
            return ok, asdict(st), f"median {st.median:.2e}, q95 {st.q95:.2e} over {st.count} nodes"
        return self._timed(7, "classical-equation residual", "median <= 0.05, q95 <= 0.15", 0.05, check,
                           keys=("circle_128",))

    def c8(self):
        def check():
            rows = []
            for key, r in (("circle_128", self.runs.circle(128)), ("dumbbell_48", self.runs.dumbbell())):
                for c in self.runs.critical(key, r):
                    rows.append({"run": key, "location": c.location, "residual_b": c.equation_residual_b,
                                 "angle_deg": c.b_angle_deg})
            ok = bool(rows) and all(x["residual_b"] <= 0.2 and x["angle_deg"] <= 20.0 for x in rows)
            worst_r = max((x["residual_b"] for x in rows), default=math.inf)
            worst_a = max((x["angle_deg"] for x in rows), default=math.inf)
            return ok, {"points": rows}, f"{len(rows)} points, max residual {worst_r:.3f}, max angle {worst_a:.1f} deg"
        return self._timed(8, "critical-point equation", "residual <= 0.2, angle <= 20 deg", 0.2, check,
                           keys=("circle_128", "dumbbell_48"))

    def c9(self):
        def check():
            ref = self.runs.circle(128)
            coords = ref.grid.coordinates()
            mask = np.linalg.norm(coords, axis=-1) <= 0.8
            rows = []
            for eps in self.runs.epsilons:
                g = self.runs.game(eps)
                v = g.value_at([0.0, 0.0])
                gap = float(np.max(np.abs(g.u_eps.values[mask] - ref.u.values[mask])))
                rows.append({"epsilon": eps, "u_eps_center": v, "error": abs(v - 0.5), "gap_vs_levelset": gap,
                             "iterations": g.iterations, "converged": g.converged})
            rows.sort(key=lambda x: -x["epsilon"])
            errs = [x["error"] for x in rows]
            monotone = all(b <= a for a, b in zip(errs, errs[1:]))
            finest = rows[-1]
            ok = monotone and finest["error"] <= 0.1 and finest["gap_vs_levelset"] <= 0.12 and all(x["converged"] for x in rows)
            return ok, {"sweep": rows, "monotone": monotone}, \
                "u_eps(0) " + ", ".join(f"{x['u_eps_center']:.4f}" for x in rows) + \
                f"; gap {finest['gap_vs_levelset']:.4f}"
        keys = tuple(f"game_{e:g}" for e in self.runs.epsilons)
        return self._timed(9, "game convergence", "|u_eps(0)-0.5| <= 0.1, nonincreasing; gap <= 0.12", 0.1, check,
                           keys=keys, limit=900.0)

    def c10(self):
        def check():
            r = self.runs.dumbbell()
            h = r.grid.spacing
            recs = neck_points(self.runs.critical("dumbbell_48", r))
            if not recs:
                return False, {}, "no neck point"
            taus = [0.7 * h * h, 2.2 * h * h, 7.0 * h * h]
            target = math.sqrt(2.0)
            out = {}
            ok = True
            for c in recs:
                fits = reg.tangent_flow_profile(r, c, taus, derivs=self.runs.derivs("dumbbell_48", r))
                out[str(c.index)] = [asdict(f) for f in fits]
                ok &= all(abs(f.mean_ratio / target - 1.0) <= 0.1 for f in fits)
            ratios = [f["mean_ratio"] for v in out.values() for f in v]
            return ok, {"fits": out, "target": target}, \
                "ratios " + ", ".join(f"{x:.3f}" for x in ratios) + f" (sqrt2 = {target:.3f})"
        return self._timed(10, "tangent-flow profile", "r/sqrt(tau) within 10% of sqrt(2) over a decade", 0.1, check,
                           keys=("dumbbell_48",))

    def c11(self):
        def check():
            r = self.runs.dumbbell()
            h = r.grid.spacing
            recs = neck_points(self.runs.critical("dumbbell_48", r))
            if not recs:
                return False, {}, "no neck point"
            out = {}
            ok = True
            for c in recs:
                rows = reg.axis_decay(r, c, reg.fitted_axis(c), [32 * h, 16 * h, 8 * h],
                                      derivs=self.runs.derivs("dumbbell_48", r))
                ratios = [x.ratio for x in rows]
                ok &= ratios[0] > ratios[1] > ratios[2]
                out[str(c.index)] = [asdict(x) for x in rows]
            first = next(iter(out.values()))
            return ok, {"tables": out}, "ratios at 32h,16h,8h: " + ", ".join(f"{x['ratio']:.2e}" for x in first)
        return self._timed(11, "axis decay", "strictly decreasing over 32h, 16h, 8h", "qualitative", check,
                           keys=("dumbbell_48",))

    def c12(self):
        def check():
            a = reg.pinching_and_c11(self.runs.circle(64), derivs=self.runs.derivs("circle_64", self.runs.circle(64)))
            b = reg.pinching_and_c11(self.runs.circle(128), derivs=self.runs.derivs("circle_128", self.runs.circle(128)))
            r1 = b.c11_bound / a.c11_bound
            r2 = b.pinching_max / a.pinching_max
            ok = 0.5 <= r1 <= 2.0 and 0.5 <= r2 <= 2.0
            return ok, {"h64": asdict(a), "h128": asdict(b), "c11_ratio": r1, "pinching_ratio": r2}, \
                f"C11 {a.c11_bound:.4f} -> {b.c11_bound:.4f}, pinching {a.pinching_max:.4f} -> {b.pinching_max:.4f}"
        return self._timed(12, "C11 stability", "changes by at most 2x from h=1/64 to 1/128", 2.0, check,
                           keys=("circle_64", "circle_128"))

    def c13(self):
        def check():
            oracle = oracle_viscosity()
            r = self.runs.circle(128)
            opts = reg.AnalysisOptions(seed=self.seed, viscosity_points=50, viscosity_trials=100)
            reports = reg._viscosity_sample(r, self.runs.derivs("circle_128", r),
                                            self.runs.critical("circle_128", r), opts)
            tested = sum(x.tested for x in reports)
            viol = sum(x.violations for x in reports)
            frac = viol / tested if tested else math.inf
            ok = oracle["violations"] == 0 and oracle["tested"] > 0 and len(reports) == 50 and frac <= 0.02
            return ok, {"oracle": oracle, "points": len(reports), "tested": tested, "violations": viol,
                        "fraction": frac}, \
                f"oracle {oracle['violations']}/{oracle['tested']}, circle {viol}/{tested} over {len(reports)} points"
        return self._timed(13, "viscosity suite", "0 on oracles, <= 2% on the circle run", 0.02, check,
                           keys=("circle_128",))

    def c14(self):
        def check():
            out = {}
            d = self.runs.dumbbell()
            for c in neck_points(self.runs.critical("dumbbell_48", d)):
                fit = reg.blowup_exponent(d, c, 4 * d.grid.spacing, derivs=self.runs.derivs("dumbbell_48", d))
                out[f"dumbbell {c.index}"] = fit.beta
            r = self.runs.circle(128)
            for c in self.runs.critical("circle_128", r):
                fit = reg.blowup_exponent(r, c, 4 * r.grid.spacing, derivs=self.runs.derivs("circle_128", r))
                out[f"circle {c.index}"] = fit.beta
            ok = len(out) >= 2 and all(0.4 <= b <= 0.6 for b in out.values())
            return ok, {"beta": out}, ", ".join(f"{k}: {v:.3f}" for k, v in out.items())
        return self._timed(14, "blow-up exponent", "beta in [0.4, 0.6]", "[0.4, 0.6]", check,
                           keys=("dumbbell_48", "circle_128"))


def write_figures(suite: Suite, out_dir) -> list[Path]:
    """Figures for the runs already computed by the suite."""
    from . import plotting

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = suite.runs
    paths = []
    cache = runs._cache
    if "circle_64" in cache and "circle_128" in cache:
        errs = [_circle_error(runs.circle(64)), _circle_error(runs.circle(128))]
        paths.append(plotting.plot_convergence([1 / 64, 1 / 128], errs, out / "circle_convergence.png"))
        paths.append(plotting.plot_field(runs.circle(128).u, out / "circle_u.png", "arrival time, circle"))
    if "dumbbell_48" in cache:
        d = runs.dumbbell()
        paths.append(plotting.plot_field(d.u, out / "dumbbell_u.png", "arrival time, dumbbell"))
        recs = neck_points(runs.critical("dumbbell_48", d))
        h = d.grid.spacing
        if recs:
            fits = {str(c.index): reg.tangent_flow_profile(d, c, [0.7 * h * h, 2.2 * h * h, 7.0 * h * h])
                    for c in recs}
            paths.append(plotting.plot_profile(fits, 1, out / "dumbbell_profile.png"))
            tables = {str(c.index): reg.axis_decay(d, c, reg.fitted_axis(c), [32 * h, 16 * h, 8 * h]) for c in recs}
            paths.append(plotting.plot_axis_decay(tables, out / "dumbbell_axis_decay.png"))
            paths.append(plotting.plot_spectra(runs.critical("dumbbell_48", d), out / "dumbbell_spectra.png"))
    games = [e for e in runs.epsilons if f"game_{e:g}" in cache]
    if games:
        vals = [runs.game(e).value_at([0.0, 0.0]) for e in games]
        paths.append(plotting.plot_game_sweep(games, vals, 0.5, out / "game_sweep.png"))
    return paths
