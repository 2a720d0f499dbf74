"""Level-set evolution by mean curvature and arrival-time recording.

The level-set function ``v`` (positive inside) is stepped with explicit Euler
on ``v_t = |grad v| div(grad v / |grad v|)``, written in the non-divergence
form ``v_t = lap v - Hess v(g, g) / (|g|^2 + delta^2)``. Each node's arrival
time is the first time ``v`` drops to zero there, located by linear
interpolation inside the step.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigError, DegenerateFieldError, NumericalInstabilityError
from .grid import DEFAULT_DELTA_REG, GridSpec, Mask, ScalarField, gradient_field, hessian_field
from .oracles import ImplicitSurface

log = logging.getLogger(__name__)

numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
if "ATL_THREADS" in os.environ:
    numba.set_num_threads(max(1, min(int(os.environ["ATL_THREADS"]), numba.config.NUMBA_NUM_THREADS)))


@dataclass
class SolverOptions:
    cfl: float = 0.2
    delta_reg: float = DEFAULT_DELTA_REG
    t_max: float | None = None
    redistance_every: int = 0
    record_snapshots: list[float] = field(default_factory=list)
    critical_blend: float = 0.5

    def __post_init__(self):
        if not 0 < self.cfl <= 0.25:
            raise ConfigError(f"cfl must lie in (0, 0.25], got {self.cfl}")
        if not self.delta_reg > 0:
            raise ConfigError("delta_reg must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if self.redistance_every < 0:
            raise ConfigError("redistance_every must be >= 0")
        if self.critical_blend < 0:
            raise ConfigError("critical_blend must be >= 0")
        self.record_snapshots = sorted(float(t) for t in self.record_snapshots)

    def to_dict(self) -> dict:
        return {
            "cfl": self.cfl,
            "delta_reg": self.delta_reg,
            "t_max": self.t_max,
            "redistance_every": self.redistance_every,
            "record_snapshots": list(self.record_snapshots),
            "critical_blend": self.critical_blend,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolverOptions":
        return cls(**data)


@dataclass
class ArrivalResult:
    u: ScalarField
    arrived: Mask
    initial_interior: Mask
    steps_taken: int = 0
    extinction_time: float = float("nan")
    final_time: float = float("nan")
    recrossings: int = 0
    warnings: list[str] = field(default_factory=list)
    snapshots: dict[float, ScalarField] = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @classmethod
    def from_field(cls, u: ScalarField) -> "ArrivalResult":
        """Wrap a known arrival field (e.g. a sampled oracle) for analysis."""
        finite = np.isfinite(u.values)
        values = u.values
        return cls(u, Mask(u.grid, finite), Mask(u.grid, finite), 0,
                   float(np.max(values[finite])) if finite.any() else float("nan"))


# ----------------------------------------------------------------------------
# kernels
#
# Where |g| is small against h |Hess v| the normal direction is not resolved
# and the regularized quotient degenerates to the full Laplacian, which moves
# a peak twice as fast as it should. There the excluded direction is taken to
# be the most negative Hessian eigenvector instead; the two forms are blended
# with weight s = |g|^2 / (|g|^2 + (blend * h * |Hess|_F)^2).

@numba.njit(cache=True)
def _min_eig2(a, b, c):
    half = 0.5 * (a - c)
    return 0.5 * (a + c) - math.sqrt(half * half + b * b)


@numba.njit(cache=True)
def _min_eig3(a, b, c, d, e, f):
    # symmetric [[a, b, c], [b, d, e], [c, e, f]]
    p1 = b * b + c * c + e * e
    if p1 == 0.0:
        return min(a, min(d, f))
    q = (a + d + f) / 3.0
    p2 = (a - q) ** 2 + (d - q) ** 2 + (f - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    ba = (a - q) / p
    bd = (d - q) / p
    bf = (f - q) / p
    bb = b / p
    bc = c / p
    be = e / p
    r = 0.5 * (ba * (bd * bf - be * be) - bb * (bb * bf - be * bc) + bc * (bb * be - bd * bc))
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    return q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)

@numba.njit(cache=True, parallel=True)
def _step2d(v, out, u, interior, t, dt, h, delta2, blend2):
    nx, ny = v.shape
    inv2h = 1.0 / (2.0 * h)
    invh2 = 1.0 / (h * h)
    positive = 0
    recross = 0
    bad = 0
    for i in numba.prange(nx):
        for j in range(ny):
            if i == 0 or j == 0 or i == nx - 1 or j == ny - 1:
                out[i, j] = v[i, j]
                continue
            c = v[i, j]
            vx = (v[i + 1, j] - v[i - 1, j]) * inv2h
            vy = (v[i, j + 1] - v[i, j - 1]) * inv2h
            vxx = (v[i + 1, j] - 2.0 * c + v[i - 1, j]) * invh2
            vyy = (v[i, j + 1] - 2.0 * c + v[i, j - 1]) * invh2
            vxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) * 0.25 * invh2
            g2 = vx * vx + vy * vy
            hgg = vx * vx * vxx + 2.0 * vx * vy * vxy + vy * vy * vyy
            excluded = hgg / (g2 + delta2)
            if blend2 > 0.0:
                scale = blend2 * h * h * (vxx * vxx + vyy * vyy + 2.0 * vxy * vxy)
                if scale > 0.0:
                    w = g2 / (g2 + scale)
                    excluded = w * excluded + (1.0 - w) * _min_eig2(vxx, vxy, vyy)
            new = c + dt * (vxx + vyy - excluded)
            if not np.isfinite(new):
                bad += 1
            out[i, j] = new
            if interior[i, j]:
                if c > 0.0 and new <= 0.0:
                    if np.isnan(u[i, j]):
                        u[i, j] = t + dt * c / (c - new)
                    else:
                        recross += 1
                if new > 0.0:
                    positive += 1
    return positive, recross, bad


@numba.njit(cache=True, parallel=True)
def _step3d(v, out, u, interior, t, dt, h, delta2, blend2):
    nx, ny, nz = v.shape
    inv2h = 1.0 / (2.0 * h)
    invh2 = 1.0 / (h * h)
    q = 0.25 * invh2
    positive = 0
    recross = 0
    bad = 0
    for i in numba.prange(nx):
        for j in range(ny):
            for k in range(nz):
                if i == 0 or j == 0 or k == 0 or i == nx - 1 or j == ny - 1 or k == nz - 1:
                    out[i, j, k] = v[i, j, k]
                    continue
                c = v[i, j, k]
                vx = (v[i + 1, j, k] - v[i - 1, j, k]) * inv2h
                vy = (v[i, j + 1, k] - v[i, j - 1, k]) * inv2h
                vz = (v[i, j, k + 1] - v[i, j, k - 1]) * inv2h
                vxx = (v[i + 1, j, k] - 2.0 * c + v[i - 1, j, k]) * invh2
                vyy = (v[i, j + 1, k] - 2.0 * c + v[i, j - 1, k]) * invh2
                vzz = (v[i, j, k + 1] - 2.0 * c + v[i, j, k - 1]) * invh2
                vxy = (v[i + 1, j + 1, k] - v[i + 1, j - 1, k] - v[i - 1, j + 1, k] + v[i - 1, j - 1, k]) * q
                vxz = (v[i + 1, j, k + 1] - v[i + 1, j, k - 1] - v[i - 1, j, k + 1] + v[i - 1, j, k - 1]) * q
                vyz = (v[i, j + 1, k + 1] - v[i, j + 1, k - 1] - v[i, j - 1, k + 1] + v[i, j - 1, k - 1]) * q
                g2 = vx * vx + vy * vy + vz * vz
                hgg = (vx * vx * vxx + vy * vy * vyy + vz * vz * vzz
                       + 2.0 * (vx * vy * vxy + vx * vz * vxz + vy * vz * vyz))
                excluded = hgg / (g2 + delta2)
                if blend2 > 0.0:
                    scale = blend2 * h * h * (vxx * vxx + vyy * vyy + vzz * vzz
                                              + 2.0 * (vxy * vxy + vxz * vxz + vyz * vyz))
                    if scale > 0.0:
                        w = g2 / (g2 + scale)
                        excluded = w * excluded + (1.0 - w) * _min_eig3(vxx, vxy, vxz, vyy, vyz, vzz)
                new = c + dt * (vxx + vyy + vzz - excluded)
                if not np.isfinite(new):
                    bad += 1
                out[i, j, k] = new
                if interior[i, j, k]:
                    if c > 0.0 and new <= 0.0:
                        if np.isnan(u[i, j, k]):
                            u[i, j, k] = t + dt * c / (c - new)
                        else:
                            recross += 1
                    if new > 0.0:
                        positive += 1
    return positive, recross, bad


def _advance(v, out, u, interior, t, dt, h, delta_reg, critical_blend):
    kernel = _step2d if v.ndim == 2 else _step3d
    return kernel(v, out, u, interior, t, dt, h, delta_reg**2, critical_blend**2)


def evolution_speed(v: ScalarField, delta_reg: float = DEFAULT_DELTA_REG, critical_blend: float = 0.5) -> np.ndarray:
    """Right-hand side of the level-set update, computed with numpy (reference for the kernels)."""
    grad = gradient_field(v)
    hess = hessian_field(v)
    g2 = np.einsum("...i,...i->...", grad, grad)
    excluded = np.einsum("...i,...ij,...j->...", grad, hess, grad) / (g2 + delta_reg**2)
    if critical_blend > 0:
        h = v.grid.spacing
        scale = (critical_blend * h) ** 2 * np.einsum("...ij,...ij->...", hess, hess)
        inner = np.isfinite(g2)
        lam = np.full(g2.shape, np.nan)
        lam[inner] = np.linalg.eigvalsh(hess[inner])[:, 0]
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(scale > 0, g2 / (g2 + scale), 1.0)
        excluded = w * excluded + (1 - w) * np.where(scale > 0, lam, 0.0)
    return np.trace(hess, axis1=-2, axis2=-1) - excluded


def evolve_step(v: ScalarField, dt: float, delta_reg: float = DEFAULT_DELTA_REG,
                critical_blend: float = 0.5) -> ScalarField:
    """One explicit Euler step; the one-cell rind is copied unchanged.

    With ``critical_blend=0`` this is exactly ``v + dt * one_laplacian(v)``.
    """
    h = v.grid.spacing
    if dt > 0.25 * h * h * (1 + 1e-12):
        raise ConfigError(f"dt = {dt:g} exceeds 0.25 h^2 = {0.25 * h * h:g}")
    src = np.ascontiguousarray(v.values)
    out = np.empty_like(src)
    scratch = np.full(src.shape, np.nan)
    _, _, bad = _advance(src, out, scratch, np.zeros(src.shape, bool), 0.0, dt, h, delta_reg, critical_blend)
    if bad:
        raise NumericalInstabilityError(f"{bad} non-finite values after update", step=0)
    return v.with_values(out)


# ----------------------------------------------------------------------------
# redistancing by fast sweeping

@numba.njit(cache=True)
def _sweep2d(d, fixed, h):
    nx, ny = d.shape
    for order in range(4):
        si = 1 if order % 2 == 0 else -1
        sj = 1 if order < 2 else -1
        for ii in range(nx):
            i = ii if si > 0 else nx - 1 - ii
            for jj in range(ny):
                j = jj if sj > 0 else ny - 1 - jj
                if fixed[i, j]:
                    continue
                a = min(d[i - 1, j] if i > 0 else np.inf, d[i + 1, j] if i < nx - 1 else np.inf)
                b = min(d[i, j - 1] if j > 0 else np.inf, d[i, j + 1] if j < ny - 1 else np.inf)
                if abs(a - b) >= h:
                    cand = min(a, b) + h
                else:
                    cand = 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) ** 2))
                if cand < d[i, j]:
                    d[i, j] = cand


@numba.njit(cache=True)
def _solve_sorted3(a, b, c, h):
    # sorted a <= b <= c; Godunov update for |grad d| = 1
    x = a + h
    if x <= b:
        return x
    x = 0.5 * (a + b + math.sqrt(max(2.0 * h * h - (a - b) ** 2, 0.0)))
    if x <= c:
        return x
    s = a + b + c
    disc = s * s - 3.0 * (a * a + b * b + c * c - h * h)
    return (s + math.sqrt(max(disc, 0.0))) / 3.0


@numba.njit(cache=True)
def _sweep3d(d, fixed, h):
    nx, ny, nz = d.shape
    for order in range(8):
        si = 1 if order & 1 == 0 else -1
        sj = 1 if order & 2 == 0 else -1
        sk = 1 if order & 4 == 0 else -1
        for ii in range(nx):
            i = ii if si > 0 else nx - 1 - ii
            for jj in range(ny):
                j = jj if sj > 0 else ny - 1 - jj
                for kk in range(nz):
                    k = kk if sk > 0 else nz - 1 - kk
                    if fixed[i, j, k]:
                        continue
                    a = min(d[i - 1, j, k] if i > 0 else np.inf, d[i + 1, j, k] if i < nx - 1 else np.inf)
                    b = min(d[i, j - 1, k] if j > 0 else np.inf, d[i, j + 1, k] if j < ny - 1 else np.inf)
                    c = min(d[i, j, k - 1] if k > 0 else np.inf, d[i, j, k + 1] if k < nz - 1 else np.inf)
                    if a > b:
                        a, b = b, a
                    if b > c:
                        b, c = c, b
                    if a > b:
                        a, b = b, a
                    cand = _solve_sorted3(a, b, c, h)
                    if cand < d[i, j, k]:
                        d[i, j, k] = cand


def _interface_seed(v: np.ndarray, h: float):
    """Distance of nodes adjacent to a sign change, from edge crossings (exact for planes)."""
    inv_sq = np.zeros(v.shape)
    for axis in range(v.ndim):
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a, b = v[tuple(lo)], v[tuple(hi)]
        cross = (a > 0) != (b > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(cross, a / (a - b), np.nan)
        da = np.where(cross, theta * h, np.inf)
        db = np.where(cross, (1 - theta) * h, np.inf)
        # per axis keep the nearest crossing on either side
        best = np.full(v.shape, np.inf)
        best[tuple(lo)] = np.minimum(best[tuple(lo)], da)
        side = np.full(v.shape, np.inf)
        side[tuple(hi)] = db
        best = np.minimum(best, side)
        with np.errstate(divide="ignore"):
            inv_sq += np.where(np.isfinite(best), 1.0 / np.maximum(best, 1e-12 * h) ** 2, 0.0)
    seeded = inv_sq > 0
    dist = np.full(v.shape, np.inf)
    dist[seeded] = 1.0 / np.sqrt(inv_sq[seeded])
    dist[v == 0] = 0.0
    seeded |= v == 0
    return dist, seeded


def redistance(v: ScalarField, sweeps: int = 2) -> ScalarField:
    """Signed distance with the same zero set, by fast sweeping from the interface."""
    values = np.asarray(v.values, float)
    if not (np.any(values > 0) and np.any(values <= 0)):
        raise DegenerateFieldError("field has no sign change; nothing to redistance")
    h = v.grid.spacing
    dist, fixed = _interface_seed(values, h)
    dist = np.ascontiguousarray(dist)
    sweep = _sweep2d if values.ndim == 2 else _sweep3d
    for _ in range(sweeps):
        sweep(dist, fixed, h)
    return v.with_values(np.where(values > 0, dist, -dist))


# ----------------------------------------------------------------------------
# driver

def check_setup(surface: ImplicitSurface, grid: GridSpec, v0: np.ndarray) -> list[str]:
    """Validate padding and resolution; returns warnings, raises on hard failures."""
    warns = []
    if surface.dimension != grid.dimension:
        raise ConfigError("surface and grid dimensions differ")
    inside = v0 > 0
    if not inside.any():
        raise ConfigError("no grid node lies inside the initial surface")
    rind = ~grid.interior_mask(1)
    if np.any(inside & rind):
        raise ConfigError("initial surface reaches the grid boundary")
    idx = np.argwhere(inside)
    lo = grid.point(idx.min(axis=0))
    hi = grid.point(idx.max(axis=0))
    gap = np.minimum(lo - np.asarray(grid.origin), grid.upper - hi)
    need = 0.1 * 0.5 * (hi - lo + grid.spacing)
    if np.any(gap < need):
        warns.append(f"padding {gap.round(4).tolist()} is below 10% of the surface half-extent {need.round(4).tolist()}")
    cells = 2 * surface.min_feature() / grid.spacing
    if cells < 6:
        warns.append(f"thinnest feature spans only {cells:.1f} cells (want >= 6)")
    return warns


def solve_arrival(surface: ImplicitSurface, grid: GridSpec, opts: SolverOptions | None = None,
                  progress=None) -> ArrivalResult:
    """Evolve the level-set function until the front has swept every interior node."""
    opts = opts or SolverOptions()
    h = grid.spacing
    v = np.ascontiguousarray(surface.signed_distance(grid.coordinates()), dtype=float)
    warns = check_setup(surface, grid, v)
    for w in warns:
        log.warning(w)

    interior = (v > 0) & grid.interior_mask(1)
    if opts.t_max is None:
        lo, hi = surface.bounding_box()
        t_max = 2.0 * float(np.sum((hi - lo) ** 2))
    else:
        t_max = opts.t_max
    dt = opts.cfl * h * h
    u = np.full(grid.counts, np.nan)
    out = np.empty_like(v)
    snapshots = {}
    pending = list(opts.record_snapshots)
    t = 0.0
    step = 0
    recross_total = 0
    while True:
        while pending and pending[0] <= t + 1e-15:
            snapshots[pending.pop(0)] = ScalarField(grid, v.copy(), "v")
        positive, recross, bad = _advance(v, out, u, interior, t, dt, h, opts.delta_reg, opts.critical_blend)
        step += 1
        t += dt
        if bad:
            raise NumericalInstabilityError(f"{bad} non-finite values in level-set update", step=step)
        recross_total += recross
        v, out = out, v
        if opts.redistance_every and step % opts.redistance_every == 0 and np.any(v > 0):
            v = np.ascontiguousarray(redistance(ScalarField(grid, v)).values)
        if progress is not None and step % 1000 == 0:
            progress(step, t, positive)
        if positive == 0:
            break
        if t >= t_max:
            msg = f"t_max = {t_max:g} reached with {positive} interior nodes not yet arrived"
            warns.append(msg)
            log.warning(msg)
            break
    if recross_total:
        warns.append(f"{recross_total} nodes crossed zero more than once")
    arrived = np.isfinite(u)
    ext = float(np.max(u[arrived])) if arrived.any() else float("nan")
    log.info("level-set solve: %d steps, t = %.5f, extinction %.5f", step, t, ext)
    return ArrivalResult(
        u=ScalarField(grid, u, "u"),
        arrived=Mask(grid, arrived),
        initial_interior=Mask(grid, interior),
        steps_taken=step,
        extinction_time=ext,
        final_time=t,
        recrossings=recross_total,
        warnings=warns,
        snapshots=snapshots,
    )
