"""Value iteration for the Paul-Carol exit game.

Paul stands at ``x`` inside the domain and names a direction line ``v``;
Carol picks the orientation ``b = +-1`` and Paul moves by ``s * b * v``. Each
move costs ``eps^2``. The value ``u_eps`` is the fixed point of

    T[f](x) = eps^2 + min_v max(f(x + s v), f(x - s v)),   f = 0 outside the domain,

reached by iterating from ``f = 0``. With ``s = sqrt(2) * eps`` the value
converges to the arrival time of mean curvature flow as ``eps -> 0``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numba
import numpy as np
from scipy import ndimage

from .errors import ConfigError, ContractError
from .grid import GridSpec, Mask, ScalarField, interpolate_many
from .oracles import ImplicitSurface

log = logging.getLogger(__name__)

DEFAULT_STEP_FACTOR = math.sqrt(2.0)


@dataclass
class GameOptions:
    epsilon: float
    directions: int = 32
    tol: float | None = None
    max_iter: int = 100_000
    value_cap: float | None = None
    step_factor: float = DEFAULT_STEP_FACTOR
    tangent_lines: int | None = None
    guided_passes: int = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.directions < 1:
            raise ConfigError("at least one direction line is required")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.value_cap is not None and not self.value_cap > 0:
            raise ConfigError("value_cap must be positive")
        if not self.step_factor > 0:
            raise ConfigError("step_factor must be positive")
        if self.guided_passes < 1:
            raise ConfigError("guided_passes must be >= 1")
        if self.tangent_lines is not None and self.tangent_lines < 0:
            raise ConfigError("tangent_lines must be >= 0")

    def tangent_count(self, dimension: int) -> int:
        """Extra lines per node tangent to the iterate's level set (0 = fixed sample only)."""
        if self.tangent_lines is None:
            return 1 if dimension == 2 else 4
        if dimension == 2:
            return min(self.tangent_lines, 1)
        return self.tangent_lines

    @property
    def step(self) -> float:
        return self.step_factor * self.epsilon

    @property
    def tolerance(self) -> float:
        return 1e-3 * self.epsilon ** 2 if self.tol is None else self.tol

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GameOptions":
        return cls(**data)


@dataclass
class GameResult:
    u_eps: ScalarField
    iterations: int
    converged: bool
    diverged_mask: Mask
    options: GameOptions
    warnings: list[str] = field(default_factory=list)
    pass_changes: list[float] = field(default_factory=list)

    @property
    def diverged(self) -> bool:
        return bool(self.diverged_mask.flags.any())

    @property
    def inconclusive(self) -> bool:
        return not self.converged and not self.diverged

    def value_at(self, point) -> float:
        from .grid import interpolate
        return interpolate(self.u_eps, point)


def direction_set(dimension: int, m: int) -> np.ndarray:
    """Deterministic unit direction lines: equal angles on [0, pi) in 2D, a Fibonacci half-sphere in 3D."""
    if dimension == 2:
        theta = np.pi * np.arange(m) / m
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if dimension == 3:
        i = np.arange(m) + 0.5
        z = i / m
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - math.sqrt(5.0)) * np.arange(m)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    raise ConfigError(f"unsupported dimension {dimension}")


def recommended_directions(dimension: int) -> int:
    return 8 if dimension == 2 else 32


def _tangent_frames(normal: np.ndarray, count: int) -> np.ndarray:
    """``count`` unit lines spanning the plane orthogonal to each normal, shape (N, count, d)."""
    if normal.shape[1] == 2:
        return np.stack([-normal[:, 1], normal[:, 0]], axis=-1)[:, None, :]
    helper = np.where(np.abs(normal[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(normal, e1)
    theta = np.pi * np.arange(count) / count
    return np.cos(theta)[None, :, None] * e1[:, None, :] + np.sin(theta)[None, :, None] * e2[:, None, :]


def _corners(d: int) -> np.ndarray:
    return np.array(list(product((0, 1), repeat=d)), dtype=np.int64)


def _strides(grid: GridSpec) -> np.ndarray:
    return np.array([int(np.prod(grid.counts[a + 1:])) for a in range(grid.dimension)], dtype=np.int64)


@dataclass
class _Stencils:
    nodes: np.ndarray      # flat indices of nodes inside the domain
    pos: np.ndarray        # their coordinates
    ok: np.ndarray         # (m, 2, N) landing point inside the domain
    offsets: np.ndarray    # (m, 2, 2^d) flat index offsets of the interpolation cell
    weights: np.ndarray    # (m, 2, 2^d) multilinear weights


@dataclass
class _GuidedStencils:
    has: np.ndarray        # (N,) node has guided lines
    ok: np.ndarray         # (N, L, 2)
    index: np.ndarray      # (N, L, 2, 2^d) absolute flat indices
    weights: np.ndarray    # (N, L, 2, 2^d)


def _build_stencils(domain: ImplicitSurface, grid: GridSpec, dirs: np.ndarray, step: float) -> _Stencils:
    d = grid.dimension
    h = grid.spacing
    coords = grid.coordinates().reshape(-1, d)
    nodes = np.flatnonzero(domain.value(coords) > 0)
    pos = coords[nodes]
    strides = _strides(grid)
    corners = _corners(d)
    m = len(dirs)
    ok = np.zeros((m, 2, len(nodes)), dtype=np.bool_)
    offsets = np.zeros((m, 2, len(corners)), dtype=np.int64)
    weights = np.zeros((m, 2, len(corners)))
    for j, v in enumerate(dirs):
        for b, sign in enumerate((1.0, -1.0)):
            shift = sign * step * v
            ok[j, b] = domain.value(pos + shift) > 0
            cell = shift / h
            base = np.floor(cell)
            frac = cell - base
            for c, corner in enumerate(corners):
                offsets[j, b, c] = int(((base + corner) * strides).sum())
                weights[j, b, c] = float(np.prod(np.where(corner == 1, frac, 1.0 - frac)))
    return _Stencils(nodes, pos, ok, offsets, weights)


def _build_guided(domain: ImplicitSurface, grid: GridSpec, st: _Stencils, guide: np.ndarray,
                  step: float, count: int) -> _GuidedStencils:
    """Per-node lines tangent to the level sets of ``guide``, frozen for one value-iteration pass."""
    d = grid.dimension
    n = len(st.nodes)
    corners = _corners(d)
    if count == 0:
        return _GuidedStencils(np.zeros(n, np.bool_), np.zeros((n, 0, 2), np.bool_),
                               np.zeros((n, 0, 2, len(corners)), np.int64), np.zeros((n, 0, 2, len(corners))))
    grad = np.stack(np.gradient(guide.reshape(grid.counts), grid.spacing), axis=-1).reshape(-1, d)[st.nodes]
    norm = np.linalg.norm(grad, axis=-1)
    has = norm > 1e-12 * max(1.0, float(norm.max(initial=0.0)))
    normal = np.where(has[:, None], grad / np.where(has, norm, 1.0)[:, None], np.eye(d)[0])
    lines = _tangent_frames(normal, count)
    n_lines = lines.shape[1]
    ok = np.zeros((n, n_lines, 2), np.bool_)
    index = np.zeros((n, n_lines, 2, len(corners)), np.int64)
    weights = np.zeros((n, n_lines, 2, len(corners)))
    strides = _strides(grid)
    upper = np.asarray(grid.counts) - 1
    for j in range(n_lines):
        for b, sign in enumerate((1.0, -1.0)):
            target = st.pos + sign * step * lines[:, j]
            ok[:, j, b] = has & (domain.value(target) > 0)
            cell = np.clip((target - np.asarray(grid.origin)) / grid.spacing, 0, upper)
            base = np.minimum(np.floor(cell), upper - 1)
            frac = cell - base
            for c, corner in enumerate(corners):
                index[:, j, b, c] = ((base + corner) * strides).sum(axis=-1).astype(np.int64)
                weights[:, j, b, c] = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=-1)
    return _GuidedStencils(has, ok, index, weights)


@numba.njit(parallel=True, cache=True)
def _bellman(f, out, nodes, ok, offsets, weights, eps2, frozen, g_has, g_ok, g_index, g_weights):
    m = offsets.shape[0]
    nc = offsets.shape[2]
    n_lines = g_ok.shape[1]
    for a in numba.prange(nodes.shape[0]):
        i = nodes[a]
        if frozen[i]:
            out[i] = f[i]
            continue
        best = np.inf
        for j in range(m):
            worst = 0.0
            for b in range(2):
                if ok[j, b, a]:
                    val = 0.0
                    for c in range(nc):
                        val += weights[j, b, c] * f[i + offsets[j, b, c]]
                    if val > worst:
                        worst = val
            if worst < best:
                best = worst
        if g_has[a]:
            for j in range(n_lines):
                worst = 0.0
                for b in range(2):
                    if g_ok[a, j, b]:
                        val = 0.0
                        for c in range(nc):
                            val += g_weights[a, j, b, c] * f[g_index[a, j, b, c]]
                        if val > worst:
                            worst = val
                if worst < best:
                    best = worst
        out[i] = eps2 + best


def validate_setup(domain: ImplicitSurface, grid: GridSpec, opts: GameOptions) -> tuple[list[str], float]:
    """Check resolution, epsilon versus the domain's inradius and containment; returns warnings and the inradius."""
    if domain.dimension != grid.dimension:
        raise ConfigError("domain and grid dimensions differ")
    if opts.step < 2 * grid.spacing:
        raise ConfigError(f"step {opts.step:.4g} is below two grid cells ({2 * grid.spacing:.4g})")
    rind = ~grid.interior_mask(1)
    phi = domain.value(grid.coordinates())
    if np.any(phi[rind] > 0):
        raise ConfigError("domain reaches the grid boundary")
    inradius = float(np.max(domain.signed_distance(grid.coordinates())))
    if not opts.epsilon < inradius / 4:
        raise ConfigError(f"epsilon {opts.epsilon:g} must be below a quarter of the inradius ({inradius:.4g})")
    warns = []
    if opts.directions < recommended_directions(grid.dimension):
        warns.append(f"{opts.directions} direction lines is below the recommended "
                     f"{recommended_directions(grid.dimension)} in {grid.dimension}D")
    return warns, inradius


def _guide_values(domain: ImplicitSurface, grid: GridSpec, guide) -> np.ndarray:
    if guide is None:
        return domain.value(grid.coordinates()).reshape(-1)
    values = guide.values if isinstance(guide, ScalarField) else np.asarray(guide, float)
    return values.reshape(-1)


def bellman_update(f: ScalarField, domain: ImplicitSurface, opts: GameOptions, guide=None) -> ScalarField:
    """One application of the game operator to ``f``; nodes outside the domain return 0.

    ``guide`` supplies the field whose level sets orient the extra tangent
    lines (default: the domain's implicit function).
    """
    grid = f.grid
    if opts.step < 2 * grid.spacing:
        raise ConfigError(f"step {opts.step:.4g} is below two grid cells ({2 * grid.spacing:.4g})")
    if np.any(f.values < 0):
        raise ContractError("game iterates must be nonnegative")
    st = _build_stencils(domain, grid, direction_set(grid.dimension, opts.directions), opts.step)
    gs = _build_guided(domain, grid, st, _guide_values(domain, grid, guide), opts.step,
                       opts.tangent_count(grid.dimension))
    flat = np.zeros(grid.size)
    flat[st.nodes] = f.values.reshape(-1)[st.nodes]
    out = np.zeros(grid.size)
    _bellman(flat, out, st.nodes, st.ok, st.offsets, st.weights, opts.epsilon ** 2,
             np.zeros(grid.size, dtype=np.bool_), gs.has, gs.ok, gs.index, gs.weights)
    return f.with_values(out.reshape(grid.counts))


def _value_iteration(st, gs, grid, opts, cap, progress, pass_index):
    f = np.zeros(grid.size)
    out = np.zeros(grid.size)
    frozen = np.zeros(grid.size, dtype=np.bool_)
    eps2 = opts.epsilon ** 2
    tol = opts.tolerance
    converged = False
    it = 0
    while it < opts.max_iter:
        _bellman(f, out, st.nodes, st.ok, st.offsets, st.weights, eps2, frozen, gs.has, gs.ok, gs.index, gs.weights)
        it += 1
        inc = out[st.nodes] - f[st.nodes]
        if inc.min() < 0:
            raise ContractError(f"value iteration lost monotonicity at iteration {it}")
        frozen |= out > cap
        change = float(inc[~frozen[st.nodes]].max(initial=0.0))
        f, out = out, f
        if progress is not None:
            progress(pass_index, it, change)
        if change < tol:
            converged = not frozen.any()
            break
    return f, it, converged, frozen


def solve_game(domain: ImplicitSurface, grid: GridSpec, opts: GameOptions, progress=None) -> GameResult:
    """Iterate the game operator from zero until the sup-norm change drops below ``opts.tolerance``.

    Besides the fixed direction sample, Paul may use lines tangent to the
    level sets of a guide field. The guide is the domain's implicit function
    on the first pass and the previous pass's ``u_eps`` afterwards; it stays
    frozen within a pass so the operator is monotone and iterates never
    decrease. Nodes whose value exceeds the cap are flagged and frozen.
    """
    warns, _ = validate_setup(domain, grid, opts)
    for w in warns:
        log.warning(w)
    lo, hi = domain.bounding_box()
    cap = opts.value_cap if opts.value_cap is not None else 10.0 * float(np.sum((hi - lo) ** 2))
    st = _build_stencils(domain, grid, direction_set(grid.dimension, opts.directions), opts.step)
    count = opts.tangent_count(grid.dimension)
    passes = opts.guided_passes if count > 0 else 1
    guide = _guide_values(domain, grid, None)
    total = 0
    history = []
    f = None
    for k in range(passes):
        gs = _build_guided(domain, grid, st, guide, opts.step, count)
        prev = f
        f, it, converged, frozen = _value_iteration(st, gs, grid, opts, cap, progress, k)
        total += it
        if prev is not None:
            history.append(float(np.max(np.abs(f - prev))))
        if frozen.any():
            break
        # u_eps is a staircase in the level direction; smooth over one step before taking normals
        guide = ndimage.gaussian_filter(f.reshape(grid.counts), opts.step / grid.spacing).reshape(-1)
    if frozen.any():
        warns.append(f"{int(frozen.sum())} nodes exceeded the value cap {cap:g}")
    elif not converged:
        warns.append(f"no convergence after {total} iterations")
    u = ScalarField(grid, f.reshape(grid.counts), "u_eps")
    return GameResult(u, total, converged, Mask(grid, frozen.reshape(grid.counts)), opts, warns, history)


@dataclass
class SweepRow:
    epsilon: float
    value: float
    iterations: int
    converged: bool
    diverged: bool


def epsilon_sweep(domain: ImplicitSurface, grid: GridSpec, epsilons, base: GameOptions, probe) -> tuple[list[SweepRow], list[GameResult]]:
    """Solve the game for each epsilon and record ``u_eps`` at ``probe``."""
    rows, results = [], []
    for eps in epsilons:
        opts = GameOptions(**dict(base.to_dict(), epsilon=float(eps)))
        res = solve_game(domain, grid, opts)
        rows.append(SweepRow(float(eps), res.value_at(probe), res.iterations, res.converged, res.diverged))
        results.append(res)
    return rows, results
