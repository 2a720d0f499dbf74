"""Checks of the regularity structure of a computed arrival-time field.

Everything here is read-only analysis of an :class:`ArrivalResult`: locating
critical points, matching their Hessians against the cylinder spectra
``{-1/k (k+1 times), 0 (n-k times)}``, residuals of the classical equation
``Delta_1 u = -1`` and of its critical-point form, a numerical viscosity
test, tangent-flow profile fits, axial gradient decay and blow-up rates.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ContractError, InsufficientSamplingError
from .grid import (DEFAULT_DELTA_REG, ScalarField, gradient_field, hessian_field,
                   interpolate_many, one_laplacian_from)
from .levelset import ArrivalResult

SYMMETRY_TOL = 1e-10


# ----------------------------------------------------------------------------
# field-level helpers

@dataclass
class FieldDerivatives:
    """Gradient and Hessian of ``u`` on nodes whose whole 3^d stencil arrived."""

    valid: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    @property
    def grad_norm(self) -> np.ndarray:
        return np.linalg.norm(self.gradient, axis=-1)


def derivatives(result: ArrivalResult) -> FieldDerivatives:
    u = result.u
    d = u.grid.dimension
    arrived = result.arrived.flags & np.isfinite(u.values)
    valid = ndimage.binary_erosion(arrived, structure=np.ones((3,) * d, bool), border_value=0)
    filled = ScalarField(u.grid, np.where(arrived, u.values, 0.0))
    grad = gradient_field(filled)
    hess = hessian_field(filled)
    grad[~valid] = np.nan
    hess[~valid] = np.nan
    return FieldDerivatives(valid, grad, hess)


def _as_result(obj) -> ArrivalResult:
    if isinstance(obj, ArrivalResult):
        return obj
    if isinstance(obj, ScalarField):
        return ArrivalResult.from_field(obj)
    raise TypeError(f"expected ArrivalResult or ScalarField, got {type(obj).__name__}")


# ----------------------------------------------------------------------------
# spectrum classification

def target_spectrum(k: int, n: int) -> np.ndarray:
    """Sorted eigenvalues of the cylinder S^k x R^{n-k} arrival-time Hessian."""
    return np.array([-1.0 / k] * (k + 1) + [0.0] * (n - k))


def classify_critical(hessian, n: int) -> tuple[int | None, float]:
    """Best cylinder index ``k`` for a critical-point Hessian and its max eigenvalue deviation.

    Returns ``(None, residual)`` when even the best match deviates by more
    than half the spectral gap ``1/k``.
    """
    hess = np.asarray(hessian, float)
    if hess.shape != (n + 1, n + 1):
        raise ContractError(f"Hessian must be {n + 1}x{n + 1}, got {hess.shape}")
    scale = max(1.0, float(np.max(np.abs(hess))))
    if np.max(np.abs(hess - hess.T)) > SYMMETRY_TOL * scale:
        raise ContractError("Hessian is not symmetric")
    eig = np.linalg.eigvalsh(hess)
    best_k, best = None, math.inf
    for k in range(1, n + 1):
        res = float(np.max(np.abs(eig - target_spectrum(k, n))))
        if res < best:
            best_k, best = k, res
    if best > 0.5 / best_k:
        return None, best
    return best_k, best


def condition_b(hessian) -> tuple[float, np.ndarray, int]:
    """Critical-point form of the equation: ``min_v |tr H - H(v, v) + 1|`` over unit eigenvectors.

    Returns the residual, the minimizing eigenvector and its position in the
    ascending eigenvalue order.
    """
    hess = np.asarray(hessian, float)
    eig, vec = np.linalg.eigh(hess)
    res = np.abs(np.trace(hess) - eig + 1.0)
    i = int(np.argmin(res))
    return float(res[i]), vec[:, i], i


def check_classical(u, index: Sequence[int], critical: bool, delta_reg: float = DEFAULT_DELTA_REG) -> float:
    """Residual of ``Delta_1 u = -1`` at a regular node, or of its eigenvector form at a critical one."""
    from .grid import gradient_cd, hessian_cd

    field_ = u.u if isinstance(u, ArrivalResult) else u
    hess = hessian_cd(field_, index)
    if critical:
        return condition_b(hess)[0]
    return float(abs(one_laplacian_from(gradient_cd(field_, index), hess, delta_reg) + 1.0))


# ----------------------------------------------------------------------------
# critical points

@dataclass
class CriticalPointRecord:
    index: tuple[int, ...]
    location: np.ndarray
    value: float
    grad_norm: float
    hessian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    classified_k: int | None
    spectrum_residual: float
    equation_residual_b: float
    b_direction: np.ndarray
    b_angle_deg: float

    def __post_init__(self):
        eig = np.linalg.eigvalsh(self.hessian)
        if not np.allclose(eig, self.eigenvalues, atol=1e-10):
            raise ContractError("stored eigenvalues do not match the stored Hessian")

    @property
    def n(self) -> int:
        return len(self.location) - 1

    def shrinking_basis(self) -> np.ndarray:
        """Columns spanning the ``-1/k`` eigenspace (all directions when unclassified as k<n)."""
        k = self.classified_k if self.classified_k is not None else self.n
        return self.eigenvectors[:, : k + 1]

    def axis_basis(self) -> np.ndarray:
        k = self.classified_k if self.classified_k is not None else self.n
        return self.eigenvectors[:, k + 1:]

    def to_dict(self) -> dict:
        return {
            "index": list(self.index),
            "location": self.location.tolist(),
            "value": self.value,
            "grad_norm": self.grad_norm,
            "hessian": self.hessian.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "classified_k": self.classified_k,
            "spectrum_residual": self.spectrum_residual,
            "equation_residual_b": self.equation_residual_b,
            "b_direction": self.b_direction.tolist(),
            "b_angle_deg": self.b_angle_deg,
        }


def _angle_to_subspace(v: np.ndarray, basis: np.ndarray) -> float:
    if basis.shape[1] == 0:
        return 90.0
    proj = basis @ (basis.T @ v)
    cos = min(1.0, float(np.linalg.norm(proj)) / float(np.linalg.norm(v)))
    return math.degrees(math.acos(cos))


def make_record(result: ArrivalResult, index: Sequence[int], derivs: FieldDerivatives | None = None) -> CriticalPointRecord:
    derivs = derivs or derivatives(result)
    index = tuple(int(i) for i in index)
    if not derivs.valid[index]:
        raise ContractError(f"node {index} does not have a fully arrived stencil")
    grid = result.grid
    n = grid.dimension - 1
    hess = derivs.hessian[index]
    eig, vec = np.linalg.eigh(hess)
    k, spec_res = classify_critical(hess, n)
    res_b, v_b, _ = condition_b(hess)
    kk = k if k is not None else n
    angle = _angle_to_subspace(v_b, vec[:, : kk + 1])
    return CriticalPointRecord(
        index=index,
        location=grid.point(index),
        value=float(result.u.values[index]),
        grad_norm=float(np.linalg.norm(derivs.gradient[index])),
        hessian=hess.copy(),
        eigenvalues=eig,
        eigenvectors=vec,
        classified_k=k,
        spectrum_residual=spec_res,
        equation_residual_b=res_b,
        b_direction=v_b,
        b_angle_deg=angle,
    )


def find_critical_points(result, threshold_factor: float = 2.0,
                         derivs: FieldDerivatives | None = None) -> list[CriticalPointRecord]:
    """Nodes with ``|grad u| < threshold_factor * h`` that minimize ``|grad u|`` over their 3^d block."""
    result = _as_result(result)
    derivs = derivs or derivatives(result)
    h = result.grid.spacing
    g = np.where(derivs.valid, derivs.grad_norm, np.inf)
    d = result.grid.dimension
    neighborhood_min = ndimage.minimum_filter(g, size=3, mode="constant", cval=np.inf)
    selected = derivs.valid & (g < threshold_factor * h) & (g <= neighborhood_min)
    return [make_record(result, tuple(idx), derivs) for idx in np.argwhere(selected)]


def critical_distance(result: ArrivalResult, records: list[CriticalPointRecord]) -> np.ndarray:
    """Euclidean distance of every node to the nearest detected critical point."""
    grid = result.grid
    if not records:
        return np.full(grid.counts, np.inf)
    seeds = np.ones(grid.counts, bool)
    for rec in records:
        seeds[rec.index] = False
    return ndimage.distance_transform_edt(seeds) * grid.spacing


@dataclass
class CircleFit:
    center: np.ndarray
    normal: np.ndarray
    radius: float
    max_deviation: float
    rms_deviation: float


def fit_circle(points) -> CircleFit:
    """Least-squares circle in 3D: best plane by SVD, then an algebraic circle fit inside it."""
    pts = np.asarray(points, float)
    if len(pts) < 3:
        raise InsufficientSamplingError("need at least three points to fit a circle")
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean)
    e1, e2, normal = vt
    xy = np.column_stack([(pts - mean) @ e1, (pts - mean) @ e2])
    a = np.column_stack([2 * xy, np.ones(len(xy))])
    b = (xy ** 2).sum(axis=1)
    (cx, cy, c0), *_ = np.linalg.lstsq(a, b, rcond=None)
    radius = math.sqrt(c0 + cx * cx + cy * cy)
    center = mean + cx * e1 + cy * e2
    rel = pts - center
    height = rel @ normal
    in_plane = np.linalg.norm(rel - np.outer(height, normal), axis=1)
    dev = np.hypot(in_plane - radius, height)
    return CircleFit(center, normal, radius, float(dev.max()), float(np.sqrt(np.mean(dev ** 2))))


# ----------------------------------------------------------------------------
# classical residuals and C^{1,1}

@dataclass
class ResidualStats:
    count: int
    median: float
    q95: float
    max: float
    grad_min: float
    exclusion: float
    spacing: float


def classical_residual_stats(result, records: list[CriticalPointRecord] | None = None,
                             grad_min: float = 0.2, exclusion_cells: float = 3.0,
                             delta_reg: float = DEFAULT_DELTA_REG,
                             derivs: FieldDerivatives | None = None) -> ResidualStats:
    """Quantiles of ``|Delta_1 u + 1|`` on the regular set away from the critical set."""
    result = _as_result(result)
    derivs = derivs or derivatives(result)
    if records is None:
        records = find_critical_points(result, derivs=derivs)
    h = result.grid.spacing
    mask = derivs.valid & (derivs.grad_norm >= grad_min)
    mask &= critical_distance(result, records) >= exclusion_cells * h
    if not mask.any():
        raise InsufficientSamplingError("regular sample set is empty")
    res = np.abs(one_laplacian_from(derivs.gradient[mask], derivs.hessian[mask], delta_reg) + 1.0)
    return ResidualStats(int(mask.sum()), float(np.median(res)), float(np.quantile(res, 0.95)),
                         float(res.max()), grad_min, exclusion_cells * h, h)


@dataclass
class CurvatureBounds:
    c11_bound: float
    pinching_max: float
    samples: int
    grad_min: float
    spacing: float


def pinching_and_c11(result, grad_min: float = 0.2, derivs: FieldDerivatives | None = None) -> CurvatureBounds:
    """Max Hessian norm on the regular set and max ``|A| / H`` (tangential Hessian norm)."""
    result = _as_result(result)
    derivs = derivs or derivatives(result)
    mask = derivs.valid & (derivs.grad_norm >= grad_min)
    if not mask.any():
        raise InsufficientSamplingError("regular sample set is empty")
    hess = derivs.hessian[mask]
    grad = derivs.gradient[mask]
    c11 = float(np.max(np.abs(np.linalg.eigvalsh(hess))))
    normal = grad / np.linalg.norm(grad, axis=-1, keepdims=True)
    d = hess.shape[-1]
    proj = np.eye(d) - normal[:, :, None] * normal[:, None, :]
    tangential = proj @ hess @ proj
    # |A| / H = |Hess restricted to grad^perp| since A = Hess_T / |grad u| and H = 1 / |grad u|
    pinch = float(np.max(np.abs(np.linalg.eigvalsh(tangential))))
    return CurvatureBounds(c11, pinch, int(mask.sum()), grad_min, result.grid.spacing)


# ----------------------------------------------------------------------------
# viscosity test

@dataclass
class ViscosityOutcome:
    kind: str            # "skipped", "sub", "super"
    satisfied: bool
    value: float


def viscosity_test(u: ScalarField, index: Sequence[int], grad, quad, radius_cells: int = 3,
                   tol: float = 0.05, grad_eps: float = 1e-10) -> ViscosityOutcome:
    """Touch ``u`` at a node with ``phi = u(x0) + p.dx + dx^T Q dx / 2`` and check the matching inequality.

    ``u - phi`` having a local max over the ball means phi touches from above
    and ``Delta_1 phi >= -1`` must hold (or its critical-point form when
    ``p = 0``); a local min requires the reversed inequalities.
    """
    grid = u.grid
    index = tuple(int(i) for i in index)
    d = grid.dimension
    h = grid.spacing
    p = np.asarray(grad, float)
    q = np.asarray(quad, float)
    offsets = _ball_offsets(d, radius_cells)
    nodes = np.asarray(index) + offsets
    if np.any(nodes < 0) or np.any(nodes >= np.asarray(grid.counts)):
        raise ContractError("viscosity ball leaves the grid")
    vals = u.values[tuple(nodes.T)]
    if not np.all(np.isfinite(vals)):
        raise ContractError("viscosity ball leaves the arrived region")
    dx = offsets * h
    phi = u.values[index] + dx @ p + 0.5 * np.einsum("ni,ij,nj->n", dx, q, dx)
    diff = (vals - phi) / np.einsum("ni,ni->n", dx, dx)
    scale = 1e-9 * max(1.0, float(np.max(np.abs(q))))
    is_max = bool(np.all(diff < -scale))
    is_min = bool(np.all(diff > scale))
    if not (is_max or is_min):
        return ViscosityOutcome("skipped", True, float("nan"))
    eig = np.linalg.eigvalsh(q)
    trace = float(np.trace(q))
    if np.linalg.norm(p) > grad_eps:
        value = trace - float(p @ q @ p) / float(p @ p)
        if is_max:
            return ViscosityOutcome("sub", value >= -1.0 - tol, value)
        return ViscosityOutcome("super", value <= -1.0 + tol, value)
    if is_max:
        # best |v| <= 1 for the sub-solution inequality drops the most negative eigenvalue
        value = trace - min(0.0, float(eig[0]))
        return ViscosityOutcome("sub", value >= -1.0 - tol, value)
    value = trace - max(0.0, float(eig[-1]))
    return ViscosityOutcome("super", value <= -1.0 + tol, value)


def _ball_offsets(d: int, radius: int) -> np.ndarray:
    rng = range(-radius, radius + 1)
    offs = np.array([o for o in product(rng, repeat=d) if 0 < sum(c * c for c in o) <= radius * radius])
    return offs


@dataclass
class ViscosityReport:
    index: tuple[int, ...]
    trials: int
    tested: int
    violations: int
    eta: float
    tol: float
    worst: float = float("nan")


def check_viscosity(u, index: Sequence[int], trial_count: int = 100, radius_cells: int = 3,
                    seed: int = 0, eta: float | None = None, tol: float = 0.05) -> ViscosityReport:
    """Random quadratic touching tests around the node's own second-order Taylor polynomial.

    Each trial perturbs the finite-difference Hessian by ``+-eta * S`` where
    ``S = I + R / 2`` for a random symmetric ``R`` of unit spectral norm, so the
    perturbation is definite and the sign picks a sub- or super-solution test.
    ``eta`` defaults to ``2 h``.
    """
    from .grid import gradient_cd, hessian_cd

    field_ = u.u if isinstance(u, ArrivalResult) else u
    grid = field_.grid
    index = tuple(int(i) for i in index)
    if not grid.is_interior(index, radius_cells):
        raise ContractError("viscosity ball leaves the grid")
    eta = 2.0 * grid.spacing if eta is None else eta
    rng = np.random.default_rng(seed)
    p = gradient_cd(field_, index)
    hess = hessian_cd(field_, index)
    d = grid.dimension
    tested = violations = 0
    worst = 0.0
    for _ in range(trial_count):
        a = rng.normal(size=(d, d))
        r = a + a.T
        s = np.eye(d) + 0.5 * r / np.max(np.abs(np.linalg.eigvalsh(r)))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        out = viscosity_test(field_, index, p, hess + sign * eta * s, radius_cells, tol)
        if out.kind == "skipped":
            continue
        tested += 1
        if not out.satisfied:
            violations += 1
            worst = max(worst, abs(out.value + 1.0))
    return ViscosityReport(index, trial_count, tested, violations, eta, tol, worst if violations else 0.0)


# ----------------------------------------------------------------------------
# tangent flow, axial decay, blow-up rate

def level_set_points(u: ScalarField, level: float, valid: np.ndarray | None = None) -> np.ndarray:
    """Crossings of ``{u = level}`` on grid edges.

    Each crossing is located with the parabola through the edge endpoints
    whose curvature is the mean of the two second differences along the edge
    (exact for quadratic ``u``); falls back to linear interpolation where the
    second differences are unavailable.
    """
    f = u.values - level
    grid = u.grid
    h = grid.spacing
    d = grid.dimension
    ok = np.isfinite(f) if valid is None else (valid & np.isfinite(f))
    pts = []
    for a in range(d):
        n_a = grid.counts[a]
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[a] = slice(0, n_a - 1)
        hi[a] = slice(1, n_a)
        f0, f1 = f[tuple(lo)], f[tuple(hi)]
        cross = ok[tuple(lo)] & ok[tuple(hi)] & ((f0 > 0) != (f1 > 0))
        second = np.full(f.shape, np.nan)
        inner = [slice(None)] * d
        inner[a] = slice(1, n_a - 1)
        m1 = [slice(None)] * d
        p1 = [slice(None)] * d
        m1[a] = slice(0, n_a - 2)
        p1[a] = slice(2, n_a)
        second[tuple(inner)] = f[tuple(p1)] - 2 * f[tuple(inner)] + f[tuple(m1)]
        curv = 0.5 * (second[tuple(lo)] + second[tuple(hi)])
        for idx in np.argwhere(cross):
            idx = tuple(idx)
            a0, a1, c = f0[idx], f1[idx], curv[idx]
            s = a0 / (a0 - a1)
            if np.isfinite(c) and c != 0.0:
                # a0 + (a1 - a0 - c/2) s + (c/2) s^2 = 0 on [0, 1]
                qa, qb, qc = 0.5 * c, a1 - a0 - 0.5 * c, a0
                disc = qb * qb - 4 * qa * qc
                if disc >= 0:
                    roots = [(-qb + sg * math.sqrt(disc)) / (2 * qa) for sg in (1, -1)]
                    roots = [r for r in roots if -1e-12 <= r <= 1 + 1e-12]
                    if roots:
                        s = min(roots, key=lambda r: abs(r - s))
            pts.append(grid.point(idx) + s * h * np.eye(d)[a])
    return np.array(pts).reshape(-1, d)


@dataclass
class ProfileFit:
    tau: float
    count: int
    mean_ratio: float
    spread: float
    min_ratio: float
    max_ratio: float


def tangent_flow_profile(result, point: CriticalPointRecord | Sequence[int], tau_list: Sequence[float],
                         window_factor: float = 2.5, derivs: FieldDerivatives | None = None) -> list[ProfileFit]:
    """Radial size of ``{u = u(p) - tau}`` near ``p`` in units of ``sqrt(tau)``; a k-cylinder gives sqrt(2k)."""
    result = _as_result(result)
    derivs = derivs or derivatives(result)
    rec = point if isinstance(point, CriticalPointRecord) else make_record(result, point, derivs)
    basis = rec.shrinking_basis()
    fits = []
    arrived = result.arrived.flags & np.isfinite(result.u.values)
    for tau in tau_list:
        pts = level_set_points(result.u, rec.value - tau, arrived)
        rel = pts - rec.location
        near = np.linalg.norm(rel, axis=-1) <= window_factor * math.sqrt(tau)
        if near.sum() < 10:
            raise InsufficientSamplingError(f"only {int(near.sum())} level-set points in the window at tau={tau:g}")
        ratio = np.linalg.norm(rel[near] @ basis, axis=-1) / math.sqrt(tau)
        fits.append(ProfileFit(float(tau), int(near.sum()), float(ratio.mean()), float(ratio.std()),
                               float(ratio.min()), float(ratio.max())))
    return fits


@dataclass
class AxisDecayRow:
    delta: float
    grad_norm: float
    ratio: float


def axis_decay(result, point: CriticalPointRecord | Sequence[int], axis_direction,
               delta_list: Sequence[float], max_angle_deg: float = 15.0,
               derivs: FieldDerivatives | None = None) -> list[AxisDecayRow]:
    """``|grad u(p + delta v)| / delta`` along a direction in the Hessian's zero eigenspace."""
    result = _as_result(result)
    derivs = derivs or derivatives(result)
    rec = point if isinstance(point, CriticalPointRecord) else make_record(result, point, derivs)
    v = np.asarray(axis_direction, float)
    v = v / np.linalg.norm(v)
    axis = rec.axis_basis()
    if axis.shape[1] == 0:
        raise ContractError("critical point has no axis (spherical type)")
    angle = _angle_to_subspace(v, axis)
    if angle > max_angle_deg:
        raise ContractError(f"direction is {angle:.1f} deg from the zero eigenspace (max {max_angle_deg})")
    grid = result.grid
    pts = np.array([rec.location + delta * v for delta in delta_list])
    comps = []
    for a in range(grid.dimension):
        comp = ScalarField(grid, derivs.gradient[..., a])
        comps.append(interpolate_many(comp, pts))
    grad = np.stack(comps, axis=-1)
    if not np.all(np.isfinite(grad)):
        raise ContractError("some sample points are outside the arrived region")
    norms = np.linalg.norm(grad, axis=-1)
    return [AxisDecayRow(float(dl), float(g), float(g / dl)) for dl, g in zip(delta_list, norms)]


def fitted_axis(rec: CriticalPointRecord) -> np.ndarray:
    """Unit axis direction: the eigenvector of the largest Hessian eigenvalue."""
    return rec.eigenvectors[:, -1].copy()


@dataclass
class BlowupFit:
    beta: float
    samples: int
    sample_radius: float


def blowup_exponent(result, point: CriticalPointRecord | Sequence[int], sample_radius: float,
                    derivs: FieldDerivatives | None = None) -> BlowupFit:
    """Fit ``1/|grad u| ~ (u(p) - u)^(-beta)``; cylindrical singularities give beta = 1/2."""
    result = _as_result(result)
    derivs = derivs or derivatives(result)
    rec = point if isinstance(point, CriticalPointRecord) else make_record(result, point, derivs)
    grid = result.grid
    coords = grid.coordinates()
    dist = np.linalg.norm(coords - rec.location, axis=-1)
    g = derivs.grad_norm
    drop = rec.value - result.u.values
    with np.errstate(invalid="ignore"):
        mask = derivs.valid & (dist <= sample_radius) & (g > 0) & (drop > 0)
    if mask.sum() < 20:
        raise InsufficientSamplingError(f"only {int(mask.sum())} usable samples within radius {sample_radius:g}")
    x = np.log(drop[mask])
    y = np.log(1.0 / g[mask])
    if np.var(x) == 0:
        raise InsufficientSamplingError("degenerate fit: no spread in u(p) - u")
    slope = np.polyfit(x, y, 1)[0]
    return BlowupFit(float(-slope), int(mask.sum()), float(sample_radius))


# ----------------------------------------------------------------------------
# aggregate report

@dataclass
class RegularityReport:
    spacing: float
    critical_points: list[CriticalPointRecord]
    classical_residual_stats: ResidualStats | None
    curvature: CurvatureBounds | None
    profile_fits: dict[str, list[ProfileFit]] = field(default_factory=dict)
    axis_decay_tables: dict[str, list[AxisDecayRow]] = field(default_factory=dict)
    blowup_exponents: dict[str, BlowupFit] = field(default_factory=dict)
    viscosity: list[ViscosityReport] = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    pass_flags: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spacing": self.spacing,
            "settings": self.settings,
            "critical_points": [r.to_dict() for r in self.critical_points],
            "classical_residual_stats": asdict(self.classical_residual_stats) if self.classical_residual_stats else None,
            "curvature": asdict(self.curvature) if self.curvature else None,
            "profile_fits": {k: [asdict(f) for f in v] for k, v in self.profile_fits.items()},
            "axis_decay_tables": {k: [asdict(r) for r in v] for k, v in self.axis_decay_tables.items()},
            "blowup_exponents": {k: asdict(v) for k, v in self.blowup_exponents.items()},
            "viscosity": [dict(asdict(v), index=list(v.index)) for v in self.viscosity],
            "pass_flags": self.pass_flags,
        }


@dataclass
class AnalysisOptions:
    threshold_factor: float = 2.0
    grad_min: float = 0.2
    exclusion_cells: float = 3.0
    delta_reg: float = DEFAULT_DELTA_REG
    tau_cells: list[float] = field(default_factory=lambda: [0.7, 2.2, 7.0])
    window_factor: float = 2.5
    delta_cells: list[float] = field(default_factory=lambda: [32.0, 16.0, 8.0])
    blowup_radius_cells: float = 4.0
    viscosity_points: int = 50
    viscosity_trials: int = 100
    viscosity_radius_cells: int = 3
    viscosity_tol: float = 0.05
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisOptions":
        return cls(**data)


def analyze(result, opts: AnalysisOptions | None = None) -> RegularityReport:
    """Run every check that applies to the field; profile and decay tables per critical point.

    ``tau_cells`` are in units of ``h^2`` (values reaching below ``u = 0`` are
    dropped per point) and ``delta_cells`` in units of ``h``.
    Checks that lack data for a point (e.g. a window without level-set points)
    are skipped for that point rather than aborting the report.
    """
    result = _as_result(result)
    opts = opts or AnalysisOptions()
    derivs = derivatives(result)
    h = result.grid.spacing
    records = find_critical_points(result, opts.threshold_factor, derivs)
    try:
        stats = classical_residual_stats(result, records, opts.grad_min, opts.exclusion_cells, opts.delta_reg, derivs)
    except InsufficientSamplingError:
        stats = None
    try:
        curv = pinching_and_c11(result, opts.grad_min, derivs)
    except InsufficientSamplingError:
        curv = None
    report = RegularityReport(h, records, stats, curv, settings=dict(opts.to_dict(), spacing=h))
    for rec in records:
        key = ",".join(str(i) for i in rec.index)
        taus = [t * h * h for t in opts.tau_cells if t * h * h < rec.value]
        try:
            if taus:
                report.profile_fits[key] = tangent_flow_profile(result, rec, taus, opts.window_factor, derivs)
        except (InsufficientSamplingError, ContractError):
            pass
        if rec.classified_k is not None and rec.classified_k < rec.n:
            try:
                report.axis_decay_tables[key] = axis_decay(
                    result, rec, fitted_axis(rec), [c * h for c in opts.delta_cells], derivs=derivs)
            except ContractError:
                pass
        try:
            report.blowup_exponents[key] = blowup_exponent(result, rec, opts.blowup_radius_cells * h, derivs)
        except InsufficientSamplingError:
            pass
    report.viscosity = _viscosity_sample(result, derivs, records, opts)
    return report


def _viscosity_sample(result, derivs, records, opts) -> list[ViscosityReport]:
    if opts.viscosity_points <= 0:
        return []
    h = result.grid.spacing
    r = opts.viscosity_radius_cells
    ok = ndimage.binary_erosion(derivs.valid, structure=np.ones((2 * r + 1,) * result.grid.dimension, bool),
                                border_value=0)
    ok &= derivs.grad_norm >= opts.grad_min
    ok &= critical_distance(result, records) >= opts.exclusion_cells * h
    candidates = np.argwhere(ok)
    if len(candidates) == 0:
        return []
    rng = np.random.default_rng(opts.seed)
    pick = rng.choice(len(candidates), size=min(opts.viscosity_points, len(candidates)), replace=False)
    out = []
    for j, i in enumerate(sorted(pick)):
        out.append(check_viscosity(result.u, tuple(candidates[i]), opts.viscosity_trials, r,
                                   seed=opts.seed + 1 + j, tol=opts.viscosity_tol))
    return out
