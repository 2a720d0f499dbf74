"""Closed-form arrival times and the library of initial surfaces.

Every implicit function here is positive inside, negative outside and zero
on the initial hypersurface. Points are arrays of shape ``(..., d)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import ConfigError, SamplingError

GRADIENT_FLOOR = 0.1


# ----------------------------------------------------------------------------
# analytic arrival times

def sphere_arrival(x, radius: float, n: int | None = None, center=None) -> np.ndarray | float:
    """Arrival time ``(R0^2 - |x - c|^2) / (2n)`` of a shrinking round sphere."""
    x = np.asarray(x, float)
    d = x.shape[-1]
    n = d - 1 if n is None else int(n)
    if n != d - 1 or n < 1:
        raise ConfigError(f"sphere in R^{d} needs n = {d - 1}, got {n}")
    c = np.zeros(d) if center is None else np.asarray(center, float)
    r2 = np.sum((x - c) ** 2, axis=-1)
    out = (radius**2 - r2) / (2 * n)
    return float(out) if np.ndim(out) == 0 else out


def cylinder_arrival(x, k: int, frame=None, center=None) -> np.ndarray | float:
    """Arrival time ``-(1/2k) sum_{i<=k+1} y_i^2`` of the shrinking cylinder S^k x R^{n-k}.

    ``frame`` is an orthonormal ``d x d`` matrix whose first ``k + 1`` columns
    span the shrinking directions; the rest span the axis. The value is zero
    on the axis (the extinction time).
    """
    x = np.asarray(x, float)
    d = x.shape[-1]
    if not 1 <= k <= d - 1:
        raise ConfigError(f"cylinder index k must be in 1..{d - 1}, got {k}")
    frame = np.eye(d) if frame is None else np.asarray(frame, float)
    c = np.zeros(d) if center is None else np.asarray(center, float)
    y = (x - c) @ frame
    out = -np.sum(y[..., : k + 1] ** 2, axis=-1) / (2 * k)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AnalyticArrival:
    """A sampled-ready exact arrival field (sphere or cylinder)."""

    kind: str
    dimension: int
    radius: float = 1.0
    k: int = 1
    center: tuple[float, ...] | None = None
    frame: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("sphere", "cylinder"):
            raise ConfigError(f"unknown analytic arrival kind {self.kind!r}")
        if self.kind == "sphere" and not self.radius > 0:
            raise ConfigError("sphere radius must be positive")
        if self.kind == "cylinder" and not 1 <= self.k <= self.dimension - 1:
            raise ConfigError(f"k must be in 1..{self.dimension - 1}")
        if self.frame is not None:
            frame = np.asarray(self.frame, float)
            if not np.allclose(frame.T @ frame, np.eye(self.dimension), atol=1e-10):
                raise ConfigError("frame must be orthonormal")

    @property
    def n(self) -> int:
        return self.dimension - 1

    def __call__(self, x):
        if self.kind == "sphere":
            return sphere_arrival(x, self.radius, self.n, self.center)
        return cylinder_arrival(x, self.k, self.frame, self.center)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dimension": self.dimension}
        if self.kind == "sphere":
            out["radius"] = self.radius
        else:
            out["k"] = self.k
        if self.center is not None:
            out["center"] = list(self.center)
        if self.frame is not None:
            out["frame"] = np.asarray(self.frame).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AnalyticArrival":
        data = dict(data)
        if "center" in data:
            data["center"] = tuple(data["center"])
        if "frame" in data:
            data["frame"] = np.asarray(data["frame"], float)
        return cls(**data)


# ----------------------------------------------------------------------------
# initial surfaces

def _smooth_max(values: list[np.ndarray], width: float) -> np.ndarray:
    stacked = np.stack(values)
    top = stacked.max(axis=0)
    return top + width * np.log(np.sum(np.exp((stacked - top) / width), axis=0))


def _segment_distance(y: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((y - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(y - a - t[..., None] * ab, axis=-1)


@dataclass(frozen=True)
class ImplicitSurface:
    """Base class: a smooth implicit function with a rigid placement."""

    dimension: int
    center: tuple[float, ...] | None = None
    rotation: np.ndarray | None = field(default=None, repr=False, compare=False)

    name: ClassVar[str] = ""
    params: ClassVar[tuple[str, ...]] = ()

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigError("surfaces live in R^2 or R^3")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
            if len(self.center) != self.dimension:
                raise ConfigError("center has the wrong dimension")
        if self.rotation is not None:
            rot = np.asarray(self.rotation, float)
            if rot.shape != (self.dimension,) * 2 or not np.allclose(rot.T @ rot, np.eye(self.dimension), atol=1e-10):
                raise ConfigError("rotation must be an orthogonal matrix")
            object.__setattr__(self, "rotation", rot)
        self._validate()

    def _validate(self):
        pass

    # placement -------------------------------------------------------------
    def to_local(self, x) -> np.ndarray:
        y = np.asarray(x, float)
        if self.center is not None:
            y = y - np.asarray(self.center)
        if self.rotation is not None:
            y = y @ self.rotation
        return y

    def to_world(self, y) -> np.ndarray:
        x = np.asarray(y, float)
        if self.rotation is not None:
            x = x @ self.rotation.T
        if self.center is not None:
            x = x + np.asarray(self.center)
        return x

    # implicit function -----------------------------------------------------
    def _local_value(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _local_distance(self, y: np.ndarray) -> np.ndarray | None:
        return None

    def _local_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def min_feature(self) -> float:
        """Smallest length scale that must be resolved by the grid."""
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        return self._local_value(self.to_local(x))

    def gradient(self, x, step: float = 1e-5) -> np.ndarray:
        x = np.asarray(x, float)
        d = x.shape[-1]
        out = np.empty(x.shape)
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            out[..., a] = (self.value(x + e) - self.value(x - e)) / (2 * step)
        return out

    def hessian(self, x, step: float = 1e-4) -> np.ndarray:
        x = np.asarray(x, float)
        d = x.shape[-1]
        out = np.empty(x.shape + (d,))
        f0 = self.value(x)
        for a in range(d):
            ea = np.zeros(d)
            ea[a] = step
            out[..., a, a] = (self.value(x + ea) - 2 * f0 + self.value(x - ea)) / step**2
            for b in range(a + 1, d):
                eb = np.zeros(d)
                eb[b] = step
                cross = (self.value(x + ea + eb) - self.value(x + ea - eb)
                         - self.value(x - ea + eb) + self.value(x - ea - eb)) / (4 * step**2)
                out[..., a, b] = out[..., b, a] = cross
        return out

    def signed_distance(self, x) -> np.ndarray:
        """Exact signed distance where known, otherwise ``phi / max(|grad phi|, 0.1)``."""
        y = self.to_local(x)
        exact = self._local_distance(y)
        if exact is not None:
            return exact
        phi = self._local_value(y)
        grad = np.linalg.norm(self.gradient(x), axis=-1)
        # floor keeps interior critical points of phi (ball centers) finite
        return phi / np.maximum(grad, GRADIENT_FLOOR)

    def mean_curvature(self, x) -> np.ndarray:
        """Mean curvature of the level set through x, outward normal; sphere gives n/R."""
        g = self.gradient(x)
        hess = self.hessian(x)
        g2 = np.einsum("...i,...i->...", g, g)
        lap = np.trace(hess, axis1=-2, axis2=-1)
        hgg = np.einsum("...i,...ij,...j->...", g, hess, g)
        return -(lap - hgg / g2) / np.sqrt(g2)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self._local_bounds()
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.dimension, -1).T
        world = self.to_world(corners)
        return world.min(axis=0), world.max(axis=0)

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"name": self.name, "dimension": self.dimension}
        for p in self.params:
            v = getattr(self, p)
            out[p] = list(v) if isinstance(v, tuple) else v
        if self.center is not None:
            out["center"] = list(self.center)
        if self.rotation is not None:
            out["rotation"] = self.rotation.tolist()
        return out

    def moved(self, center=None, rotation=None) -> "ImplicitSurface":
        """Same shape with a new rigid placement."""
        data = self.to_dict()
        data.pop("center", None)
        data.pop("rotation", None)
        if center is not None:
            data["center"] = list(center)
        if rotation is not None:
            data["rotation"] = np.asarray(rotation).tolist()
        return surface_from_dict(data)


@dataclass(frozen=True)
class Sphere(ImplicitSurface):
    radius: float = 1.0

    name: ClassVar[str] = "sphere"
    params: ClassVar[tuple[str, ...]] = ("radius",)

    def _validate(self):
        if not self.radius > 0:
            raise ConfigError("sphere radius must be positive")

    def _local_value(self, y):
        return self.radius - np.linalg.norm(y, axis=-1)

    def _local_distance(self, y):
        return self._local_value(y)

    def _local_bounds(self):
        r = np.full(self.dimension, self.radius)
        return -r, r

    def min_feature(self):
        return self.radius


@dataclass(frozen=True)
class Ellipsoid(ImplicitSurface):
    semi_axes: tuple[float, ...] = (1.0, 1.0, 1.0)

    name: ClassVar[str] = "ellipsoid"
    params: ClassVar[tuple[str, ...]] = ("semi_axes",)

    def _validate(self):
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        if len(self.semi_axes) != self.dimension or min(self.semi_axes) <= 0:
            raise ConfigError("ellipsoid needs one positive semi-axis per dimension")

    def _local_value(self, y):
        a = np.asarray(self.semi_axes)
        # scaled by the smallest semi-axis so that |grad| is O(1) near the surface
        return 0.5 * min(self.semi_axes) * (1.0 - np.sum((y / a) ** 2, axis=-1))

    def _local_bounds(self):
        a = np.asarray(self.semi_axes)
        return -a, a

    def min_feature(self):
        return min(self.semi_axes)


@dataclass(frozen=True)
class Torus(ImplicitSurface):
    """Tube of radius ``minor`` around a circle of radius ``major`` in the local x-y plane."""

    major: float = 1.0
    minor: float = 0.3

    name: ClassVar[str] = "torus"
    params: ClassVar[tuple[str, ...]] = ("major", "minor")

    def _validate(self):
        if self.dimension != 3:
            raise ConfigError("torus is only defined in R^3")
        if not 0 < self.minor < self.major:
            raise ConfigError("torus needs 0 < minor < major")
        if not self.major > 2 * self.minor:
            # inner equator has H = 1/r - 1/(R - r)
            warnings.warn(f"torus R={self.major}, r={self.minor} is not mean convex", stacklevel=3)

    @property
    def mean_convex_warning(self) -> bool:
        return not self.major > 2 * self.minor

    def _local_value(self, y):
        ring = np.hypot(y[..., 0], y[..., 1]) - self.major
        return self.minor - np.hypot(ring, y[..., 2])

    def _local_distance(self, y):
        return self._local_value(y)

    def _local_bounds(self):
        outer = self.major + self.minor
        return np.array([-outer, -outer, -self.minor]), np.array([outer, outer, self.minor])

    def min_feature(self):
        return self.minor


@dataclass(frozen=True)
class Dumbbell(ImplicitSurface):
    """Two balls joined by a capsule along the local first axis, blended by a smooth max.

    ``separation`` is the distance between the ball centers; ``smoothing`` is
    the width of the log-sum-exp blend.
    """

    separation: float = 1.46
    ball_radius: float = 0.17
    neck_radius: float = 0.085
    smoothing: float = 0.05

    name: ClassVar[str] = "dumbbell"
    params: ClassVar[tuple[str, ...]] = ("separation", "ball_radius", "neck_radius", "smoothing")

    def _validate(self):
        if min(self.separation, self.ball_radius, self.neck_radius, self.smoothing) <= 0:
            raise ConfigError("dumbbell parameters must be positive")
        if self.neck_radius >= self.ball_radius:
            raise ConfigError("neck must be thinner than the balls")
        if self.separation <= 2 * self.ball_radius:
            raise ConfigError("balls overlap; increase separation")
        report = check_initial_mean_convexity(self, samples=400, seed=0)
        object.__setattr__(self, "_mean_convex", report.mean_convex)
        if not report.mean_convex:
            warnings.warn(
                f"dumbbell {self.to_dict()} failed the mean-convexity screen (min H = {report.min_h:.3g})",
                stacklevel=3,
            )

    @property
    def mean_convex_warning(self) -> bool:
        return not self._mean_convex

    def _ball_centers(self):
        c = np.zeros((2, self.dimension))
        c[0, 0] = -0.5 * self.separation
        c[1, 0] = 0.5 * self.separation
        return c

    def _local_value(self, y):
        c0, c1 = self._ball_centers()
        return _smooth_max(
            [
                self.ball_radius - np.linalg.norm(y - c0, axis=-1),
                self.ball_radius - np.linalg.norm(y - c1, axis=-1),
                self.neck_radius - _segment_distance(y, c0, c1),
            ],
            self.smoothing,
        )

    def _local_distance(self, y):
        # smooth max of exact signed distances: 1-Lipschitz, within smoothing*log(3) of the true distance outside
        return self._local_value(y)

    def _local_bounds(self):
        pad = self.smoothing * math.log(3.0)
        r = self.ball_radius + pad
        hi = np.full(self.dimension, r)
        hi[0] = 0.5 * self.separation + r
        return -hi, hi

    def min_feature(self):
        return self.neck_radius


SURFACES = {cls.name: cls for cls in (Sphere, Ellipsoid, Torus, Dumbbell)}


def surface_from_dict(data: dict) -> ImplicitSurface:
    data = dict(data)
    name = data.pop("name", None)
    if name not in SURFACES:
        raise ConfigError(f"unknown surface {name!r}; choose from {sorted(SURFACES)}")
    if "center" in data and data["center"] is not None:
        data["center"] = tuple(data["center"])
    if "rotation" in data and data["rotation"] is not None:
        data["rotation"] = np.asarray(data["rotation"], float)
    if "semi_axes" in data:
        data["semi_axes"] = tuple(data["semi_axes"])
    try:
        return SURFACES[name](**data)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for surface {name!r}: {exc}") from exc


def implicit_value(surface: ImplicitSurface, x):
    return surface.value(x)


def implicit_signed_distance(surface: ImplicitSurface, x):
    return surface.signed_distance(x)


# ----------------------------------------------------------------------------
# mean-convexity screen

@dataclass
class MeanConvexityReport:
    min_h: float
    location: np.ndarray
    samples: int
    mean_convex: bool
    points: np.ndarray = field(repr=False)
    curvatures: np.ndarray = field(repr=False)


def project_to_surface(surface: ImplicitSurface, points: np.ndarray, tol: float = 1e-10, max_iter: int = 60):
    """Newton-project points onto the zero set along the gradient."""
    x = np.array(points, float)
    for _ in range(max_iter):
        phi = surface.value(x)
        if np.all(np.abs(phi) < tol):
            return x
        g = surface.gradient(x)
        g2 = np.einsum("...i,...i->...", g, g)
        x = x - (phi / np.maximum(g2, 1e-300))[..., None] * g
    phi = surface.value(x)
    bad = np.abs(phi) >= tol * 100
    if np.any(bad):
        raise SamplingError(
            f"{int(bad.sum())} of {len(x)} points failed to project onto the zero set "
            f"(max |phi| = {np.abs(phi).max():.3g})"
        )
    return x


def check_initial_mean_convexity(surface: ImplicitSurface, samples: int = 2000, seed: int = 0) -> MeanConvexityReport:
    """Sample the zero set and report the smallest mean curvature found."""
    rng = np.random.default_rng(seed)
    lo, hi = surface.bounding_box()
    # start from the bounding box, keep only points whose gradient is usable
    start = rng.uniform(lo, hi, size=(samples * 3, surface.dimension))
    g = np.linalg.norm(surface.gradient(start), axis=-1)
    start = start[g > 1e-3][:samples]
    if len(start) < samples // 2:
        raise SamplingError("too few usable starting points for the mean-convexity screen")
    pts = project_to_surface(surface, start)
    curv = surface.mean_curvature(pts)
    i = int(np.argmin(curv))
    return MeanConvexityReport(float(curv[i]), pts[i], len(pts), bool(curv[i] > 0), pts, curv)
