"""Uniform Cartesian grids, scalar fields and centered finite differences.

Arrays are stored with ``indexing='ij'``: ``values[i, j, k]`` sits at
``origin + h * (i, j, k)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .errors import ConfigError, OutOfDomainError, StencilError

DEFAULT_DELTA_REG = 1e-8


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, ...]
    spacing: float
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "spacing", float(self.spacing))
        if len(self.origin) != len(self.counts):
            raise ConfigError("origin and counts must have the same length")
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if not self.spacing > 0 or not np.isfinite(self.spacing):
            raise ConfigError(f"spacing must be positive, got {self.spacing}")
        if any(c < 5 for c in self.counts):
            raise ConfigError(f"need at least 5 points per axis, got {self.counts}")

    @classmethod
    def from_bounds(cls, lower: Sequence[float], upper: Sequence[float], spacing: float) -> "GridSpec":
        """Smallest grid with the given spacing covering the box, centered on it."""
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        n_cells = np.ceil((upper - lower) / spacing - 1e-9).astype(int)
        center = 0.5 * (lower + upper)
        origin = center - 0.5 * n_cells * spacing
        return cls(tuple(origin), spacing, tuple(n_cells + 1))

    @property
    def dimension(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * (np.asarray(self.counts) - 1)

    @property
    def extent(self) -> np.ndarray:
        return self.spacing * (np.asarray(self.counts) - 1)

    def axes(self) -> list[np.ndarray]:
        return [o + self.spacing * np.arange(c) for o, c in zip(self.origin, self.counts)]

    def coordinates(self) -> np.ndarray:
        """Array of shape ``counts + (d,)`` with node coordinates."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(self.origin) + self.spacing * np.asarray(index, float)

    def continuous_index(self, point: Sequence[float]) -> np.ndarray:
        return (np.asarray(point, float) - np.asarray(self.origin)) / self.spacing

    def nearest_index(self, point: Sequence[float]) -> tuple[int, ...]:
        idx = np.rint(self.continuous_index(point)).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.counts) - 1)
        return tuple(int(i) for i in idx)

    def is_interior(self, index: Sequence[int], margin: int = 1) -> bool:
        return all(margin <= i < c - margin for i, c in zip(index, self.counts))

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        mask = np.zeros(self.counts, bool)
        mask[tuple(slice(margin, c - margin) for c in self.counts)] = True
        return mask

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func`` on an ``(..., d)`` coordinate array."""
        return np.asarray(func(self.coordinates()), float)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "spacing": self.spacing, "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(tuple(data["origin"]), data["spacing"], tuple(data["counts"]))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, float)
        if values.size != self.grid.size:
            raise ConfigError(f"values has {values.size} entries, grid needs {self.grid.size}")
        object.__setattr__(self, "values", _frozen(values.reshape(self.grid.counts)))

    @classmethod
    def from_function(cls, grid: GridSpec, func, label: str = "") -> "ScalarField":
        return cls(grid, grid.sample(func), label)

    def __getitem__(self, index):
        return self.values[index]

    def with_values(self, values: np.ndarray, label: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.label if label is None else label)


@dataclass(frozen=True)
class Mask:
    grid: GridSpec
    flags: np.ndarray = field(repr=False)

    def __post_init__(self):
        flags = np.asarray(self.flags, bool)
        if flags.size != self.grid.size:
            raise ConfigError("mask size does not match grid")
        object.__setattr__(self, "flags", _frozen(flags.reshape(self.grid.counts)))

    def __getitem__(self, index):
        return self.flags[index]

    def count(self) -> int:
        return int(self.flags.sum())


# ----------------------------------------------------------------------------
# pointwise stencils

def _check_stencil(grid: GridSpec, index: Sequence[int]) -> tuple[int, ...]:
    index = tuple(int(i) for i in index)
    if len(index) != grid.dimension:
        raise StencilError(f"index {index} has wrong dimension for a {grid.dimension}-d grid")
    if not grid.is_interior(index):
        raise StencilError(f"index {index} is within one cell of the grid boundary {grid.counts}")
    return index


def _shifted(index: tuple[int, ...], *moves: tuple[int, int]) -> tuple[int, ...]:
    out = list(index)
    for axis, step in moves:
        out[axis] += step
    return tuple(out)


def gradient_cd(field: ScalarField, index: Sequence[int]) -> np.ndarray:
    """Centered-difference gradient at an interior node."""
    index = _check_stencil(field.grid, index)
    f, h = field.values, field.grid.spacing
    return np.array([
        (f[_shifted(index, (a, 1))] - f[_shifted(index, (a, -1))]) / (2 * h)
        for a in range(field.grid.dimension)
    ])


def hessian_cd(field: ScalarField, index: Sequence[int]) -> np.ndarray:
    """Centered-difference Hessian; symmetric by construction."""
    index = _check_stencil(field.grid, index)
    f, h = field.values, field.grid.spacing
    d = field.grid.dimension
    hess = np.empty((d, d))
    for a in range(d):
        hess[a, a] = (f[_shifted(index, (a, 1))] - 2 * f[index] + f[_shifted(index, (a, -1))]) / h**2
        for b in range(a + 1, d):
            cross = (
                f[_shifted(index, (a, 1), (b, 1))]
                - f[_shifted(index, (a, 1), (b, -1))]
                - f[_shifted(index, (a, -1), (b, 1))]
                + f[_shifted(index, (a, -1), (b, -1))]
            ) / (4 * h**2)
            hess[a, b] = hess[b, a] = cross
    return hess


def one_laplacian_from(grad: np.ndarray, hess: np.ndarray, delta_reg: float = DEFAULT_DELTA_REG):
    """Regularized ``trace(H) - H(g, g) / (|g|^2 + delta^2)``; broadcasts over leading axes."""
    grad = np.asarray(grad, float)
    hess = np.asarray(hess, float)
    g2 = np.einsum("...i,...i->...", grad, grad)
    hgg = np.einsum("...i,...ij,...j->...", grad, hess, grad)
    return np.trace(hess, axis1=-2, axis2=-1) - hgg / (g2 + delta_reg**2)


def one_laplacian(field: ScalarField, index: Sequence[int], delta_reg: float = DEFAULT_DELTA_REG) -> float:
    if not delta_reg > 0:
        raise ConfigError("delta_reg must be positive")
    return float(one_laplacian_from(gradient_cd(field, index), hessian_cd(field, index), delta_reg))


def interpolate(field: ScalarField, point: Sequence[float]) -> float:
    """Multilinear interpolation at a point inside the grid hull."""
    grid = field.grid
    s = grid.continuous_index(point)
    if s.shape != (grid.dimension,):
        raise OutOfDomainError(f"point {point} has wrong dimension")
    upper = np.asarray(grid.counts) - 1
    tol = 1e-9
    if np.any(s < -tol) or np.any(s > upper + tol):
        raise OutOfDomainError(f"point {tuple(point)} lies outside the grid hull")
    s = np.clip(s, 0, upper)
    base = np.minimum(np.floor(s).astype(int), upper - 1)
    frac = s - base
    total = 0.0
    for corner in product((0, 1), repeat=grid.dimension):
        weight = np.prod([fr if c else 1 - fr for c, fr in zip(corner, frac)])
        if weight:
            total += weight * field.values[tuple(base + np.asarray(corner))]
    return float(total)


# ----------------------------------------------------------------------------
# whole-field versions (NaN on the one-cell rind)

def _inner(d: int) -> tuple[slice, ...]:
    return (slice(1, -1),) * d


def _offset(d: int, moves: dict[int, int]) -> tuple[slice, ...]:
    out = []
    for axis in range(d):
        step = moves.get(axis, 0)
        out.append(slice(1 + step, -1 + step if step < 1 else None))
    return tuple(out)


def gradient_field(field: ScalarField | np.ndarray, spacing: float | None = None) -> np.ndarray:
    """Centered gradient of every interior node, shape ``counts + (d,)``."""
    f, h = _unpack(field, spacing)
    d = f.ndim
    out = np.full(f.shape + (d,), np.nan)
    inner = _inner(d)
    for a in range(d):
        out[inner + (a,)] = (f[_offset(d, {a: 1})] - f[_offset(d, {a: -1})]) / (2 * h)
    return out


def hessian_field(field: ScalarField | np.ndarray, spacing: float | None = None) -> np.ndarray:
    """Centered Hessian of every interior node, shape ``counts + (d, d)``."""
    f, h = _unpack(field, spacing)
    d = f.ndim
    out = np.full(f.shape + (d, d), np.nan)
    inner = _inner(d)
    center = f[inner]
    for a in range(d):
        out[inner + (a, a)] = (f[_offset(d, {a: 1})] - 2 * center + f[_offset(d, {a: -1})]) / h**2
        for b in range(a + 1, d):
            cross = (
                f[_offset(d, {a: 1, b: 1})]
                - f[_offset(d, {a: 1, b: -1})]
                - f[_offset(d, {a: -1, b: 1})]
                + f[_offset(d, {a: -1, b: -1})]
            ) / (4 * h**2)
            out[inner + (a, b)] = cross
            out[inner + (b, a)] = cross
    return out


def one_laplacian_field(field: ScalarField | np.ndarray, spacing: float | None = None,
                        delta_reg: float = DEFAULT_DELTA_REG) -> np.ndarray:
    return one_laplacian_from(gradient_field(field, spacing), hessian_field(field, spacing), delta_reg)


def _unpack(field, spacing):
    if isinstance(field, ScalarField):
        return field.values, field.grid.spacing
    if spacing is None:
        raise ConfigError("spacing is required for raw arrays")
    return np.asarray(field, float), float(spacing)


def interpolate_many(field: ScalarField, points: np.ndarray, fill: float = np.nan) -> np.ndarray:
    """Vectorized multilinear interpolation; points outside the hull get ``fill``."""
    grid = field.grid
    points = np.atleast_2d(np.asarray(points, float))
    s = (points - np.asarray(grid.origin)) / grid.spacing
    upper = np.asarray(grid.counts) - 1
    inside = np.all((s >= -1e-9) & (s <= upper + 1e-9), axis=-1)
    s = np.clip(s, 0, upper)
    base = np.minimum(np.floor(s).astype(int), upper - 1)
    frac = s - base
    total = np.zeros(len(points))
    for corner in product((0, 1), repeat=grid.dimension):
        c = np.asarray(corner)
        weight = np.prod(np.where(c, frac, 1 - frac), axis=-1)
        total += weight * field.values[tuple((base + c).T)]
    total[~inside] = fill
    return total
