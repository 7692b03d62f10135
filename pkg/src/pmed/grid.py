"""Uniform Cartesian grids and cell-centered fields.

The whole-space problem is truncated to a box with a vacuum (zero-extension)
boundary: every stencil and interpolation treats values outside the box as 0.
Arrays are indexed ``values[i]`` (1D) or ``values[i, j]`` (2D, ``ij`` order),
with cell centers ``origin + (i + 1/2) * spacing`` along each axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError

__all__ = [
    "Grid",
    "ScalarField",
    "DensityField",
    "make_grid",
    "box_grid",
    "integrate",
    "sample",
    "discrete_gradient",
    "discrete_divergence",
    "discrete_laplacian",
]


@dataclass(frozen=True)
class Grid:
    dim: int
    cells: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"grid dimension must be 1 or 2, got {self.dim}")
        for name in ("cells", "origin", "spacing"):
            if len(getattr(self, name)) != self.dim:
                raise ValidationError(f"{name} must have {self.dim} entries")
        if any(n < 4 for n in self.cells):
            raise ValidationError(f"every axis needs at least 4 cells, got {self.cells}")
        if any(not (h > 0 and np.isfinite(h)) for h in self.spacing):
            raise ValidationError(f"spacing must be strictly positive, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + np.asarray(self.cells) * np.asarray(self.spacing)

    @property
    def h(self) -> float:
        """Largest spacing, the resolution scale used in error slacks."""
        return float(max(self.spacing))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + (np.arange(self.cells[k]) + 0.5) * self.spacing[k]

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates, one array of ``shape`` per axis."""
        arrays = np.meshgrid(*(self.axis(k) for k in range(self.dim)), indexing="ij")
        for a in arrays:
            a.setflags(write=False)
        return tuple(arrays)

    @cached_property
    def points(self) -> np.ndarray:
        """Cell centers as an ``(size, dim)`` array in C order."""
        pts = np.stack([a.ravel() for a in self.mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    def radius(self, center=None) -> np.ndarray:
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        return np.sqrt(sum((a - c[k]) ** 2 for k, a in enumerate(self.mesh)))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def scaled(self, factor: float) -> "Grid":
        """Grid with every length multiplied by ``factor``."""
        return Grid(
            self.dim,
            self.cells,
            tuple(o * factor for o in self.origin),
            tuple(h * factor for h in self.spacing),
        )

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(
            self.dim,
            tuple(n * factor for n in self.cells),
            self.origin,
            tuple(h / factor for h in self.spacing),
        )


def make_grid(dim, cells, origin, spacing) -> Grid:
    cells = tuple(int(n) for n in np.atleast_1d(cells))
    origin = tuple(float(o) for o in np.atleast_1d(origin))
    spacing = tuple(float(h) for h in np.atleast_1d(spacing))
    return Grid(int(dim), cells, origin, spacing)


def box_grid(dim: int, n: int, half_width: float) -> Grid:
    """Square box ``[-L, L]^dim`` with ``n`` cells per axis."""
    h = 2.0 * half_width / n
    return make_grid(dim, [n] * dim, [-half_width] * dim, [h] * dim)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values at cell centers. Immutable: ``values`` is read-only."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValidationError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite")
        self._check(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time", float(self.time))

    def _check(self, v):
        pass

    def replace(self, values=None, time=None):
        return type(self)(
            self.grid,
            self.values if values is None else values,
            self.time if time is None else time,
        )

    def __repr__(self):
        return f"{type(self).__name__}(cells={self.grid.cells}, time={self.time:g})"


class DensityField(ScalarField):
    """Nonnegative density (mass per volume) at cell centers."""

    def _check(self, v):
        if np.any(v < 0):
            raise ValidationError(f"density must be nonnegative (min {v.min():.3g})")


def integrate(field) -> float:
    """Midpoint-rule integral over the box."""
    return float(np.sum(field.values) * field.grid.cell_volume)


def _values(field_or_array):
    return field_or_array.values if isinstance(field_or_array, ScalarField) else np.asarray(field_or_array)


def sample(field, points) -> np.ndarray | float:
    """Multilinear interpolation of cell-centered values.

    Values beyond the outermost centers are interpolated against zero ghost
    cells; points outside the box return 0.
    """
    grid = field.grid
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1 and pts.shape[0] == grid.dim
    pts = np.atleast_2d(pts).reshape(-1, grid.dim)
    padded = np.pad(_values(field), 1)
    out = np.zeros(len(pts))
    inside = grid.contains(pts)
    p = pts[inside]
    idx = (p - grid.lower) / np.asarray(grid.spacing) - 0.5
    i0 = np.floor(idx).astype(int)
    w = idx - i0
    i0 += 1  # ghost layer offset
    if grid.dim == 1:
        i = i0[:, 0]
        t = w[:, 0]
        out[inside] = (1 - t) * padded[i] + t * padded[i + 1]
    else:
        i, j = i0[:, 0], i0[:, 1]
        tx, ty = w[:, 0], w[:, 1]
        out[inside] = (
            (1 - tx) * (1 - ty) * padded[i, j]
            + tx * (1 - ty) * padded[i + 1, j]
            + (1 - tx) * ty * padded[i, j + 1]
            + tx * ty * padded[i + 1, j + 1]
        )
    return float(out[0]) if scalar else out


def discrete_gradient(field) -> list[ScalarField]:
    """Centered differences inside, first-order one-sided at the walls."""
    grid = field.grid
    v = _values(field)
    comps = []
    for k in range(grid.dim):
        g = np.gradient(v, grid.spacing[k], axis=k, edge_order=1)
        comps.append(ScalarField(grid, g, getattr(field, "time", 0.0)))
    return comps


def discrete_divergence(components, grid: Grid | None = None, time: float = 0.0) -> ScalarField:
    """Sum over axes of the centered derivative of each component."""
    if grid is None:
        grid = components[0].grid
        time = components[0].time
    total = np.zeros(grid.shape)
    for k, comp in enumerate(components):
        total += np.gradient(_values(comp), grid.spacing[k], axis=k, edge_order=1)
    return ScalarField(grid, total, time)


def laplacian_array(v: np.ndarray, spacing) -> np.ndarray:
    """(2d+1)-point Laplacian with zero ghost cells, written as a flux difference."""
    out = np.zeros_like(v)
    for k, h in enumerate(spacing):
        padded = np.pad(v, [(1, 1) if a == k else (0, 0) for a in range(v.ndim)])
        flux = np.diff(padded, axis=k) / h  # one value per face, n + 1 faces
        out += np.diff(flux, axis=k) / h
    return out


def discrete_laplacian(field) -> ScalarField:
    return ScalarField(field.grid, laplacian_array(_values(field), field.grid.spacing), field.time)
