"""Cell-centered rectangular grids with the zero-flux discrete Laplacian.

The Laplacian is applied in flux-difference form, summing
(neighbor - cell) / h^2 over existing neighbors. That form annihilates
constant fields exactly in floating point, which is what makes the discrete
mass balance of the time stepper exact rather than approximate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .sparse import SparseMatrix, from_rows


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on a rectangle in 1 or 2 dimensions.

    `cells` holds the cell count per axis, `spacing` the (uniform) cell width
    per axis. Fields are flattened row-major with the first axis fastest:
    in 2D the cell (i1, i2) lives at flat index i2 * n1 + i1.
    """

    cells: tuple[int, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        if len(self.cells) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if len(self.spacing) != len(self.cells):
            raise ValueError("one spacing per axis required")
        if any(n < 1 for n in self.cells):
            raise ValueError("cell counts must be positive")
        if any(not (h > 0) for h in self.spacing):
            raise ValueError("spacings must be positive")

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def n_cells(self) -> int:
        out = 1
        for n in self.cells:
            out *= n
        return out

    @property
    def cell_measure(self) -> float:
        out = 1.0
        for h in self.spacing:
            out *= h
        return out

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.cells, self.spacing))

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Center coordinate along each axis, as flat per-cell arrays."""
        axes = [h * (np.arange(n) + 0.5) for n, h in zip(self.cells, self.spacing)]
        if self.ndim == 1:
            return (axes[0],)
        x2, x1 = np.meshgrid(axes[1], axes[0], indexing="ij")
        return (x1.ravel(), x2.ravel())

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Apply the zero-flux Laplacian to a flat cell array."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_cells,):
            raise DimensionMismatchError(
                f"field has {values.shape} values, grid has {self.n_cells} cells"
            )
        if self.ndim == 1:
            return _axis_fluxes(values, self.spacing[0])
        n1, n2 = self.cells
        arr = values.reshape(n2, n1)
        out = _axis_fluxes(arr, self.spacing[0], axis=1)
        out += _axis_fluxes(arr, self.spacing[1], axis=0)
        return out.reshape(-1)

    def laplacian_diagonal(self) -> np.ndarray:
        """Diagonal of the assembled Laplacian (all entries <= 0)."""
        diag = np.zeros(self.n_cells)
        if self.ndim == 1:
            n, h = self.cells[0], self.spacing[0]
            w = 1.0 / (h * h)
            if n > 1:
                k = np.full(n, 2.0)
                k[0] = k[-1] = 1.0
                diag = -k * w
            return diag
        n1, n2 = self.cells
        w1 = 1.0 / (self.spacing[0] * self.spacing[0])
        w2 = 1.0 / (self.spacing[1] * self.spacing[1])
        k1 = np.full(n1, 2.0)
        if n1 > 1:
            k1[0] = k1[-1] = 1.0
        else:
            k1[:] = 0.0
        k2 = np.full(n2, 2.0)
        if n2 > 1:
            k2[0] = k2[-1] = 1.0
        else:
            k2[:] = 0.0
        grid2 = -(np.add.outer(k2 * w2, k1 * w1))
        return grid2.reshape(-1)


def _axis_fluxes(arr: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    out = np.zeros_like(arr)
    if arr.shape[axis] > 1:
        d = np.diff(arr, axis=axis)
        lower = [slice(None)] * arr.ndim
        upper = [slice(None)] * arr.ndim
        lower[axis] = slice(None, -1)
        upper[axis] = slice(1, None)
        out[tuple(lower)] += d
        out[tuple(upper)] -= d
    out /= h * h
    return out


@dataclass(eq=False)
class Field:
    """Scalar values sampled on the cells of one grid, flattened row-major."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64).reshape(-1)
        if self.values.shape != (self.grid.n_cells,):
            raise DimensionMismatchError(
                f"{self.values.size} values for a grid of {self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.n_cells, float(value)))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def _require_on_grid(g: Grid, f: Field) -> None:
    if f.grid != g:
        raise DimensionMismatchError("field does not live on this grid")


def laplacian_apply(g: Grid, f: Field) -> Field:
    """Zero-flux Laplacian of a field; returns a fresh field."""
    _require_on_grid(g, f)
    return Field(g, g.laplacian(f.values))


def integrate(g: Grid, f: Field) -> float:
    """Cell-measure weighted sum, the discrete integral over the domain."""
    _require_on_grid(g, f)
    return g.cell_measure * float(np.sum(f.values))


def assemble_laplacian(g: Grid) -> SparseMatrix:
    """Matrix form of the zero-flux Laplacian (symmetric, zero row sums)."""
    n = g.n_cells
    rows: list[list[tuple[int, float]]] = []
    if g.ndim == 1:
        h = g.spacing[0]
        w = 1.0 / (h * h)
        for j in range(n):
            row: list[tuple[int, float]] = []
            k = 0
            if j > 0:
                row.append((j - 1, w))
                k += 1
            if j < n - 1:
                row.append((j + 1, w))
                k += 1
            row.append((j, -(k * w)))
            rows.append(row)
    else:
        n1, n2 = g.cells
        w1 = 1.0 / (g.spacing[0] * g.spacing[0])
        w2 = 1.0 / (g.spacing[1] * g.spacing[1])
        for i2 in range(n2):
            for i1 in range(n1):
                j = i2 * n1 + i1
                row = []
                k1 = 0
                k2 = 0
                if i2 > 0:
                    row.append((j - n1, w2))
                    k2 += 1
                if i1 > 0:
                    row.append((j - 1, w1))
                    k1 += 1
                if i1 < n1 - 1:
                    row.append((j + 1, w1))
                    k1 += 1
                if i2 < n2 - 1:
                    row.append((j + n1, w2))
                    k2 += 1
                row.append((j, -(k1 * w1 + k2 * w2)))
                rows.append(row)
    return from_rows(n, n, rows)
