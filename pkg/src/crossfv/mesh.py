"""Uniform periodic Cartesian tensor meshes of the d-dimensional torus.

Cells are identical hyper-rectangles indexed by multi-indices with periodic
wraparound on every axis. Each undirected edge is enumerated exactly once,
from its owner cell in the positive axis direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, UsageError

Cell = tuple  # multi-index of a cell


@dataclass(frozen=True)
class MeshSpec:
    """Axis-aligned box [a_l, b_l) per axis and cell counts M_l."""

    extents: tuple
    cells_per_axis: tuple

    def __post_init__(self):
        extents = tuple((float(a), float(b)) for a, b in self.extents)
        cells = tuple(int(m) for m in self.cells_per_axis)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells_per_axis", cells)
        if len(extents) < 1 or len(extents) != len(cells):
            raise ConfigurationError(
                f"need one (extent, cell count) pair per axis, got {extents} and {cells}"
            )
        for (a, b), m in zip(extents, cells):
            if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
                raise ConfigurationError(f"degenerate extent [{a}, {b})")
            if m < 2:
                raise ConfigurationError(f"at least 2 cells per axis required, got {m}")

    @property
    def dim(self) -> int:
        return len(self.cells_per_axis)


@dataclass(frozen=True)
class EdgeId:
    """Undirected edge, identified by its owner cell and positive axis (1-based)."""

    cell: Cell
    axis: int


@dataclass(frozen=True)
class Mesh:
    """Mesh with derived spacings, measures and transmissibilities.

    Immutable after construction; safe to share across threads. One edge
    measure and one transmissibility per axis (the mesh is uniform).
    """

    spec: MeshSpec
    dx: tuple
    cell_measure: float
    edge_measures: tuple
    transmissibilities: tuple

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def shape(self) -> tuple:
        return self.spec.cells_per_axis

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_edges(self) -> int:
        return self.dim * self.n_cells

    @property
    def h(self) -> float:
        """Mesh size: the largest axis spacing."""
        return max(self.dx)

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.spec.extents]))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along a 0-based axis."""
        a, _ = self.spec.extents[axis]
        m = self.shape[axis]
        return a + (np.arange(m) + 0.5) * self.dx[axis]

    def cell_center(self, cell: Cell) -> tuple:
        cell = _as_cell(cell, self.dim)
        return tuple(
            self.spec.extents[l][0] + (cell[l] + 0.5) * self.dx[l]
            for l in range(self.dim)
        )

    def index(self, cell: Cell) -> int:
        """Row-major linearization of a multi-index."""
        return int(np.ravel_multi_index(_as_cell(cell, self.dim), self.shape))

    def unindex(self, flat: int) -> Cell:
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def tau(self, axis: int) -> float:
        """Transmissibility of edges orthogonal to a 0-based axis."""
        return self.transmissibilities[axis]


def build_mesh(spec: MeshSpec) -> Mesh:
    """Construct a mesh with all derived quantities from a validated spec."""
    dx = tuple((b - a) / m for (a, b), m in zip(spec.extents, spec.cells_per_axis))
    cell_measure = float(np.prod(dx))
    # In 1D the codimension-1 measure degenerates; m(sigma) := m(K)/dx keeps
    # tau = m(sigma)/dx consistent across dimensions.
    edge_measures = tuple(cell_measure / h for h in dx)
    transmissibilities = tuple(ms / h for ms, h in zip(edge_measures, dx))
    return Mesh(
        spec=spec,
        dx=dx,
        cell_measure=cell_measure,
        edge_measures=edge_measures,
        transmissibilities=transmissibilities,
    )


def neighbor(mesh: Mesh, cell: Cell, signed_axis: int) -> Cell:
    """Cell one step along a signed 1-based axis, with periodic wrap."""
    d = mesh.dim
    if not isinstance(signed_axis, (int, np.integer)) or signed_axis == 0 or abs(signed_axis) > d:
        raise UsageError(f"signed axis must be in +-1..{d}, got {signed_axis}")
    cell = _as_cell(cell, d)
    l = abs(signed_axis) - 1
    step = 1 if signed_axis > 0 else -1
    out = list(cell)
    out[l] = (out[l] + step) % mesh.shape[l]
    return tuple(out)


def edges(mesh: Mesh) -> Iterator[EdgeId]:
    """All undirected edges, each exactly once (owner cell, +axis)."""
    for cell in np.ndindex(mesh.shape):
        for axis in range(1, mesh.dim + 1):
            yield EdgeId(cell=tuple(int(i) for i in cell), axis=axis)


def edge_cells(mesh: Mesh, edge: EdgeId) -> tuple:
    """(owner K, neighbor L) cells of an edge."""
    if not (1 <= edge.axis <= mesh.dim):
        raise UsageError(f"edge axis {edge.axis} out of range for dim {mesh.dim}")
    k = _as_cell(edge.cell, mesh.dim)
    return k, neighbor(mesh, k, edge.axis)


def _as_cell(cell, dim: int) -> Cell:
    if isinstance(cell, (int, np.integer)):
        cell = (int(cell),)
    cell = tuple(int(i) for i in cell)
    if len(cell) != dim:
        raise UsageError(f"cell {cell} does not match mesh dimension {dim}")
    return cell
