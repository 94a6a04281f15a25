"""Uniform partitions of a domain and probability vectors over them."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import domain as dom
from .errors import DiscretizationError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Product of uniform partitions, one per coordinate.

    Cells are numbered in C order.  Cells of a disc factor that do not meet
    the disc are inactive: they exist in the numbering but carry no mass
    and have no transfer-matrix column.
    """

    domain: dom.DomainDescriptor
    cells_per_dim: tuple

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells_per_dim)
        if len(cells) != self.domain.dimension or min(cells) < 1:
            raise ValueError("cells_per_dim must give a positive count per coordinate")
        object.__setattr__(self, "cells_per_dim", cells)

    @property
    def total_cells(self):
        return int(np.prod(self.cells_per_dim))

    @property
    def dimension(self):
        return self.domain.dimension

    @cached_property
    def lows(self):
        return np.array([b[0] for b in self.domain.bounds], dtype=float)

    @cached_property
    def widths(self):
        spans = np.array([b[1] - b[0] for b in self.domain.bounds], dtype=float)
        return spans / np.array(self.cells_per_dim)

    @property
    def cell_volume(self):
        return float(np.prod(self.widths))

    @cached_property
    def active(self):
        """Boolean mask over all cells."""
        mask = np.ones(self.cells_per_dim, dtype=bool)
        r = self.domain.disc_radius
        for i, j in self.domain.discs:
            ni, nj = self.cells_per_dim[i], self.cells_per_dim[j]
            lo_i = self.lows[i] + self.widths[i] * np.arange(ni)
            lo_j = self.lows[j] + self.widths[j] * np.arange(nj)
            # distance from the origin to the nearest point of each rectangle
            di = np.maximum(0.0, np.maximum(lo_i, -(lo_i + self.widths[i])))
            dj = np.maximum(0.0, np.maximum(lo_j, -(lo_j + self.widths[j])))
            meets = np.hypot(di[:, None], dj[None, :]) <= r
            shape = [1] * self.dimension
            shape[i], shape[j] = ni, nj
            mask &= meets.reshape(shape)
        return mask.ravel()

    @cached_property
    def active_cells(self):
        return np.flatnonzero(self.active)

    @cached_property
    def active_position(self):
        """Flat cell index -> position among active cells (-1 if inactive)."""
        pos = np.full(self.total_cells, -1, dtype=np.int64)
        pos[self.active_cells] = np.arange(len(self.active_cells))
        return pos

    @property
    def n_active(self):
        return len(self.active_cells)

    def multi_index(self, cells):
        return np.stack(np.unravel_index(np.asarray(cells), self.cells_per_dim), axis=-1)

    def lower_corners(self, cells):
        return self.lows + self.widths * self.multi_index(cells)

    def centers(self, cells=None):
        cells = np.arange(self.total_cells) if cells is None else cells
        return self.lower_corners(cells) + 0.5 * self.widths

    def cell_of(self, points, strict=True):
        """Flat cell index of each point; -1 (or an error when strict) if off the grid."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor((points - self.lows) / self.widths).astype(np.int64)
        n = np.array(self.cells_per_dim)
        per = self.domain.periodic_mask
        idx[:, per] %= n[per]
        # closed upper bound on bounded coordinates
        top = ~per & (idx == n) & np.isclose(points, self.lows + n * self.widths)
        idx[top] -= 1
        inside = np.all((idx >= 0) & (idx < n), axis=1)
        flat = np.full(len(points), -1, dtype=np.int64)
        flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), self.cells_per_dim)
        ok = inside.copy()
        ok[inside] = self.active[flat[inside]]
        flat[~ok] = -1
        if strict and not np.all(ok):
            bad = points[~ok][0]
            raise DiscretizationError(f"point {bad.tolist()} lies outside the active grid")
        return flat

    def describe(self):
        return {"domain": self.domain.describe(), "cells_per_dim": list(self.cells_per_dim)}


def circle_grid(n):
    return Grid(dom.circle(), (n,))


def torus_grid(n1, n2=None):
    return Grid(dom.torus2(), (n1, n1 if n2 is None else n2))


def solid_torus_grid(n_circle=512, n_disc=64):
    return Grid(dom.solid_torus(), (n_circle, n_disc, n_disc))


def grid_for(domain, spec):
    """Grid on ``domain`` from a cell count per coordinate or a single count for all."""
    spec = list(np.atleast_1d(spec))
    if len(spec) == 1:
        spec = spec * domain.dimension
    return Grid(domain, tuple(int(s) for s in spec))


class GridMeasure:
    """Probability vector over the cells of a grid."""

    def __init__(self, grid, weights, normalize=True, meta=None):
        w = np.array(weights, dtype=float, copy=True).ravel()
        if w.size == grid.n_active and grid.n_active != grid.total_cells:
            full = np.zeros(grid.total_cells)
            full[grid.active_cells] = w
            w = full
        if w.size != grid.total_cells:
            raise ValueError(f"expected {grid.total_cells} weights, got {w.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(w[~grid.active] > 0):
            raise ValueError("inactive cells carry mass")
        total = w.sum()
        if normalize:
            if total <= 0:
                raise ValueError("weights sum to zero")
            w /= total
        elif abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        self.grid = grid
        self.weights = w
        self.meta = dict(meta or {})

    @classmethod
    def uniform(cls, grid):
        return cls(grid, grid.active.astype(float))

    @classmethod
    def point_mass(cls, grid, point):
        w = np.zeros(grid.total_cells)
        w[grid.cell_of(point)[0]] = 1.0
        return cls(grid, w)

    @property
    def active_weights(self):
        return self.weights[self.grid.active_cells]

    def integrate(self, phi, nodes=1):
        """Integral of ``phi`` (vectorised over (n, d) points).

        ``nodes > 1`` replaces the cell-centre value by a tensor Gauss-Legendre
        cell average with that many nodes per coordinate.
        """
        cells = np.flatnonzero(self.weights)
        w = self.weights[cells]
        if nodes == 1:
            return float(np.dot(w, phi(self.grid.centers(cells))))
        g, gw = np.polynomial.legendre.leggauss(nodes)
        g, gw = (g + 1) / 2, gw / 2
        d = self.grid.dimension
        mesh = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
        mw = np.prod(np.stack(np.meshgrid(*([gw] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
        low = self.grid.lower_corners(cells)
        vals = phi((low[:, None, :] + mesh[None] * self.grid.widths).reshape(-1, d))
        return float(np.dot(w, vals.reshape(len(cells), -1) @ mw))

    def marginal(self, axis=0):
        """Marginal weights along one coordinate."""
        shaped = self.weights.reshape(self.grid.cells_per_dim)
        others = tuple(i for i in range(self.grid.dimension) if i != axis)
        return shaped.sum(axis=others)

    def coarsen(self, factor):
        """Merge ``factor`` consecutive cells per coordinate (1D or product grids)."""
        shape = []
        for n in self.grid.cells_per_dim:
            if n % factor:
                raise ValueError(f"{n} cells not divisible by {factor}")
            shape += [n // factor, factor]
        w = self.weights.reshape(shape).sum(axis=tuple(range(1, 2 * self.grid.dimension, 2)))
        coarse = Grid(self.grid.domain, tuple(n // factor for n in self.grid.cells_per_dim))
        return GridMeasure(coarse, w.ravel())

    def to_csv(self, path, nonzero_only=False, preamble=()):
        """``schema=1`` line, optional ``#`` preamble lines, then one row per cell.

        Columns are cell_index, the cell-centre coordinates and the weight,
        floats written with 17 significant digits.
        """
        cells = self.grid.active_cells
        if nonzero_only:
            cells = cells[self.weights[cells] > 0]
        d = self.grid.dimension
        names = ",".join(f"x{i}" for i in range(d))
        head = "\n".join(["schema=1", *(f"# {p}" for p in preamble), f"cell_index,{names},weight"])
        table = np.column_stack([cells, self.grid.centers(cells), self.weights[cells]])
        np.savetxt(path, table, fmt=["%d"] + ["%.17g"] * (d + 1), delimiter=",",
                   header=head, comments="")

    @classmethod
    def from_csv(cls, path, grid):
        w = np.zeros(grid.total_cells)
        with open(path) as fh:
            if fh.readline().strip() != "schema=1":
                raise ValueError("unsupported measure CSV schema")
            rows = [line for line in fh if not line.startswith("#")][1:]
        table = np.loadtxt(rows, delimiter=",", ndmin=2) if rows else np.zeros((0, 2))
        w[table[:, 0].astype(np.int64)] = table[:, -1]
        return cls(grid, w, normalize=False)
