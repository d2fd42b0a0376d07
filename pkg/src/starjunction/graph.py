"""Star junction geometry, per-edge grids and grid functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Junction",
    "JunctionGrid",
    "GridFunction",
    "build_junction",
    "vertex_gradient",
    "sup_norm",
]


@dataclass(frozen=True)
class Junction:
    """``num_edges`` intervals ``[0, a_i]`` glued together at ``x = 0``."""

    num_edges: int
    lengths: tuple[float, ...]

    def __post_init__(self):
        if int(self.num_edges) != self.num_edges or self.num_edges < 1:
            raise ValueError(f"a junction needs at least one edge, got {self.num_edges!r}")
        lengths = tuple(float(a) for a in self.lengths)
        if len(lengths) != self.num_edges:
            raise ValueError(f"expected {self.num_edges} edge lengths, got {len(lengths)}")
        for i, a in enumerate(lengths):
            if not math.isfinite(a) or a <= 0.0:
                raise ValueError(f"edge {i} has non-positive or non-finite length {a!r}")
        object.__setattr__(self, "num_edges", int(self.num_edges))
        object.__setattr__(self, "lengths", lengths)

    @property
    def min_length(self) -> float:
        return min(self.lengths)


def build_junction(num_edges: int, lengths: Sequence[float]) -> Junction:
    return Junction(num_edges, tuple(lengths))


@dataclass(frozen=True)
class JunctionGrid:
    """Uniform grid on every edge; node 0 of each edge is the shared vertex."""

    junction: Junction
    nodes_per_edge: tuple[int, ...]
    spacing: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        nodes = self.nodes_per_edge
        if isinstance(nodes, (int, np.integer)):
            nodes = (int(nodes),) * self.junction.num_edges
        nodes = tuple(int(n) for n in nodes)
        if len(nodes) != self.junction.num_edges:
            raise ValueError(f"expected {self.junction.num_edges} node counts, got {len(nodes)}")
        if any(n < 3 for n in nodes):
            raise ValueError(f"every edge needs at least 3 nodes, got {nodes}")
        object.__setattr__(self, "nodes_per_edge", nodes)
        object.__setattr__(
            self, "spacing", tuple(a / (n - 1) for a, n in zip(self.junction.lengths, nodes))
        )

    @classmethod
    def uniform(cls, junction: Junction, nodes: int | Sequence[int]) -> "JunctionGrid":
        return cls(junction, nodes)

    @property
    def num_edges(self) -> int:
        return self.junction.num_edges

    @property
    def lengths(self) -> tuple[float, ...]:
        return self.junction.lengths

    @property
    def size(self) -> int:
        """Number of distinct nodes (vertex counted once)."""
        return 1 + sum(n - 1 for n in self.nodes_per_edge)

    def coordinates(self, edge: int) -> np.ndarray:
        n = self.nodes_per_edge[edge]
        x = np.arange(n) * self.spacing[edge]
        x[-1] = self.junction.lengths[edge]
        return x

    def offsets(self) -> list[int]:
        """Start index of each edge's nodes ``1..N_i-1`` in the flat layout."""
        out, start = [], 1
        for n in self.nodes_per_edge:
            out.append(start)
            start += n - 1
        return out


class GridFunction:
    """A function on a junction grid with one shared vertex value.

    The values live in a single flat read-only array laid out as
    ``[u(0), edge 0 nodes 1..N_0-1, edge 1 nodes 1..N_1-1, ...]``; continuity
    at the vertex therefore holds by construction.
    """

    __slots__ = ("grid", "_flat")

    def __init__(self, grid: JunctionGrid, vertex_value: float, edge_values: Sequence[Sequence[float]]):
        if len(edge_values) != grid.num_edges:
            raise ValueError(f"expected values for {grid.num_edges} edges, got {len(edge_values)}")
        parts = [np.array([float(vertex_value)])]
        for i, vals in enumerate(edge_values):
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (grid.nodes_per_edge[i] - 1,):
                raise ValueError(
                    f"edge {i} needs {grid.nodes_per_edge[i] - 1} values (nodes 1..N-1), got shape {vals.shape}"
                )
            parts.append(vals)
        self._init(grid, np.concatenate(parts))

    def _init(self, grid, flat):
        self.grid = grid
        flat.setflags(write=False)
        self._flat = flat

    @classmethod
    def from_flat(cls, grid: JunctionGrid, flat) -> "GridFunction":
        flat = np.array(flat, dtype=float)
        if flat.shape != (grid.size,):
            raise ValueError(f"flat array must have shape ({grid.size},), got {flat.shape}")
        obj = cls.__new__(cls)
        obj._init(grid, flat)
        return obj

    @classmethod
    def from_edges(cls, grid: JunctionGrid, full_edges: Sequence[Sequence[float]]) -> "GridFunction":
        """Build from full per-edge arrays (node 0 included); node 0 must agree."""
        full_edges = [np.asarray(e, dtype=float) for e in full_edges]
        v0 = full_edges[0][0]
        for i, e in enumerate(full_edges):
            if e[0] != v0:
                raise ValueError(f"edge {i} disagrees at the vertex: {e[0]!r} != {v0!r}")
        return cls(grid, v0, [e[1:] for e in full_edges])

    @classmethod
    def from_callable(cls, grid: JunctionGrid, func: Callable[[int, np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample ``func(edge, x)``; the vertex value is taken from edge 0."""
        edges = [np.asarray(func(i, grid.coordinates(i)), dtype=float) * np.ones(grid.nodes_per_edge[i])
                 for i in range(grid.num_edges)]
        return cls(grid, edges[0][0], [e[1:] for e in edges])

    @classmethod
    def constant(cls, grid: JunctionGrid, value: float) -> "GridFunction":
        return cls.from_flat(grid, np.full(grid.size, float(value)))

    @property
    def flat(self) -> np.ndarray:
        return self._flat

    @property
    def vertex_value(self) -> float:
        return float(self._flat[0])

    @property
    def edge_values(self) -> list[np.ndarray]:
        """Per-edge values at nodes ``1..N_i-1`` (read-only views)."""
        out = []
        for start, n in zip(self.grid.offsets(), self.grid.nodes_per_edge):
            out.append(self._flat[start:start + n - 1])
        return out

    def edge(self, i: int) -> np.ndarray:
        """Values on edge ``i`` at all ``N_i`` nodes, vertex included."""
        start = self.grid.offsets()[i]
        n = self.grid.nodes_per_edge[i]
        out = np.empty(n)
        out[0] = self._flat[0]
        out[1:] = self._flat[start:start + n - 1]
        return out

    def edges(self) -> list[np.ndarray]:
        return [self.edge(i) for i in range(self.grid.num_edges)]

    def _check(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise ValueError("grid functions live on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction.from_flat(self.grid, self._flat + other._flat)
        return GridFunction.from_flat(self.grid, self._flat + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction.from_flat(self.grid, self._flat - other._flat)
        return GridFunction.from_flat(self.grid, self._flat - float(other))

    def __mul__(self, scalar):
        return GridFunction.from_flat(self.grid, self._flat * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction.from_flat(self.grid, -self._flat)

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self._flat, other._flat)

    __hash__ = None

    def __repr__(self):
        return f"GridFunction(edges={self.grid.num_edges}, nodes={self.grid.nodes_per_edge}, u(0)={self.vertex_value:g})"


def one_sided_derivative(values: np.ndarray, h: float) -> float:
    """Second-order forward difference at node 0."""
    return (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)


def vertex_gradient(f: GridFunction) -> np.ndarray:
    """Inward derivative of every edge at the vertex (three-point one-sided stencil)."""
    grid = f.grid
    out = np.empty(grid.num_edges)
    flat = f.flat
    v0 = flat[0]
    for i, start in enumerate(grid.offsets()):
        out[i] = (-3.0 * v0 + 4.0 * flat[start] - flat[start + 1]) / (2.0 * grid.spacing[i])
    return out


def edge_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Central differences inside, second-order one-sided stencils at both ends."""
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    d[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return d


def sup_norm(f: GridFunction) -> float:
    return float(np.max(np.abs(f.flat)))
