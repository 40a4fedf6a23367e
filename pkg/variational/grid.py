"""Box domains, vertex-centred tensor grids, nodal fields and quadrature.

Every integral in the package goes through :func:`integrate` (or one of the
helpers built on it), so the summation order is fixed in one place: the
weighted nodal products are accumulated sequentially in row-major order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, reduce
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from config import settings
from variational.errors import (
    CapacityError,
    DomainError,
    GridMismatchError,
    InvalidResolutionError,
    NonFiniteFieldError,
)

Number = Union[int, float]


class Boundary(str, Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class DomainSpec:
    """Box ``[0, L_0] x ... x [0, L_{N-1}]`` with a boundary condition."""

    dimension: int
    side_lengths: tuple[float, ...]
    boundary: Boundary = Boundary.NEUMANN

    def __post_init__(self) -> None:
        if not 1 <= int(self.dimension) <= 4:
            raise DomainError(f"dimension must be in 1..4, got {self.dimension}")
        sides = tuple(float(x) for x in self.side_lengths)
        if len(sides) != self.dimension:
            raise DomainError(
                f"expected {self.dimension} side lengths, got {len(sides)}"
            )
        if not all(np.isfinite(x) and x > 0 for x in sides):
            raise DomainError(f"side lengths must be positive, got {sides}")
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "side_lengths", sides)
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @classmethod
    def unit(cls, dimension: int, boundary: Boundary | str = Boundary.NEUMANN) -> "DomainSpec":
        return cls(dimension, (1.0,) * dimension, Boundary(boundary))

    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "side_lengths": list(self.side_lengths),
            "boundary": self.boundary.value,
        }


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform vertex-centred grid with tensor trapezoid weights.

    Two grids compare equal when they share domain and node counts; the
    weights are derived data and take no part in equality or hashing.
    """

    domain: DomainSpec
    nodes_per_axis: tuple[int, ...]
    spacing: tuple[float, ...]
    quad_weights: np.ndarray = field(repr=False)

    def _key(self) -> tuple:
        return (self.domain, self.nodes_per_axis)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def boundary(self) -> Boundary:
        return self.domain.boundary

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def max_spacing(self) -> float:
        return max(self.spacing)

    def volume(self) -> float:
        return self.domain.volume()

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(
            np.linspace(0.0, L, n)
            for L, n in zip(self.domain.side_lengths, self.nodes_per_axis)
        )

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.coordinates, indexing="ij"))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dimension] = True
        mask.setflags(write=False)
        return mask

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Zero the boundary nodes on Dirichlet grids; identity otherwise."""
        if self.boundary is Boundary.DIRICHLET:
            return np.where(self.interior_mask, values, 0.0)
        return values

    def describe(self) -> dict:
        out = self.domain.to_dict()
        out["nodes_per_axis"] = list(self.nodes_per_axis)
        return out


def build_grid(domain: DomainSpec, nodes_per_axis: Sequence[int] | int) -> Grid:
    if isinstance(nodes_per_axis, (int, np.integer)):
        nodes_per_axis = (int(nodes_per_axis),) * domain.dimension
    nodes = tuple(int(n) for n in nodes_per_axis)
    if len(nodes) != domain.dimension:
        raise InvalidResolutionError(
            f"expected {domain.dimension} node counts, got {len(nodes)}"
        )
    if any(n < 3 for n in nodes):
        raise InvalidResolutionError(f"every axis needs at least 3 nodes, got {nodes}")
    total = int(np.prod(nodes))
    if domain.dimension == 4 and total > settings.MAX_NODES_4D:
        raise CapacityError(
            f"4D grid with {total} nodes exceeds the limit of {settings.MAX_NODES_4D} "
            "(raise GROUNDSTATE_MAX_NODES_4D to allow it)"
        )

    spacing = tuple(L / (n - 1) for L, n in zip(domain.side_lengths, nodes))
    axis_weights = []
    for h, n in zip(spacing, nodes):
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        axis_weights.append(w)
    weights = reduce(np.multiply.outer, axis_weights) if len(nodes) > 1 else axis_weights[0]
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    weights.setflags(write=False)
    return Grid(domain=domain, nodes_per_axis=nodes, spacing=spacing, quad_weights=weights)


# ---- Fields ----

@dataclass(frozen=True, eq=False)
class Field:
    """Nodal samples of a scalar function; values are read-only."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    # numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64)
        if vals.size != self.grid.size:
            raise GridMismatchError(
                f"field has {vals.size} values, grid has {self.grid.size} nodes"
            )
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteFieldError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: Number) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        """Sample ``fn(x_0, ..., x_{N-1})`` on the grid (arguments are ij meshes)."""
        vals = np.broadcast_to(np.asarray(fn(*grid.mesh()), dtype=np.float64), grid.shape)
        return cls(grid, vals)

    def _other(self, other: "Field | Number") -> np.ndarray | float:
        if isinstance(other, Field):
            _check_same(self, other)
            return other.values
        return float(other)

    def __add__(self, other: "Field | Number") -> "Field":
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other: "Field | Number") -> "Field":
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other: Number) -> "Field":
        return Field(self.grid, float(other) - self.values)

    def __mul__(self, other: "Field | Number") -> "Field":
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "Field":
        return Field(self.grid, self.values / float(other))

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __abs__(self) -> "Field":
        return Field(self.grid, np.abs(self.values))

    def positive_part(self) -> "Field":
        return Field(self.grid, np.maximum(self.values, 0.0))

    def negative_part(self) -> "Field":
        """max(-f, 0), so that f = f_+ - f_-."""
        return Field(self.grid, np.maximum(-self.values, 0.0))

    def restricted(self) -> "Field":
        return Field(self.grid, self.grid.restrict(self.values))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def spread(self) -> float:
        return float(self.values.max() - self.values.min())

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True)
class Pair:
    u: Field
    v: Field

    def __post_init__(self) -> None:
        _check_same(self.u, self.v)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: Grid) -> "Pair":
        return cls(Field.zeros(grid), Field.zeros(grid))

    @classmethod
    def constant(cls, grid: Grid, c1: Number, c2: Number) -> "Pair":
        return cls(Field.constant(grid, c1), Field.constant(grid, c2))

    def swapped(self) -> "Pair":
        return Pair(self.v, self.u)

    def scaled(self, t: float, s: float) -> "Pair":
        return Pair(self.u * t, self.v * s)

    def __add__(self, other: "Pair") -> "Pair":
        return Pair(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "Pair") -> "Pair":
        return Pair(self.u - other.u, self.v - other.v)

    def __mul__(self, a: Number) -> "Pair":
        return Pair(self.u * a, self.v * a)

    __rmul__ = __mul__

    def __neg__(self) -> "Pair":
        return Pair(-self.u, -self.v)

    def __abs__(self) -> "Pair":
        return Pair(abs(self.u), abs(self.v))

    def max_abs(self) -> float:
        return max(self.u.max_abs(), self.v.max_abs())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u.flat, self.v.flat])

    @classmethod
    def from_stacked(cls, grid: Grid, x: np.ndarray) -> "Pair":
        n = grid.size
        return cls(Field(grid, x[:n]), Field(grid, x[n:]))


# ---- Quadrature ----

def _check_same(*fields: Field) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")


def _accumulate(a: np.ndarray) -> float:
    # sequential, index order
    return float(np.cumsum(a, axis=None)[-1])


def integrate(f: Field) -> float:
    return _accumulate(f.grid.quad_weights * f.values)


def l2_inner(f: Field, g: Field) -> float:
    _check_same(f, g)
    return _accumulate(f.grid.quad_weights * (f.values * g.values))


def lp_power(f: Field, p: float) -> float:
    """∫|f|^p, without the root."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if p == 2:
        a = a * a
    elif p == 4:
        a = a * a
        a = a * a
    else:
        a = a ** p
    return _accumulate(f.grid.quad_weights * a)


def lp_norm(f: Field, p: float) -> float:
    return lp_power(f, p) ** (1.0 / p)


def overlap(u: Field, v: Field) -> float:
    """∫u²v²."""
    _check_same(u, v)
    return _accumulate(u.grid.quad_weights * ((u.values * u.values) * (v.values * v.values)))


# ---- Dumps ----

def _sidecar(grid: Grid, **extra) -> dict:
    meta = grid.describe()
    meta["dtype"] = "<f8"
    meta["order"] = "row-major, axis 0 slowest"
    meta.update(extra)
    return meta


def dump_field(f: Field, prefix: str | Path) -> Path:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    f.values.astype("<f8").tofile(prefix.with_suffix(".bin"))
    with open(prefix.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(_sidecar(f.grid), fh, indent=2, sort_keys=True)
    return prefix.with_suffix(".bin")


def dump_pair(p: Pair, prefix: str | Path) -> list[Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, comp in (("u", p.u), ("v", p.v)):
        path = prefix.parent / f"{prefix.name}_{name}.bin"
        comp.values.astype("<f8").tofile(path)
        paths.append(path)
    with open(prefix.parent / f"{prefix.name}.json", "w", encoding="utf-8") as fh:
        json.dump(_sidecar(p.grid, components=["u", "v"]), fh, indent=2, sort_keys=True)
    return paths


def _grid_from_sidecar(meta: dict) -> Grid:
    domain = DomainSpec(meta["dimension"], tuple(meta["side_lengths"]), Boundary(meta["boundary"]))
    return build_grid(domain, meta["nodes_per_axis"])


def load_field(prefix: str | Path) -> Field:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json"), encoding="utf-8") as fh:
        grid = _grid_from_sidecar(json.load(fh))
    return Field(grid, np.fromfile(prefix.with_suffix(".bin"), dtype="<f8"))


def load_pair(prefix: str | Path) -> Pair:
    prefix = Path(prefix)
    with open(prefix.parent / f"{prefix.name}.json", encoding="utf-8") as fh:
        grid = _grid_from_sidecar(json.load(fh))
    u, v = (
        Field(grid, np.fromfile(prefix.parent / f"{prefix.name}_{c}.bin", dtype="<f8"))
        for c in ("u", "v")
    )
    return Pair(u, v)
