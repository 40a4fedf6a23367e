"""Discrete Laplacian, bilinear forms, the coupled energy and its derivatives,
and the tensor spectral basis used for splitting and preconditioning.

The gradient part of every quadratic form is evaluated through the same
stencil (``l2_inner(laplacian_apply(f), g)``), so energy, residual and
Hessian share one discrete operator and one adjointness relation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np
import scipy.fft

from variational.errors import CapacityError, DomainError, InsufficientBasisError
from variational.grid import Boundary, DomainSpec, Field, Grid, Pair, l2_inner, lp_power, overlap


@dataclass(frozen=True)
class SystemParams:
    lambda1: float
    lambda2: float
    beta: float

    def __post_init__(self) -> None:
        vals = (float(self.lambda1), float(self.lambda2), float(self.beta))
        if not all(math.isfinite(x) for x in vals):
            raise DomainError(f"parameters must be finite, got {vals}")
        object.__setattr__(self, "lambda1", vals[0])
        object.__setattr__(self, "lambda2", vals[1])
        object.__setattr__(self, "beta", vals[2])

    @property
    def lambdas(self) -> tuple[float, float]:
        return (self.lambda1, self.lambda2)

    @property
    def symmetric(self) -> bool:
        return self.lambda1 == self.lambda2

    def swapped(self) -> "SystemParams":
        return SystemParams(self.lambda2, self.lambda1, self.beta)

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "beta": self.beta}


def problem_scale(params: SystemParams) -> float:
    return 1.0 + max(abs(params.lambda1), abs(params.lambda2))


def sobolev_shift(lam: float) -> float:
    """Shift of the Sobolev preconditioner: the natural norm when lam > 0."""
    return lam if lam > 0 else 1.0 + abs(lam)


# ---- Stencil ----

def _slab(ndim: int, axis: int, sl: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def laplacian_apply(f: Field) -> Field:
    """-Δ_h f. Neumann: ghost reflection; Dirichlet: zero extension, zero output on the boundary."""
    grid = f.grid
    neumann = grid.boundary is Boundary.NEUMANN
    x = f.values if neumann else grid.restrict(f.values)
    nd = x.ndim
    out = np.zeros_like(x)
    for axis, h in enumerate(grid.spacing):
        pad = [(0, 0)] * nd
        pad[axis] = (1, 1)
        xp = np.pad(x, pad, mode="reflect" if neumann else "constant")
        left = xp[_slab(nd, axis, slice(0, -2))]
        right = xp[_slab(nd, axis, slice(2, None))]
        out += (2.0 * x - left - right) / (h * h)
    if not neumann:
        out = grid.restrict(out)
    return Field(grid, out)


def bilinear_B(f: Field, g: Field, lam: float) -> float:
    return l2_inner(laplacian_apply(f), g) + lam * l2_inner(f, g)


def shifted_apply(f: Field, shift: float) -> Field:
    """(-Δ_h + shift) f, the operator inverted by :func:`precondition`."""
    grid = f.grid
    return Field(grid, laplacian_apply(f).values + shift * grid.restrict(f.values))


# ---- Spectral symbol and transforms ----

def _axis_symbol(n: int, h: float, boundary: Boundary) -> np.ndarray:
    k = np.arange(n) if boundary is Boundary.NEUMANN else np.arange(1, n - 1)
    # (2/h²)(1 - cos(πk/(n-1))) written without cancellation
    return (4.0 / (h * h)) * np.sin(0.5 * np.pi * k / (n - 1)) ** 2


@lru_cache(maxsize=32)
def _symbol(grid: Grid) -> np.ndarray:
    """Tensor eigenvalue array of -Δ_h (interior shape for Dirichlet)."""
    axes = [_axis_symbol(n, h, grid.boundary) for n, h in zip(grid.nodes_per_axis, grid.spacing)]
    sym = reduce(np.add.outer, axes) if len(axes) > 1 else axes[0]
    sym = np.ascontiguousarray(sym)
    sym.setflags(write=False)
    return sym


def mode_count(grid: Grid) -> int:
    if grid.boundary is Boundary.NEUMANN:
        return grid.size
    return int(np.prod([n - 2 for n in grid.nodes_per_axis]))


def precondition(f: Field, shift: float) -> Field:
    """Solve (-Δ_h + shift) g = f by diagonal division in the cosine/sine basis."""
    if not shift > 0:
        raise DomainError(f"preconditioner shift must be positive, got {shift}")
    grid = f.grid
    denom = _symbol(grid) + shift
    if grid.boundary is Boundary.NEUMANN:
        coef = scipy.fft.dctn(f.values, type=1)
        return Field(grid, scipy.fft.idctn(coef / denom, type=1))
    inner = (slice(1, -1),) * grid.dimension
    coef = scipy.fft.dstn(f.values[inner], type=1)
    out = np.zeros(grid.shape)
    out[inner] = scipy.fft.idstn(coef / denom, type=1)
    return Field(grid, out)


# ---- Spectral basis ----

def _axis_mode(n: int, L: float, k: int, boundary: Boundary) -> np.ndarray:
    j = np.arange(n)
    if boundary is Boundary.NEUMANN:
        norm = 1.0 / math.sqrt(L) if k in (0, n - 1) else math.sqrt(2.0 / L)
        return norm * np.cos(np.pi * k * j / (n - 1))
    vec = math.sqrt(2.0 / L) * np.sin(np.pi * k * j / (n - 1))
    vec[0] = vec[-1] = 0.0
    return vec


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """The ``count`` lowest eigenpairs of -Δ_h, sorted with multiplicity.

    ``modes[i]`` holds the per-axis mode numbers of eigenpair ``i``; Neumann
    numbers start at 0 (cosines), Dirichlet numbers at 1 (interior sines).
    """

    grid: Grid
    eigenvalues: np.ndarray
    modes: tuple[tuple[int, ...], ...]

    @property
    def boundary(self) -> Boundary:
        return self.grid.boundary

    @property
    def count(self) -> int:
        return len(self.modes)

    @property
    def complete(self) -> bool:
        return self.count == mode_count(self.grid)

    def eigenfield(self, i: int) -> Field:
        g = self.grid
        vecs = [
            _axis_mode(n, L, k, g.boundary)
            for n, L, k in zip(g.nodes_per_axis, g.domain.side_lengths, self.modes[i])
        ]
        vals = reduce(np.multiply.outer, vecs) if len(vecs) > 1 else vecs[0]
        return Field(g, vals)

    def continuum_eigenvalue(self, i: int) -> float:
        return math.pi ** 2 * sum(
            k * k / (L * L) for k, L in zip(self.modes[i], self.grid.domain.side_lengths)
        )

    def coefficients(self, f: Field, indices: range | list[int] | None = None) -> np.ndarray:
        idx = range(self.count) if indices is None else indices
        return np.array([l2_inner(f, self.eigenfield(i)) for i in idx])

    def expand(self, coeffs: np.ndarray, indices: range | list[int] | None = None) -> Field:
        idx = list(range(len(coeffs))) if indices is None else list(indices)
        out = np.zeros(self.grid.shape)
        for c, i in zip(coeffs, idx):
            out += c * self.eigenfield(i).values
        return Field(self.grid, out)


def eigenbasis(grid: Grid, count: int) -> SpectralBasis:
    total = mode_count(grid)
    if count < 1 or count > total:
        raise CapacityError(f"requested {count} modes, grid supports 1..{total}")
    sym = _symbol(grid)
    order = np.argsort(sym, axis=None, kind="stable")[:count]
    offset = 0 if grid.boundary is Boundary.NEUMANN else 1
    idx = np.unravel_index(order, sym.shape)
    modes = tuple(tuple(int(a[i]) + offset for a in idx) for i in range(count))
    eig = np.ascontiguousarray(sym.ravel()[order])
    eig.setflags(write=False)
    return SpectralBasis(grid=grid, eigenvalues=eig, modes=modes)


def smooth_random_field(basis: SpectralBasis, rng: np.random.Generator, n_modes: int = 8) -> Field:
    """Random combination of the lowest modes, amplitudes decaying with the eigenvalue."""
    m = min(n_modes, basis.count)
    damp = 1.0 / np.sqrt(1.0 + basis.eigenvalues[:m] / max(1.0, basis.eigenvalues[m - 1]))
    return basis.expand(rng.standard_normal(m) * damp)


# ---- Splitting ----

def tol_zero(lam: float) -> float:
    return 1e-9 * (1.0 + abs(lam))


@dataclass(frozen=True, eq=False)
class SubspaceSplit:
    """Sign split of B(·,·,lam) over the basis: K⁻, K⁰ and the rest (K⁺)."""

    lam: float
    tol_zero: float
    basis: SpectralBasis
    negative: tuple[int, ...]
    null: tuple[int, ...]
    tilde_fields: tuple[Field, ...]

    @property
    def tilde(self) -> tuple[int, ...]:
        return self.negative + self.null

    @property
    def tilde_dim(self) -> int:
        return len(self.tilde)

    @property
    def positive(self) -> range:
        """K⁺ indices inside the basis; modes beyond the basis are all in K⁺."""
        return range(self.tilde_dim, self.basis.count)

    @property
    def resonant(self) -> bool:
        return bool(self.null)

    def is_null(self, position: int) -> bool:
        """Whether the ``position``-th tilde direction belongs to K⁰."""
        return self.tilde[position] in self.null


def split(basis: SpectralBasis, lam: float) -> SubspaceSplit:
    tz = tol_zero(lam)
    shifted = basis.eigenvalues + lam
    if not basis.complete and shifted[-1] <= tz:
        raise InsufficientBasisError(
            f"basis of {basis.count} modes ends at mu={basis.eigenvalues[-1]:.6g}, "
            f"need every mode with mu + lambda <= {tz:.3g} (lambda={lam})"
        )
    negative = tuple(int(i) for i in np.flatnonzero(shifted < -tz))
    null = tuple(int(i) for i in np.flatnonzero(np.abs(shifted) <= tz))
    fields = tuple(basis.eigenfield(i) for i in negative + null)
    return SubspaceSplit(lam=lam, tol_zero=tz, basis=basis, negative=negative, null=null, tilde_fields=fields)


def lowest_eigenvalue(grid: Grid) -> float:
    return float(_symbol(grid).min())


def tilde_count(grid: Grid, lam: float) -> int:
    """Number of discrete modes with mu + lam <= tol_zero, i.e. dim H̃."""
    return int(np.count_nonzero(_symbol(grid) + lam <= tol_zero(lam)))


def split_for(grid: Grid, lam: float, extra: int = 1) -> SubspaceSplit:
    """Build the smallest basis that covers H̃ for ``lam`` (plus ``extra`` modes) and split it."""
    return split(eigenbasis(grid, min(tilde_count(grid, lam) + extra, mode_count(grid))), lam)


def project_tilde(f: Field, s: SubspaceSplit) -> Field:
    out = np.zeros(f.grid.shape)
    for phi in s.tilde_fields:
        out += l2_inner(f, phi) * phi.values
    return Field(f.grid, out)


def project_plus(f: Field, s: SubspaceSplit) -> Field:
    return f - project_tilde(f, s)


def continuum_split_dims(domain: DomainSpec, lam: float) -> tuple[int, int]:
    """(dim H⁻, dim H⁰) computed from the box eigenvalues π²Σk_i²/L_i²."""
    tz = tol_zero(lam)
    if lam > tz:
        return (0, 0)
    start = 0 if domain.boundary is Boundary.NEUMANN else 1
    reach = math.sqrt(max(-lam + tz, 0.0)) / math.pi
    ranges = [range(start, int(math.floor(reach * L)) + 2) for L in domain.side_lengths]
    neg = null = 0
    for ks in itertools.product(*ranges):
        mu = math.pi ** 2 * sum(k * k / (L * L) for k, L in zip(ks, domain.side_lengths))
        if mu + lam < -tz:
            neg += 1
        elif abs(mu + lam) <= tz:
            null += 1
    return (neg, null)


# ---- Energy and derivatives ----

def _residual_values(u: np.ndarray, v: np.ndarray, lap_u: np.ndarray, lam: float, beta: float) -> np.ndarray:
    return lap_u + lam * u - u * u * u - beta * u * (v * v)


def energy(p: Pair, params: SystemParams) -> float:
    bu = bilinear_B(p.u, p.u, params.lambda1)
    bv = bilinear_B(p.v, p.v, params.lambda2)
    quartic = (lp_power(p.u, 4) + lp_power(p.v, 4)) + 2.0 * params.beta * overlap(p.u, p.v)
    return 0.5 * bu + 0.5 * bv - 0.25 * quartic


def residual(p: Pair, params: SystemParams) -> Pair:
    grid = p.grid
    u, v = p.u.values, p.v.values
    ru = _residual_values(u, v, laplacian_apply(p.u).values, params.lambda1, params.beta)
    rv = _residual_values(v, u, laplacian_apply(p.v).values, params.lambda2, params.beta)
    return Pair(Field(grid, grid.restrict(ru)), Field(grid, grid.restrict(rv)))


def hessian_apply(p: Pair, d: Pair, params: SystemParams) -> Pair:
    grid = p.grid
    u, v = p.u.values, p.v.values
    z, e = d.u.values, d.v.values
    b = params.beta
    hu = laplacian_apply(d.u).values + params.lambda1 * z - 3.0 * u * u * z - b * (v * v) * z - 2.0 * b * (u * v) * e
    hv = laplacian_apply(d.v).values + params.lambda2 * e - 3.0 * v * v * e - b * (u * u) * e - 2.0 * b * (u * v) * z
    return Pair(Field(grid, grid.restrict(hu)), Field(grid, grid.restrict(hv)))


def pair_inner(a: Pair, b: Pair) -> float:
    return l2_inner(a.u, b.u) + l2_inner(a.v, b.v)


def precondition_pair(r: Pair, params: SystemParams) -> Pair:
    return Pair(
        precondition(r.u, sobolev_shift(params.lambda1)),
        precondition(r.v, sobolev_shift(params.lambda2)),
    )
