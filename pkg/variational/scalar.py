"""Least-energy states of the scalar equation -Δz + λz = z³ and the level L_λ.

Two solvers share the descent engine:

* definite (B(·,·,λ) positive): Sobolev-gradient descent on the Nehari set,
  reprojecting by the closed-form ray scaling after every step;
* indefinite (λ ≤ 0, or Dirichlet below the first eigenvalue): descent over
  directions in H⁺ where every trial point is replaced by the maximiser of
  Ψ_λ(t·w + w̃) over t > 0 and w̃ ∈ H̃_λ.

Levels are reported as the minimum over converged multistart candidates,
an upper bound for the continuum level, never a certified value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from config import settings
from utils.logger import get_logger
from variational.constants import scalar_bound, sobolev_S
from variational.descent import (
    DescentResult,
    FibreSolution,
    InnerSolveError,
    SolveOptions,
    descend,
    free_nodes,
    maximize_fibre,
    newton_polish,
    node_weights,
    run_branches,
    select_best,
)
from variational.errors import DomainError, NotInConeError
from variational.grid import Boundary, Field, Grid, l2_inner, lp_power
from variational.operators import (
    SpectralBasis,
    SubspaceSplit,
    bilinear_B,
    eigenbasis,
    laplacian_apply,
    lowest_eigenvalue,
    mode_count,
    precondition,
    project_plus,
    smooth_random_field,
    sobolev_shift,
    split_for,
    tol_zero,
)

log = get_logger("scalar", settings.LOG_LEVEL)

# Tikhonov weight on resonant (K⁰) directions of the inner maximisation
RESONANCE_TIKHONOV = 1e-10


class ScalarSolveOptions(SolveOptions):
    eigen_seeds: int = 3
    random_modes: int = 8


@dataclass
class ScalarReport:
    lam: float
    grid: Grid
    z: Field
    level: float
    residual: float
    converged: bool
    is_constant: bool
    method: str
    tilde_dim: int = 0
    seed: int = 0
    iterations: int = 0
    flags: list[str] = field(default_factory=list)
    comparisons: dict = field(default_factory=dict)
    candidates: list[dict] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    @property
    def resonant(self) -> bool:
        return "resonant" in self.flags

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "grid": self.grid.describe(),
            "method": self.method,
            "level": self.level,
            "residual": self.residual,
            "converged": self.converged,
            "is_constant": self.is_constant,
            "tilde_dim": self.tilde_dim,
            "seed": self.seed,
            "iterations": self.iterations,
            "flags": list(self.flags),
            "comparisons": dict(self.comparisons),
            "candidates": list(self.candidates),
        }


# ---- Functionals ----

def scalar_energy(z: Field, lam: float) -> float:
    return 0.5 * bilinear_B(z, z, lam) - 0.25 * lp_power(z, 4)


def scalar_residual(z: Field, lam: float) -> Field:
    g = z.grid
    x = z.values
    return Field(g, g.restrict(laplacian_apply(z).values + lam * x - x * x * x))


def scalar_hessian_apply(z: Field, d: Field, lam: float) -> Field:
    g = z.grid
    x = z.values
    return Field(g, g.restrict(laplacian_apply(d).values + lam * d.values - 3.0 * (x * x) * d.values))


def scalar_quotient(z: Field, lam: float) -> float:
    """B(z,z,λ)/|z|₄²; its infimum over the definite cone is 2√L_λ."""
    q4 = lp_power(z, 4)
    if q4 <= 0:
        raise DomainError("quotient undefined for z = 0")
    return bilinear_B(z, z, lam) / math.sqrt(q4)


def scalar_nehari_project(z: Field, lam: float) -> Field:
    b = bilinear_B(z, z, lam)
    if not b > 0:
        raise NotInConeError(f"B(z,z,{lam}) = {b:.6g} <= 0")
    q4 = lp_power(z, 4)
    if not q4 > 0:
        raise NotInConeError("|z|_4 = 0")
    return z * math.sqrt(b / q4)


def is_definite(grid: Grid, lam: float) -> bool:
    """B(·,·,λ) positive definite on the discrete space."""
    return lowest_eigenvalue(grid) + lam > tol_zero(lam)


def _polish_scalar(z: Field, lam: float, shift: float, tol: float) -> Field:
    g = z.grid
    x, _ = newton_polish(
        z.flat,
        residual_fn=lambda y: scalar_residual(Field(g, y), lam).flat,
        jacobian_fn=lambda y: (lambda d: scalar_hessian_apply(Field(g, y), Field(g, d), lam).flat),
        precond_fn=lambda y: precondition(Field(g, y), shift).flat,
        weights=node_weights(g),
        free=free_nodes(g),
        tol=tol,
    )
    return Field(g, x)


# ---- Descent problems ----

class _ScalarProblem:
    def __init__(self, lam: float, grid: Grid, opts: ScalarSolveOptions) -> None:
        self.lam = lam
        self.grid = grid
        self.opts = opts
        self.scale = 1.0 + abs(lam)
        self.shift = sobolev_shift(lam)

    def objective(self, z: Field) -> float:
        return scalar_energy(z, self.lam)

    def residual(self, z: Field) -> Field:
        return scalar_residual(z, self.lam)

    def precondition(self, r: Field) -> Field:
        return precondition(r, self.shift)

    def pairing(self, a: Field, b: Field) -> float:
        return l2_inner(a, b)

    def polish(self, z: Field) -> Optional[Field]:
        return _polish_scalar(z, self.lam, self.shift, 0.01 * self.opts.residual_tol * self.scale)


class NehariScalarProblem(_ScalarProblem):
    def retract(self, z: Field) -> Field:
        return scalar_nehari_project(z, self.lam)

    def constraints(self, z: Field) -> tuple[float, ...]:
        return (bilinear_B(z, z, self.lam) - lp_power(z, 4),)


class FibreScalarProblem(_ScalarProblem):
    """Outer variable lives in H⁺; retraction maximises over the fibre ℝ₊w ⊕ H̃."""

    def __init__(self, lam: float, grid: Grid, opts: ScalarSolveOptions, sp: SubspaceSplit) -> None:
        super().__init__(lam, grid, opts)
        self.shift = 1.0 + abs(lam)
        self.split = sp
        self.tau = np.array([0.0] + [RESONANCE_TIKHONOV if sp.is_null(i) else 0.0 for i in range(sp.tilde_dim)])
        self.last: Optional[FibreSolution] = None

    def ray_start(self, z: Field) -> Field:
        w = project_plus(z, self.split)
        return scalar_nehari_project(w, self.lam)

    def retract(self, z: Field) -> Field:
        w = project_plus(z, self.split)
        if not lp_power(w, 4) > 0:
            raise NotInConeError("direction has no H+ component")
        start = [1.0] + [l2_inner(z, phi) for phi in self.split.tilde_fields]
        sol = maximize_fibre(
            [w, *self.split.tilde_fields],
            np.array(start),
            value_fn=lambda f: scalar_energy(f, self.lam),
            residual_fn=lambda f: scalar_residual(f, self.lam),
            hessian_fn=lambda f, d: scalar_hessian_apply(f, d, self.lam),
            pairing=l2_inner,
            positive=(0,),
            tikhonov=self.tau,
            tol=self.opts.inner_tol,
            max_iters=self.opts.inner_max_iters,
        )
        self.last = sol
        return sol.state

    def constraints(self, z: Field) -> tuple[float, ...]:
        r = self.residual(z)
        return (l2_inner(r, z),) + tuple(l2_inner(r, phi) for phi in self.split.tilde_fields)


# ---- Seeds ----

def _seeds(basis: SpectralBasis, lam: float, opts: ScalarSolveOptions, skip: int) -> list[Field]:
    grid = basis.grid
    seeds: list[Field] = []
    if skip == 0:
        seeds.append(Field.constant(grid, 1.0).restricted())
    first = skip if grid.boundary is Boundary.DIRICHLET or skip > 0 else 1
    for i in range(first, min(first + opts.eigen_seeds, basis.count)):
        seeds.append(basis.eigenfield(i))
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.multistart):
        seeds.append(smooth_random_field(basis, rng, opts.random_modes))
    return seeds


def _comparisons(lam: float, grid: Grid, level: float) -> dict:
    out: dict = {"constant_energy": None, "constant_margin": None, "tent_bound": None, "critical_level": None}
    neumann = grid.boundary is Boundary.NEUMANN
    if lam > 0 and neumann:
        ce = lam * lam * grid.volume() / 4.0
        out["constant_energy"] = ce
        out["constant_margin"] = ce - level
        out["tent_bound"] = scalar_bound(lam, grid.dimension)
    if grid.dimension == 4:
        # half-bubble threshold for boundary concentration
        out["critical_level"] = sobolev_S() ** 2 / 8.0
    return out


def _finish(
    lam: float,
    grid: Grid,
    opts: ScalarSolveOptions,
    results: list[DescentResult],
    method: str,
    tilde_dim: int,
    flags: list[str],
    flip: bool,
) -> ScalarReport:
    best = select_best(results)
    scale = 1.0 + abs(lam)
    candidates = [r.summary() for r in results]
    if best is None:
        log.warning("scalar %s lambda=%g: every seed was rejected", method, lam)
        z = Field.zeros(grid)
        return ScalarReport(
            lam=lam, grid=grid, z=z, level=math.nan, residual=math.inf, converged=False,
            is_constant=True, method=method, tilde_dim=tilde_dim, seed=opts.seed,
            flags=flags + ["no-candidate"], candidates=candidates,
        )
    z = best.state
    if flip and float(z.values.max()) <= 0:
        z = -z
    if not best.converged:
        flags.append("not-converged")
        log.warning("scalar %s lambda=%g: best candidate did not converge (residual %.3e)", method, lam, best.residual)
    level = scalar_energy(z, lam)
    report = ScalarReport(
        lam=lam,
        grid=grid,
        z=z,
        level=level,
        residual=best.residual,
        converged=best.converged,
        is_constant=z.spread() < 1e-7 * scale,
        method=method,
        tilde_dim=tilde_dim,
        seed=opts.seed,
        iterations=best.iterations,
        flags=flags + [f for f in best.flags if f not in flags],
        comparisons=_comparisons(lam, grid, level),
        candidates=candidates,
        history=best.history,
    )
    log.info(
        "scalar %s lambda=%g: level=%.12g residual=%.3e constant=%s (%d/%d seeds converged)",
        method, lam, level, report.residual, report.is_constant,
        sum(r.converged for r in results), len(results),
    )
    return report


# ---- Solvers ----

def solve_scalar_definite(lam: float, grid: Grid, opts: ScalarSolveOptions | None = None) -> ScalarReport:
    opts = opts or ScalarSolveOptions()
    if not is_definite(grid, lam):
        raise DomainError(f"B(.,.,{lam}) is not positive definite on this grid; use the indefinite solver")
    basis = eigenbasis(grid, min(4 + max(opts.eigen_seeds, opts.random_modes), mode_count(grid)))
    seeds = _seeds(basis, lam, opts, skip=0)

    def branch(i: int, seed: Field) -> DescentResult:
        problem = NehariScalarProblem(lam, grid, opts)
        return descend(problem, seed, opts, label=f"scalar-nehari[{i}]", index=i)

    results = run_branches(branch, seeds)
    return _finish(lam, grid, opts, results, "nehari", 0, [], flip=True)


def solve_scalar_indefinite(lam: float, grid: Grid, opts: ScalarSolveOptions | None = None) -> ScalarReport:
    opts = opts or ScalarSolveOptions()
    if lam > 0 and is_definite(grid, lam):
        raise DomainError(f"indefinite solver needs lambda <= 0, got {lam}")
    sp = split_for(grid, lam, extra=4 + max(opts.eigen_seeds, opts.random_modes))
    basis = sp.basis
    flags: list[str] = []
    if sp.resonant:
        flags.append("resonant")
        log.warning("lambda=%g is resonant (dim H0 = %d); regularising the inner problem", lam, len(sp.null))

    seeds = _seeds(basis, lam, opts, skip=sp.tilde_dim)

    def branch(i: int, seed: Field) -> DescentResult:
        problem = FibreScalarProblem(lam, grid, opts, sp)
        try:
            start = problem.ray_start(seed)
        except NotInConeError as e:
            return DescentResult(label=f"scalar-fibre[{i}]", index=i, error=f"seed rejected: {e}")
        res = descend(problem, start, opts, label=f"scalar-fibre[{i}]", index=i)
        if res.ok:
            try:
                problem.retract(res.state)
                if problem.last is not None and not problem.last.concave:
                    res.flags.append("inner-solve-failure")
            except (InnerSolveError, NotInConeError):
                res.flags.append("inner-solve-failure")
        return res

    results = run_branches(branch, seeds)
    report = _finish(lam, grid, opts, results, "generalized-nehari", sp.tilde_dim, flags, flip=False)
    if "inner-solve-failure" in report.flags:
        log.warning("scalar lambda=%g: inner maximisation not concave at the reported candidate", lam)
    return report


def solve_scalar(lam: float, grid: Grid, opts: ScalarSolveOptions | None = None) -> ScalarReport:
    if is_definite(grid, lam):
        return solve_scalar_definite(lam, grid, opts)
    return solve_scalar_indefinite(lam, grid, opts)


@lru_cache(maxsize=64)
def _memo_scalar(lam: float, grid: Grid, opts: ScalarSolveOptions | None) -> ScalarReport:
    return solve_scalar(lam, grid, opts)


def cached_scalar(lam: float, grid: Grid, opts: ScalarSolveOptions | None = None) -> ScalarReport:
    """Memoised :func:`solve_scalar`; the system solvers ask for the same levels repeatedly.

    Each call gets its own copy, so callers may annotate the report freely.
    """
    rep = _memo_scalar(float(lam), grid, opts)
    return replace(
        rep,
        flags=list(rep.flags),
        comparisons=dict(rep.comparisons),
        candidates=list(rep.candidates),
        history=list(rep.history),
    )


def sobolev_constant(grid: Grid, lam: float = 1.0, opts: ScalarSolveOptions | None = None) -> float:
    """Discrete C_{S,λ} = inf B(u,u,λ)/|u|₄², obtained as 2√L_λ; λ = 1 gives C_S."""
    if not is_definite(grid, lam):
        raise DomainError(f"Sobolev quotient needs a definite form, got lambda={lam}")
    report = cached_scalar(lam, grid, opts)
    return scalar_quotient(report.z, lam)
