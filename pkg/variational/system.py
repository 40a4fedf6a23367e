"""Solvers for the coupled system.

Each solver is a constraint plug-in for the descent engine:

=================  ==========================================================
nehari             two scaling constraints, closed-form reprojection
mountain pass      one ray scaling; minimises the reduced quotient
generalized        two scalings plus stationarity on H̃ (inner fibre maximum)
zero mass          two scalings plus the constant shift of v (inner Newton)
symmetric          positive-parts functional, sign-structured seeds
=================  ==========================================================

Reported energies are upper bounds for the corresponding levels, certified
only by their residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import Field as PField

from config import settings
from utils.logger import get_logger
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
    solve_fibre_critical,
)
from variational.errors import (
    DomainError,
    GramDegenerateError,
    InfeasibleScalingError,
    NotInConeError,
)
from variational.grid import Boundary, Field, Grid, Pair, integrate, l2_inner, lp_norm, lp_power, overlap
from variational.operators import (
    SubspaceSplit,
    SystemParams,
    bilinear_B,
    eigenbasis,
    energy,
    hessian_apply,
    laplacian_apply,
    mode_count,
    pair_inner,
    precondition_pair,
    problem_scale,
    project_plus,
    residual,
    smooth_random_field,
    split_for,
)
from variational.regimes import BETA_UNDERBAR_CAP, beta_underbar, constant_solutions
from variational.scalar import RESONANCE_TIKHONOV, ScalarReport, ScalarSolveOptions, cached_scalar

log = get_logger("system", settings.LOG_LEVEL)

LEVEL_TAGS = {
    "nehari": "nehari m_beta",
    "mp": "mountain-pass c_beta",
    "gnehari": "generalized-nehari m_beta",
    "zeromass": "zero-mass m_beta",
    "symmetric": "symmetric l_beta-candidate",
}


class SystemSolveOptions(SolveOptions):
    random_modes: int = 8
    eigen_seeds: int = 3
    reseed_attempts: int = PField(default=3, ge=0)
    with_bounds: bool = True


def scalar_options(opts: SolveOptions) -> ScalarSolveOptions:
    shared = opts.model_dump(include=set(SolveOptions.model_fields))
    shared["record_history"] = False
    return ScalarSolveOptions(**shared)


# ---- Scalings and constraints ----

@dataclass(frozen=True)
class NehariScaling:
    t: float
    s: float

    def __post_init__(self) -> None:
        for name in ("t", "s"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise InfeasibleScalingError(f"{name} = {val} is not a positive scaling")


def nehari_scaling(u: Field, v: Field, params: SystemParams) -> NehariScaling:
    """(t, s) with (tu, sv) on the two-constraint Nehari set."""
    qu = lp_power(u, 4)
    qv = lp_power(v, 4)
    if not (qu > 0 and qv > 0):
        raise GramDegenerateError("a component vanishes")
    bo = params.beta * overlap(u, v)
    return _gram_scaling(bilinear_B(u, u, params.lambda1), bilinear_B(v, v, params.lambda2), qu, qv, bo)


def _gram_scaling(bu: float, bv: float, qu: float, qv: float, bo: float) -> NehariScaling:
    """Solve [[qu, bo], [bo, qv]]·(t², s²) = (bu, bv)."""
    d = qu * qv - bo * bo
    if not d > 1e-14 * (qu * qv):
        raise GramDegenerateError(f"|u|^4|v|^4 - beta^2 overlap^2 = {d:.3e}")
    t2 = (bu * qv - bo * bv) / d
    s2 = (bv * qu - bo * bu) / d
    if not (t2 > 0 and s2 > 0):
        raise InfeasibleScalingError(f"t^2 = {t2:.3e}, s^2 = {s2:.3e}")
    return NehariScaling(math.sqrt(t2), math.sqrt(s2))


def _mean(f: Field) -> float:
    return integrate(f) / f.grid.volume()


def constraint_functionals(pair: Pair, params: SystemParams, mode: str = "two") -> tuple[float, ...]:
    u, v = pair.u, pair.v
    bo = params.beta * overlap(u, v)
    g1 = bilinear_B(u, u, params.lambda1) - lp_power(u, 4) - bo
    g2 = bilinear_B(v, v, params.lambda2) - lp_power(v, 4) - bo
    if mode == "two":
        return (g1, g2)
    if mode == "zero-mass":
        uu, vv = u.values, v.values
        g3 = integrate(Field(u.grid, vv * vv * vv + params.beta * (uu * uu) * vv)) - params.lambda2 * integrate(v)
        return (g1, g2, g3)
    raise DomainError(f"unknown constraint mode {mode!r}")


def constraint_jacobian(pair: Pair, params: SystemParams, mode: str = "two") -> np.ndarray:
    """T_ij = ⟨G_i'(p), e_j⟩ along (u,0), (0,v) [, (0,1)], in the closed form valid on the constraint set."""
    u, v = pair.u, pair.v
    b = params.beta
    qu, qv, o = lp_power(u, 4), lp_power(v, 4), overlap(u, v)
    two = np.array([[-2.0 * qu, -2.0 * b * o], [-2.0 * b * o, -2.0 * qv]])
    if mode == "two":
        return two
    if mode != "zero-mass":
        raise DomainError(f"unknown constraint mode {mode!r}")
    vv = v.values
    c3 = integrate(Field(v.grid, vv * vv * vv))
    corner = 3.0 * lp_power(v, 2) + b * lp_power(u, 2)
    return np.array([
        [two[0, 0], two[0, 1], 2.0 * c3],
        [two[1, 0], two[1, 1], -2.0 * c3],
        [-2.0 * c3, 2.0 * c3, corner],
    ])


# ---- Closed-form competitors ----

def mountain_pass_quotient(pair: Pair, params: SystemParams) -> float:
    """B(p,p)² / (4·(|u|₄⁴ + 2β∫u²v² + |v|₄⁴)); scale invariant."""
    bb = bilinear_B(pair.u, pair.u, params.lambda1) + bilinear_B(pair.v, pair.v, params.lambda2)
    d = (lp_power(pair.u, 4) + lp_power(pair.v, 4)) + 2.0 * params.beta * overlap(pair.u, pair.v)
    if not d > 0:
        raise GramDegenerateError(f"quartic denominator {d:.3e} <= 0")
    return bb * bb / (4.0 * d)


def symmetric_candidate(omega: Field, beta: float) -> Pair:
    """(ω, ω)/√(1+β), a solution whenever ω solves the scalar equation."""
    if not beta > -1.0:
        raise DomainError(f"symmetric candidate needs beta > -1, got {beta}")
    w = omega * (1.0 / math.sqrt(1.0 + beta))
    return Pair(w, w)


def decoupled_test_pair(omega1: Field, omega2: Field, params: SystemParams) -> Pair:
    sc = nehari_scaling(omega1, omega2, params)
    return Pair(omega1, omega2).scaled(sc.t, sc.s)


def symmetric_functional(pair: Pair, lam: float, beta: float) -> float:
    """Positive-parts functional with μ = λ − 1; equals the energy on nonnegative pairs."""
    mu = lam - 1.0
    u, v = pair.u, pair.v
    up, vp = u.positive_part(), v.positive_part()
    norm = bilinear_B(u, u, 1.0) + bilinear_B(v, v, 1.0)
    quad = mu * (lp_power(up, 2) + lp_power(vp, 2))
    quartic = (lp_power(up, 4) + lp_power(vp, 4)) + 2.0 * beta * overlap(u, v)
    return 0.5 * norm + 0.5 * quad - 0.25 * quartic


def symmetric_gradient(pair: Pair, lam: float, beta: float) -> Pair:
    """L² gradient of the positive-parts functional: -Δu + u + μu₊ - u₊³ - βuv², and the same for v."""
    grid = pair.grid
    mu = lam - 1.0
    u, v = pair.u.values, pair.v.values
    out = []
    for f, other, lap in ((u, v, laplacian_apply(pair.u)), (v, u, laplacian_apply(pair.v))):
        fp = np.maximum(f, 0.0)
        out.append(Field(grid, grid.restrict(lap.values + f + mu * fp - fp ** 3 - beta * f * other * other)))
    return Pair(*out)


def symmetric_scaling(u: Field, v: Field, lam: float, beta: float) -> NehariScaling:
    """(t, s) with (tu, sv) on the Nehari set of the positive-parts functional."""
    mu = lam - 1.0
    up, vp = u.positive_part(), v.positive_part()
    qu, qv = lp_power(up, 4), lp_power(vp, 4)
    if not (qu > 0 and qv > 0):
        raise GramDegenerateError("a component has no positive part")
    bu = bilinear_B(u, u, 1.0) + mu * lp_power(up, 2)
    bv = bilinear_B(v, v, 1.0) + mu * lp_power(vp, 2)
    if not (bu > 0 and bv > 0):
        raise NotInConeError(f"quadratic parts {bu:.3e}, {bv:.3e} must be positive")
    return _gram_scaling(bu, bv, qu, qv, beta * overlap(u, v))


# ---- Classification ----

@dataclass(frozen=True)
class SolutionFlags:
    fully_nontrivial: bool
    semi_trivial: bool
    trivial: bool
    constant: bool
    positive: bool
    sign_changing: bool
    constant_family: Optional[str] = None

    def names(self) -> list[str]:
        out = [k for k in ("fully_nontrivial", "semi_trivial", "trivial", "constant", "positive", "sign_changing") if getattr(self, k)]
        if not self.constant:
            out.append("non_constant")
        return out


def classify_solution(pair: Pair, params: SystemParams, nontrivial_factor: float = 1e-6, constant_factor: float = 1e-7) -> SolutionFlags:
    scale = problem_scale(params)
    vol = pair.grid.volume()
    nt = nontrivial_factor * math.sqrt(vol) * scale
    ct = constant_factor * scale
    alive = [lp_norm(f, 2) > nt for f in (pair.u, pair.v)]
    constant = pair.u.spread() < ct and pair.v.spread() < ct
    live = [f for f, a in zip((pair.u, pair.v), alive) if a]
    positive = bool(live) and all(float(f.values.min()) > -ct for f in (pair.u, pair.v))
    sign_changing = any(float(f.values.min()) < -ct and float(f.values.max()) > ct for f in live)
    family = None
    if constant and any(alive):
        c1, c2 = _mean(pair.u), _mean(pair.v)
        for fam in constant_solutions(params):
            if fam.contains(c1, c2, params):
                family = fam.kind
                break
    return SolutionFlags(
        fully_nontrivial=all(alive),
        semi_trivial=alive[0] != alive[1],
        trivial=not any(alive),
        constant=constant,
        positive=positive,
        sign_changing=sign_changing,
        constant_family=family,
    )


# ---- Report ----

@dataclass
class SolveReport:
    method: str
    level_tag: str
    params: SystemParams
    grid: Grid
    pair: Pair
    energy: float
    residual: float
    constraint_residuals: tuple[float, ...]
    iterations: int
    converged: bool
    flags: list[str]
    seed: int
    outside_theory: bool = False
    notes: list[str] = field(default_factory=list)
    component_gap: float = 0.0
    overlap: float = 0.0
    bounds: dict = field(default_factory=dict)
    ground_state: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    candidates: list[dict] = field(default_factory=list)

    @property
    def fully_nontrivial(self) -> bool:
        return "fully_nontrivial" in self.flags

    def summary(self) -> dict:
        return {
            "method": self.method,
            "level_tag": self.level_tag,
            "params": self.params.to_dict(),
            "grid": self.grid.describe(),
            "energy": self.energy,
            "residual": self.residual,
            "constraint_residuals": list(self.constraint_residuals),
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": list(self.flags),
            "seed": self.seed,
            "outside_theory": self.outside_theory,
            "notes": list(self.notes),
            "component_gap": self.component_gap,
            "overlap": self.overlap,
            "bounds": dict(self.bounds),
            "ground_state": dict(self.ground_state),
            "diagnostics": dict(self.diagnostics),
            "candidates": list(self.candidates),
        }


# ---- Descent problems ----

def _polish_pair(p: Pair, params: SystemParams, tol: float) -> Pair:
    g = p.grid
    unstack = lambda y: Pair.from_stacked(g, y)  # noqa: E731
    x, _ = newton_polish(
        p.stacked(),
        residual_fn=lambda y: residual(unstack(y), params).stacked(),
        jacobian_fn=lambda y: (lambda d: hessian_apply(unstack(y), unstack(d), params).stacked()),
        precond_fn=lambda y: precondition_pair(unstack(y), params).stacked(),
        weights=node_weights(g, 2),
        free=free_nodes(g, 2),
        tol=tol,
    )
    return unstack(x)


class _PairProblem:
    mode = "two"

    def __init__(self, params: SystemParams, opts: SystemSolveOptions) -> None:
        self.params = params
        self.opts = opts
        self.scale = problem_scale(params)

    def objective(self, p: Pair) -> float:
        return energy(p, self.params)

    def residual(self, p: Pair) -> Pair:
        return residual(p, self.params)

    def precondition(self, r: Pair) -> Pair:
        return precondition_pair(r, self.params)

    def pairing(self, a: Pair, b: Pair) -> float:
        return pair_inner(a, b)

    def constraints(self, p: Pair) -> tuple[float, ...]:
        return constraint_functionals(p, self.params, self.mode)

    def polish(self, p: Pair) -> Optional[Pair]:
        return _polish_pair(p, self.params, 0.01 * self.opts.residual_tol * self.scale)


class NehariPairProblem(_PairProblem):
    """Closed-form two-constraint reprojection; |u|, |v| first in competitive runs."""

    def __init__(self, params: SystemParams, opts: SystemSolveOptions, absolute: bool) -> None:
        super().__init__(params, opts)
        self.absolute = absolute

    def retract(self, p: Pair) -> Pair:
        if self.absolute:
            p = abs(p)
        sc = nehari_scaling(p.u, p.v, self.params)
        return p.scaled(sc.t, sc.s)


class SymmetricPositiveProblem(_PairProblem):
    """Descent of the positive-parts functional on its own Nehari set.

    Its critical points have vanishing negative parts (β < 0), so they are
    nonnegative critical points of the energy as well.
    """

    def __init__(self, params: SystemParams, opts: SystemSolveOptions) -> None:
        super().__init__(params, opts)
        self.lam = params.lambda1
        self.beta = params.beta

    def objective(self, p: Pair) -> float:
        return symmetric_functional(p, self.lam, self.beta)

    def residual(self, p: Pair) -> Pair:
        return symmetric_gradient(p, self.lam, self.beta)

    def retract(self, p: Pair) -> Pair:
        sc = symmetric_scaling(p.u, p.v, self.lam, self.beta)
        return p.scaled(sc.t, sc.s)

    def constraints(self, p: Pair) -> tuple[float, ...]:
        g = symmetric_gradient(p, self.lam, self.beta)
        return (l2_inner(g.u, p.u), l2_inner(g.v, p.v))

    def polish(self, p: Pair) -> Optional[Pair]:
        # Newton runs on the smooth energy; the two residuals agree once p ≥ 0
        return _polish_pair(abs(p), self.params, 0.01 * self.opts.residual_tol * self.scale)


class MountainPassProblem(_PairProblem):
    def retract(self, p: Pair) -> Pair:
        p = abs(p)
        bb = bilinear_B(p.u, p.u, self.params.lambda1) + bilinear_B(p.v, p.v, self.params.lambda2)
        d = (lp_power(p.u, 4) + lp_power(p.v, 4)) + 2.0 * self.params.beta * overlap(p.u, p.v)
        if not d > 0:
            raise GramDegenerateError(f"quartic denominator {d:.3e} <= 0")
        if not bb > 0:
            raise NotInConeError(f"B(p,p) = {bb:.3e} <= 0")
        return p * math.sqrt(bb / d)

    def constraints(self, p: Pair) -> tuple[float, ...]:
        g1, g2 = constraint_functionals(p, self.params)
        return (g1 + g2,)


class GeneralizedNehariProblem(_PairProblem):
    """Outer variable in H⁺₁ × H⁺₂; inner maximisation over (t, s, w̃)."""

    def __init__(self, params: SystemParams, opts: SystemSolveOptions, sp1: SubspaceSplit, sp2: SubspaceSplit) -> None:
        super().__init__(params, opts)
        self.sp1, self.sp2 = sp1, sp2
        grid = sp1.basis.grid
        zero = Field.zeros(grid)
        self.tilde = [Pair(phi, zero) for phi in sp1.tilde_fields] + [Pair(zero, psi) for psi in sp2.tilde_fields]
        self.tau = np.array(
            [0.0, 0.0]
            + [RESONANCE_TIKHONOV if sp1.is_null(i) else 0.0 for i in range(sp1.tilde_dim)]
            + [RESONANCE_TIKHONOV if sp2.is_null(i) else 0.0 for i in range(sp2.tilde_dim)]
        )
        self.zero = zero
        self.last: Optional[FibreSolution] = None

    def plus_part(self, p: Pair) -> Pair:
        return Pair(project_plus(p.u, self.sp1), project_plus(p.v, self.sp2))

    def retract(self, p: Pair) -> Pair:
        w = self.plus_part(p)
        if not (lp_power(w.u, 4) > 0 and lp_power(w.v, 4) > 0):
            raise NotInConeError("a component has no H+ part")
        start = [1.0, 1.0] + [pair_inner(p, e) for e in self.tilde]
        sol = maximize_fibre(
            [Pair(w.u, self.zero), Pair(self.zero, w.v), *self.tilde],
            np.array(start),
            value_fn=lambda z: energy(z, self.params),
            residual_fn=lambda z: residual(z, self.params),
            hessian_fn=lambda z, d: hessian_apply(z, d, self.params),
            pairing=pair_inner,
            positive=(0, 1),
            tikhonov=self.tau,
            tol=self.opts.inner_tol,
            max_iters=self.opts.inner_max_iters,
        )
        self.last = sol
        return sol.state

    def constraints(self, p: Pair) -> tuple[float, ...]:
        r = residual(p, self.params)
        return constraint_functionals(p, self.params) + tuple(pair_inner(r, e) for e in self.tilde)


class ZeroMassProblem(_PairProblem):
    """Inner Newton on (t, s, c) for the pair (t·u, s·v₀ + c), v₀ the mean-free part."""

    mode = "zero-mass"

    def __init__(self, params: SystemParams, opts: SystemSolveOptions, grid: Grid) -> None:
        super().__init__(params, opts)
        self.zero = Field.zeros(grid)
        self.one = Field.constant(grid, 1.0)
        self.last: Optional[FibreSolution] = None

    def retract(self, p: Pair) -> Pair:
        c = _mean(p.v)
        v0 = p.v - c
        if not (lp_power(p.u, 4) > 0 and lp_power(v0, 4) > 0):
            raise NotInConeError("a component vanishes")
        sol = solve_fibre_critical(
            [Pair(p.u, self.zero), Pair(self.zero, v0), Pair(self.zero, self.one)],
            np.array([1.0, 1.0, c]),
            value_fn=lambda z: energy(z, self.params),
            residual_fn=lambda z: residual(z, self.params),
            hessian_fn=lambda z, d: hessian_apply(z, d, self.params),
            pairing=pair_inner,
            positive=(0, 1),
            tol=self.opts.inner_tol,
            max_iters=self.opts.inner_max_iters,
        )
        self.last = sol
        return sol.state


# ---- Seeds and hints ----

@dataclass
class _Hints:
    first: Optional[ScalarReport] = None
    second: Optional[ScalarReport] = None

    @property
    def levels(self) -> tuple[Optional[float], Optional[float]]:
        return (
            self.first.level if self.first else None,
            self.second.level if self.second else None,
        )


def _hints(params: SystemParams, grid: Grid, opts: SystemSolveOptions) -> _Hints:
    if not opts.with_bounds:
        return _Hints()
    so = scalar_options(opts)
    return _Hints(cached_scalar(params.lambda1, grid, so), cached_scalar(params.lambda2, grid, so))


def _bounds(params: SystemParams, hints: _Hints) -> dict:
    L1, L2 = hints.levels
    out: dict = {"L1": L1, "L2": L2, "decoupled_sum": None, "semi_trivial": None, "symmetric": None, "beta_underbar": None}
    if L1 is None or L2 is None or not (math.isfinite(L1) and math.isfinite(L2)):
        return out
    out["decoupled_sum"] = L1 + L2
    out["semi_trivial"] = min(L1, L2)
    if params.symmetric and params.beta > -1.0:
        out["symmetric"] = 2.0 * L1 / (1.0 + params.beta)
    if L1 > 0 and L2 > 0:
        out["beta_underbar"] = beta_underbar(L1, L2)
    return out


def _eigen_seeds(grid: Grid, opts: SystemSolveOptions) -> tuple[list[Field], np.random.Generator]:
    basis = eigenbasis(grid, min(opts.random_modes + opts.eigen_seeds + 2, mode_count(grid)))
    first = 1
    modes = [basis.eigenfield(i) for i in range(first, min(first + opts.eigen_seeds, basis.count))]
    return modes, np.random.default_rng(opts.seed)


def _random_pair(grid: Grid, rng: np.random.Generator, n_modes: int, positive: bool) -> Pair:
    basis = eigenbasis(grid, min(max(n_modes, 2), mode_count(grid)))
    u = smooth_random_field(basis, rng, n_modes)
    v = smooth_random_field(basis, rng, n_modes)
    p = Pair(u, v)
    return abs(p) if positive else p


def _segregated(f: Field) -> Pair:
    return Pair(f.positive_part(), f.negative_part())


# ---- Driver ----

def _run(
    method: str,
    params: SystemParams,
    grid: Grid,
    opts: SystemSolveOptions,
    make_problem: Callable[[], _PairProblem],
    seeds: Sequence[Pair],
    reseed: Optional[Callable[[np.random.Generator], Pair]] = None,
    after: Optional[Callable[[_PairProblem, DescentResult], None]] = None,
) -> list[DescentResult]:
    def branch(i: int, seed: Pair) -> DescentResult:
        problem = make_problem()
        res = descend(problem, seed, opts, label=f"{method}[{i}]", index=i)
        attempt = 0
        while not res.ok and reseed is not None and attempt < opts.reseed_attempts:
            attempt += 1
            log.warning("%s branch %d: %s; reseeding (attempt %d)", method, i, res.error, attempt)
            rng = np.random.default_rng([opts.seed, i, attempt])
            res = descend(problem, reseed(rng), opts, label=f"{method}[{i}.{attempt}]", index=i)
        if res.ok and after is not None:
            after(problem, res)
        return res

    return run_branches(branch, list(seeds))


def _report(
    method: str,
    params: SystemParams,
    grid: Grid,
    opts: SystemSolveOptions,
    results: list[DescentResult],
    hints: _Hints,
    outside_theory: bool,
    flags: Optional[list[str]] = None,
    notes: Optional[list[str]] = None,
    accept: Optional[Callable[[DescentResult], bool]] = None,
) -> SolveReport:
    flags = list(flags or [])
    notes = list(notes or [])
    best = select_best(results, accept or (lambda r: True))
    candidates = [r.summary() for r in results]
    bounds = _bounds(params, hints)
    if outside_theory:
        flags.append("outside-theory")
    if best is None:
        log.warning("%s %s: no admissible candidate", method, params.to_dict())
        return SolveReport(
            method=method, level_tag=LEVEL_TAGS[method], params=params, grid=grid, pair=Pair.zeros(grid),
            energy=math.nan, residual=math.inf, constraint_residuals=(), iterations=0, converged=False,
            flags=flags + ["no-candidate"], seed=opts.seed, outside_theory=outside_theory, notes=notes,
            bounds=bounds, candidates=candidates,
        )

    pair = best.state
    cls = classify_solution(pair, params)
    flags.extend(cls.names())
    flags.extend(f for f in best.flags if f not in flags)
    if cls.constant_family:
        notes.append(f"matches constant family {cls.constant_family}")
    if not best.converged:
        flags.append("not-converged")
        log.warning("%s %s: best candidate not converged (residual %.3e)", method, params.to_dict(), best.residual)

    e = energy(pair, params)
    semi = bounds.get("semi_trivial")
    level = e if cls.fully_nontrivial else math.inf
    if semi is not None and semi < level:
        ground = {"level": semi, "kind": "semi_trivial"}
    else:
        ground = {"level": level if math.isfinite(level) else None, "kind": "fully_nontrivial"}

    report = SolveReport(
        method=method,
        level_tag=LEVEL_TAGS[method],
        params=params,
        grid=grid,
        pair=pair,
        energy=e,
        residual=best.residual,
        constraint_residuals=best.constraints,
        iterations=best.iterations,
        converged=best.converged,
        flags=flags,
        seed=opts.seed,
        outside_theory=outside_theory,
        notes=notes,
        component_gap=lp_norm(pair.u - pair.v, 2),
        overlap=overlap(pair.u, pair.v),
        bounds=bounds,
        ground_state=ground,
        history=best.history,
        candidates=candidates,
    )
    log.info(
        "%s %s: energy=%.12g residual=%.3e flags=%s (%d/%d branches converged)",
        method, params.to_dict(), e, report.residual, ",".join(cls.names()),
        sum(r.converged for r in results), len(results),
    )
    return report


def _beta_cap(bounds: dict) -> float:
    return bounds.get("beta_underbar") or BETA_UNDERBAR_CAP


# ---- Solvers ----

def solve_nehari_positive(params: SystemParams, grid: Grid, opts: SystemSolveOptions | None = None) -> SolveReport:
    opts = opts or SystemSolveOptions()
    if not (params.lambda1 > 0 and params.lambda2 > 0):
        raise DomainError("Nehari descent needs lambda1, lambda2 > 0")
    competitive = params.beta < 0
    hints = _hints(params, grid, opts)
    bounds = _bounds(params, hints)
    outside = not (competitive or 0 < params.beta < _beta_cap(bounds))

    seeds: list[Pair] = []
    if hints.first and hints.second:
        w1, w2 = abs(hints.first.z), abs(hints.second.z)
        seeds.append(Pair(w1, w2))
        if params.symmetric and params.beta > -1.0:
            seeds.append(symmetric_candidate(w1, params.beta))
    modes, rng = _eigen_seeds(grid, opts)
    seeds.extend(_segregated(e) for e in modes)
    for _ in range(opts.multistart):
        seeds.append(_random_pair(grid, rng, opts.random_modes, positive=competitive))

    results = _run(
        "nehari", params, grid, opts,
        make_problem=lambda: NehariPairProblem(params, opts, absolute=competitive),
        seeds=seeds,
        reseed=lambda r: _segregated(smooth_random_field(eigenbasis(grid, min(opts.random_modes, mode_count(grid))), r, opts.random_modes)),
    )
    return _report("nehari", params, grid, opts, results, hints, outside)


def solve_mountain_pass(params: SystemParams, grid: Grid, opts: SystemSolveOptions | None = None) -> SolveReport:
    opts = opts or SystemSolveOptions()
    if not (params.lambda1 > 0 and params.lambda2 > 0):
        raise DomainError("mountain-pass quotient needs lambda1, lambda2 > 0")
    hints = _hints(params, grid, opts)
    outside = not params.beta > 1.0

    seeds: list[Pair] = []
    if hints.first and hints.second:
        w1, w2 = abs(hints.first.z), abs(hints.second.z)
        if params.symmetric and params.beta > -1.0:
            seeds.append(symmetric_candidate(w1, params.beta))
        seeds.append(Pair(w1, w2))
    one = Field.constant(grid, 1.0).restricted()
    seeds.append(Pair(one, one))
    _, rng = _eigen_seeds(grid, opts)
    for _ in range(opts.multistart):
        seeds.append(_random_pair(grid, rng, opts.random_modes, positive=True))

    results = _run("mp", params, grid, opts, make_problem=lambda: MountainPassProblem(params, opts), seeds=seeds)
    report = _report("mp", params, grid, opts, results, hints, outside)
    if report.converged:
        report.diagnostics["quotient"] = mountain_pass_quotient(report.pair, params)
    return report


def solve_generalized_nehari(params: SystemParams, grid: Grid, opts: SystemSolveOptions | None = None) -> SolveReport:
    opts = opts or SystemSolveOptions()
    extra = opts.random_modes + opts.eigen_seeds + 2
    sp1 = split_for(grid, params.lambda1, extra=extra)
    sp2 = split_for(grid, params.lambda2, extra=extra)
    hints = _hints(params, grid, opts)
    bounds = _bounds(params, hints)
    b = params.beta
    outside = not (b == 0 or 0 < b < _beta_cap(bounds) or -settings.WEAK_COUPLING < b < 0)
    flags = ["resonant"] if (sp1.resonant or sp2.resonant) else []

    def start(p: Pair) -> Pair:
        # ray-maximise each H+ part so the first fibre solve starts near its optimum
        out = []
        for f, sp, lam in ((p.u, sp1, params.lambda1), (p.v, sp2, params.lambda2)):
            w = project_plus(f, sp)
            bw, qw = bilinear_B(w, w, lam), lp_power(w, 4)
            out.append(w * math.sqrt(bw / qw) if bw > 0 and qw > 0 else w)
        return Pair(*out)

    seeds: list[Pair] = []
    if hints.first and hints.second:
        seeds.append(Pair(hints.first.z, hints.second.z))
        if params.symmetric and b > -1.0:
            seeds.append(symmetric_candidate(hints.first.z, b))
    basis = sp1.basis if sp1.basis.count >= sp2.basis.count else sp2.basis
    k0 = max(sp1.tilde_dim, sp2.tilde_dim, 1 if grid.boundary is Boundary.NEUMANN else 0)
    for i in range(k0, min(k0 + opts.eigen_seeds, basis.count)):
        e = basis.eigenfield(i)
        seeds.append(start(Pair(e, e)))
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.multistart):
        seeds.append(start(_random_pair(grid, rng, opts.random_modes, positive=False)))

    def after(problem: GeneralizedNehariProblem, res: DescentResult) -> None:
        try:
            problem.retract(res.state)
            if problem.last is not None and not problem.last.concave:
                res.flags.append("singular-jacobian")
        except (InnerSolveError, NotInConeError):
            res.flags.append("inner-solve-failure")

    results = _run(
        "gnehari", params, grid, opts,
        make_problem=lambda: GeneralizedNehariProblem(params, opts, sp1, sp2),
        seeds=seeds, after=after,
    )
    report = _report("gnehari", params, grid, opts, results, hints, outside, flags=flags)
    report.diagnostics["tilde_dims"] = [sp1.tilde_dim, sp2.tilde_dim]
    return report


def zero_mass_seed(grid: Grid, params: SystemParams, mirrored: bool = False) -> Pair:
    """Disjoint supports along the first axis with ∫v³ = 0, scaled onto the constraint set."""
    L0 = grid.domain.side_lengths[0]
    x = grid.mesh()[0] / L0
    if mirrored:
        x = 1.0 - x
    u = np.where(x <= 0.5, np.sin(2.0 * np.pi * x), 0.0)
    v = np.where(x >= 0.5, np.sin(4.0 * np.pi * x), 0.0)
    u, v = Field(grid, np.maximum(u, 0.0)), Field(grid, v)
    tu = math.sqrt(bilinear_B(u, u, params.lambda1) / lp_power(u, 4))
    sv = math.sqrt(bilinear_B(v, v, params.lambda2) / lp_power(v, 4))
    return Pair(u * tu, v * sv)


def solve_zero_mass(params: SystemParams, grid: Grid, opts: SystemSolveOptions | None = None) -> SolveReport:
    opts = opts or SystemSolveOptions()
    if not (params.lambda1 > 0 and params.lambda2 == 0 and params.beta < 0):
        raise DomainError("zero-mass solver needs lambda1 > 0, lambda2 = 0, beta < 0")
    if grid.boundary is not Boundary.NEUMANN:
        raise DomainError("the zero-mass constraint is a Neumann construction")
    hints = _hints(params, grid, opts)
    outside = grid.dimension > 3

    seeds = [zero_mass_seed(grid, params), zero_mass_seed(grid, params, mirrored=True)]
    _, rng = _eigen_seeds(grid, opts)
    for _ in range(opts.multistart):
        base = seeds[len(seeds) % 2]
        seeds.append(base + _random_pair(grid, rng, opts.random_modes, positive=False) * (0.05 * base.max_abs()))

    def after(problem: ZeroMassProblem, res: DescentResult) -> None:
        jac = constraint_jacobian(res.state, params, "zero-mass")
        scale = float(np.max(np.abs(jac)))
        if abs(float(np.linalg.det(jac))) <= 1e-10 * scale ** 3:
            res.flags.append("singular-jacobian")

    results = _run(
        "zeromass", params, grid, opts,
        make_problem=lambda: ZeroMassProblem(params, opts, grid),
        seeds=seeds, after=after,
    )
    report = _report("zeromass", params, grid, opts, results, hints, outside)
    if "singular-jacobian" in report.flags:
        report.notes.append("constraint Jacobian is singular; try a larger |beta|")
        log.warning("zero-mass %s: singular constraint Jacobian", params.to_dict())
    if report.converged:
        jac = constraint_jacobian(report.pair, params, "zero-mass")
        eig = np.linalg.eigvalsh(0.5 * (jac + jac.T))
        norm_u = bilinear_B(report.pair.u, report.pair.u, params.lambda1)
        report.diagnostics["jacobian_negative_definite"] = bool(eig[-1] < 0)
        report.diagnostics["norm_u_squared"] = norm_u
        if hints.first is not None:
            # ‖u‖²_λ₁ ≥ C_{S,λ₁}² = 4L_λ₁
            lower = 4.0 * hints.first.level
            report.diagnostics["norm_u_lower_bound"] = lower
            report.diagnostics["norm_u_bound_holds"] = bool(norm_u >= lower * (1.0 - 1e-8))
    return report


def is_admissible_symmetric(pair: Pair, params: SystemParams) -> bool:
    return classify_solution(pair, params).fully_nontrivial and energy(pair, params) > 0


def solve_symmetric_competitive(params: SystemParams, grid: Grid, opts: SystemSolveOptions | None = None) -> SolveReport:
    opts = opts or SystemSolveOptions()
    if not (params.symmetric and params.lambda1 <= 0 and params.beta < 0):
        raise DomainError("symmetric solver needs lambda1 = lambda2 <= 0 and beta < 0")
    hints = _hints(params, grid, opts)
    outside = grid.dimension > 3

    modes, rng = _eigen_seeds(grid, opts)
    seeds = [_segregated(e) for e in modes]
    seeds += [_segregated(-e) for e in modes]
    basis = eigenbasis(grid, min(opts.random_modes, mode_count(grid)))
    for _ in range(opts.multistart):
        seeds.append(_segregated(smooth_random_field(basis, rng, opts.random_modes)))

    def accept(res: DescentResult) -> bool:
        return is_admissible_symmetric(res.state, params)

    results = _run(
        "symmetric", params, grid, opts,
        make_problem=lambda: SymmetricPositiveProblem(params, opts),
        seeds=seeds,
        reseed=lambda r: _segregated(smooth_random_field(basis, r, opts.random_modes)),
    )
    flags = [] if any(r.ok and accept(r) for r in results) else ["all-semi-trivial"]
    report = _report("symmetric", params, grid, opts, results, hints, outside, flags=flags, accept=accept)
    if "no-candidate" not in report.flags:
        # critical points of the positive-parts functional must solve the system itself
        sys_res = residual(report.pair, params).max_abs()
        report.diagnostics["positive_parts_energy"] = symmetric_functional(report.pair, params.lambda1, params.beta)
        report.diagnostics["system_residual"] = sys_res
        report.diagnostics["min_value"] = min(float(report.pair.u.values.min()), float(report.pair.v.values.min()))
        if report.converged and not sys_res < 10.0 * opts.residual_tol * problem_scale(params):
            report.flags.append("not-a-system-solution")
            log.warning("symmetric %s: system residual %.3e at a critical point of J", params.to_dict(), sys_res)
    return report


SOLVERS: dict[str, Callable[..., SolveReport]] = {
    "nehari": solve_nehari_positive,
    "mp": solve_mountain_pass,
    "gnehari": solve_generalized_nehari,
    "zeromass": solve_zero_mass,
    "symmetric": solve_symmetric_competitive,
}
