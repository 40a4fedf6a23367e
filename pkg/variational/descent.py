"""Shared optimisation engine.

Every solver in the package is "outer Sobolev-gradient step + inner
constraint restoration". A solver supplies a :class:`DescentProblem`
(retraction, objective, residual, preconditioner) and this module runs the
Armijo descent, the Newton–MINRES polish, the fibre maximisation used by
the indefinite constraints, and the multistart fan-out.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Generic, Optional, Protocol, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PField
from scipy.sparse.linalg import LinearOperator, minres

from config import settings
from utils.logger import get_logger
from variational.grid import Boundary, Grid
from variational.errors import (
    GramDegenerateError,
    GroundStateError,
    InfeasibleScalingError,
    NonFiniteFieldError,
    NotInConeError,
)

log = get_logger("descent", settings.LOG_LEVEL)

S = TypeVar("S")

# a trial step that raises one of these is rejected and the step halved
STEP_ERRORS = (
    GramDegenerateError,
    InfeasibleScalingError,
    NotInConeError,
    NonFiniteFieldError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class InnerSolveError(GroundStateError, ArithmeticError):
    """The fibre maximisation did not reach its tolerance."""


class SolveOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_outer_iters: int = PField(default=settings.MAX_ITERS, ge=1)
    residual_tol: float = PField(default=settings.RESIDUAL_TOL, gt=0)
    armijo_factor: float = PField(default=0.5, gt=0, lt=1)
    sufficient_decrease: float = PField(default=1e-4, gt=0, lt=1)
    initial_step: float = PField(default=1.0, gt=0)
    max_step: float = PField(default=8.0, gt=0)
    min_step: float = PField(default=1e-12, gt=0)
    multistart: int = PField(default=settings.MULTISTART, ge=0)
    seed: int = settings.DEFAULT_SEED
    inner_tol: float = PField(default=1e-12, gt=0)
    inner_max_iters: int = PField(default=50, ge=1)
    polish: bool = True
    polish_threshold: float = PField(default=1e-2, gt=0)
    record_history: bool = False


class DescentProblem(Protocol[S]):
    scale: float

    def retract(self, state: S) -> S: ...

    def objective(self, state: S) -> float: ...

    def residual(self, state: S) -> S: ...

    def precondition(self, r: S) -> S: ...

    def pairing(self, a: S, b: S) -> float: ...

    def constraints(self, state: S) -> tuple[float, ...]: ...

    def polish(self, state: S) -> Optional[S]: ...


@dataclass
class DescentResult(Generic[S]):
    label: str
    index: int
    state: Optional[S] = None
    value: float = math.inf
    residual: float = math.inf
    constraints: tuple[float, ...] = ()
    iterations: int = 0
    converged: bool = False
    flags: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.state is not None

    def summary(self) -> dict:
        return {
            "label": self.label,
            "index": self.index,
            "energy": self.value if self.ok else None,
            "residual": self.residual if self.ok else None,
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": list(self.flags),
            "error": self.error,
        }


def descend(problem: DescentProblem[S], start: S, opts: SolveOptions, label: str = "", index: int = 0) -> DescentResult[S]:
    out: DescentResult[S] = DescentResult(label=label, index=index)
    try:
        x = problem.retract(start)
        f = problem.objective(x)
        r = problem.residual(x)
    except (GroundStateError, *STEP_ERRORS) as e:
        out.error = f"seed rejected: {e}"
        log.debug("branch %s: %s", label, out.error)
        return out

    tol = opts.residual_tol * problem.scale
    res = r.max_abs()
    alpha = opts.initial_step
    last_polish = math.inf
    it = 0
    if opts.record_history:
        out.history.append(_history_row(0, f, res, problem.constraints(x), alpha=0.0))

    while res >= tol and it < opts.max_outer_iters:
        near = res < opts.polish_threshold * problem.scale
        if opts.polish and near and res < 0.5 * last_polish:
            last_polish = res
            polished = _try_polish(problem, x, f, res)
            if polished is not None:
                x, f, r, res = polished
                it += 1
                if opts.record_history:
                    out.history.append(_history_row(it, f, res, problem.constraints(x), alpha=-1.0))
                continue

        g = problem.precondition(r)
        slope = problem.pairing(r, g)
        if not slope > 0:
            out.flags.append("non-descent direction")
            break

        step = _line_search(problem, x, f, res, g, slope, alpha, opts)
        if step is None:
            if opts.polish and res < last_polish:
                last_polish = res
                polished = _try_polish(problem, x, f, res)
                if polished is not None:
                    x, f, r, res = polished
                    it += 1
                    continue
            out.flags.append("stalled")
            break
        alpha, x, f, r, res = step
        it += 1
        if opts.record_history:
            out.history.append(_history_row(it, f, res, problem.constraints(x), alpha=alpha))
        alpha = min(alpha / opts.armijo_factor, opts.max_step)

    out.state = x
    out.value = f
    out.residual = res
    out.constraints = problem.constraints(x)
    out.iterations = it
    out.converged = res < tol
    if not out.converged and "stalled" not in out.flags:
        out.flags.append("max-iterations")
    log.debug("branch %s: energy=%.12g residual=%.3e iters=%d converged=%s", label, f, res, it, out.converged)
    return out


def _history_row(it: int, f: float, res: float, cons: tuple[float, ...], alpha: float) -> dict:
    row = {"iteration": it, "energy": f, "residual": res, "step": alpha}
    for k, c in enumerate(cons):
        row[f"constraint_{k + 1}"] = c
    return row


def _line_search(problem, x, f, res, g, slope, alpha, opts):
    # roundoff floor: once the predicted decrease drops below it, a step that
    # keeps the energy within the floor and lowers the residual is accepted
    floor = 64.0 * np.finfo(float).eps * max(1.0, abs(f))
    while alpha >= opts.min_step:
        try:
            y = problem.retract(x - g * alpha)
            fy = problem.objective(y)
            ry = problem.residual(y)
        except (InnerSolveError, *STEP_ERRORS):
            alpha *= opts.armijo_factor
            continue
        if fy <= f - opts.sufficient_decrease * alpha * slope:
            return alpha, y, fy, ry, ry.max_abs()
        if fy <= f + floor and alpha * slope <= floor:
            rres = ry.max_abs()
            if rres < res:
                return alpha, y, fy, ry, rres
        alpha *= opts.armijo_factor
    return None


def _try_polish(problem, x, f, res):
    try:
        y = problem.polish(x)
    except (GroundStateError, *STEP_ERRORS) as e:
        log.debug("polish rejected: %s", e)
        return None
    if y is None:
        return None
    fy = problem.objective(y)
    ry = problem.residual(y)
    rres = ry.max_abs()
    if rres < res and abs(fy - f) <= 1e-4 * max(1.0, abs(f)):
        return y, fy, ry, rres
    return None


# ---- Newton polish ----

def free_nodes(grid: Grid, components: int = 1) -> np.ndarray:
    """Nodes carrying unknowns: all of them for Neumann, the interior for Dirichlet."""
    if grid.boundary is Boundary.NEUMANN:
        mask = np.ones(grid.size, dtype=bool)
    else:
        mask = grid.interior_mask.ravel()
    return np.tile(mask, components)


def node_weights(grid: Grid, components: int = 1) -> np.ndarray:
    return np.tile(grid.quad_weights.ravel(), components)


def newton_polish(
    x0: np.ndarray,
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], Callable[[np.ndarray], np.ndarray]],
    precond_fn: Callable[[np.ndarray], np.ndarray],
    weights: np.ndarray,
    free: np.ndarray,
    tol: float,
    max_iters: int = 8,
    krylov_tol: float = 1e-11,
    krylov_maxiter: int = 400,
) -> tuple[np.ndarray, float]:
    """Newton on a residual that is self-adjoint in the weighted inner product.

    The linear systems are symmetrised with the quadrature weights and solved
    by preconditioned MINRES over the ``free`` nodes (interior nodes on
    Dirichlet grids). Returns the best iterate and its residual ∞-norm.
    """
    x = np.array(x0, dtype=float)
    r = residual_fn(x)
    res = float(np.max(np.abs(r)))
    n = int(np.count_nonzero(free))
    wf = weights[free]

    for _ in range(max_iters):
        if res < tol:
            break
        jv = jacobian_fn(x)

        def matvec(y: np.ndarray) -> np.ndarray:
            d = np.zeros_like(x)
            d[free] = y
            return wf * jv(d)[free]

        def psolve(y: np.ndarray) -> np.ndarray:
            d = np.zeros_like(x)
            d[free] = y / wf
            return precond_fn(d)[free]

        A = LinearOperator((n, n), matvec=matvec, rmatvec=matvec, dtype=float)
        M = LinearOperator((n, n), matvec=psolve, rmatvec=psolve, dtype=float)
        dy, _ = minres(A, -(wf * r[free]), M=M, rtol=krylov_tol, maxiter=krylov_maxiter)
        step = np.zeros_like(x)
        step[free] = dy

        for damp in (1.0, 0.5, 0.25, 0.125):
            xn = x + damp * step
            try:
                rn = residual_fn(xn)
            except FloatingPointError:
                continue
            if not np.all(np.isfinite(rn)):
                continue
            resn = float(np.max(np.abs(rn)))
            if resn < res:
                break
        else:
            break
        x, r, res = xn, rn, resn
    return x, res


# ---- Fibre solves ----

@dataclass
class FibreSolution(Generic[S]):
    coeffs: np.ndarray
    state: S
    value: float
    gradient_norm: float
    iterations: int
    hessian: np.ndarray

    @property
    def concave(self) -> bool:
        return bool(np.linalg.eigvalsh(self.hessian)[-1] < 0)


class _Fibre(Generic[S]):
    """c ↦ value(Σ c_i e_i) − ½Σ τ_i c_i² with its gradient and Hessian."""

    def __init__(self, directions, value_fn, residual_fn, hessian_fn, pairing, tikhonov) -> None:
        self.e = list(directions)
        self.value_fn = value_fn
        self.residual_fn = residual_fn
        self.hessian_fn = hessian_fn
        self.pairing = pairing
        k = len(self.e)
        self.tau = np.zeros(k) if tikhonov is None else np.asarray(tikhonov, dtype=float)

    def state(self, c: np.ndarray) -> S:
        out = self.e[0] * float(c[0])
        for ci, e in zip(c[1:], self.e[1:]):
            out = out + e * float(ci)
        return out

    def value(self, z: S, c: np.ndarray) -> float:
        return self.value_fn(z) - 0.5 * float(np.dot(self.tau, c * c))

    def gradient(self, z: S, c: np.ndarray) -> np.ndarray:
        r = self.residual_fn(z)
        return np.array([self.pairing(r, e) for e in self.e]) - self.tau * c

    def hessian(self, z: S) -> np.ndarray:
        hz = [self.hessian_fn(z, e) for e in self.e]
        h = np.array([[self.pairing(a, b) for b in self.e] for a in hz])
        return 0.5 * (h + h.T) - np.diag(self.tau)


def _feasible(c: np.ndarray, positive: Sequence[int]) -> bool:
    return all(c[i] > 0 for i in positive)


def maximize_fibre(
    directions: Sequence[S],
    start: np.ndarray,
    value_fn: Callable[[S], float],
    residual_fn: Callable[[S], S],
    hessian_fn: Callable[[S, S], S],
    pairing: Callable[[S, S], float],
    positive: Sequence[int] = (),
    tikhonov: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iters: int = 50,
) -> FibreSolution[S]:
    """Maximise c ↦ value(Σ c_i e_i) over the span of ``directions``.

    Newton with a Levenberg shift keeps every step an ascent direction; the
    coordinates listed in ``positive`` must stay strictly positive. The
    optional ``tikhonov`` weights subtract ½Σ τ_i c_i² from the objective.
    """
    fb = _Fibre(directions, value_fn, residual_fn, hessian_fn, pairing, tikhonov)
    c = np.array(start, dtype=float)
    z = fb.state(c)
    f = fb.value(z, c)
    it = 0
    while True:
        grad = fb.gradient(z, c)
        hess = fb.hessian(z)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= tol * max(1.0, abs(f)) or it >= max_iters:
            break

        top = float(np.linalg.eigvalsh(hess)[-1])
        shift = 0.0 if top < 0 else top + 1e-8 * (1.0 + float(np.max(np.abs(hess))))
        delta = -np.linalg.solve(hess - shift * np.eye(len(c)), grad)
        gain = float(np.dot(grad, delta))

        accepted = False
        step = 1.0
        for _ in range(40):
            cn = c + step * delta
            if _feasible(cn, positive):
                zn = fb.state(cn)
                fn = fb.value(zn, cn)
                if fn >= f + 1e-4 * step * gain:
                    accepted = True
                    break
                if shift == 0.0 and step == 1.0:
                    # pure Newton near the optimum: the gradient is the better merit
                    if float(np.max(np.abs(fb.gradient(zn, cn)))) < gnorm:
                        accepted = True
                        break
            step *= 0.5
        if not accepted:
            break
        c, z, f = cn, zn, fn
        it += 1

    if gnorm > math.sqrt(tol) * max(1.0, abs(f)):
        raise InnerSolveError(f"fibre maximisation did not converge (|grad|={gnorm:.3e})")
    return FibreSolution(coeffs=c, state=z, value=f, gradient_norm=gnorm, iterations=it, hessian=hess)


def solve_fibre_critical(
    directions: Sequence[S],
    start: np.ndarray,
    value_fn: Callable[[S], float],
    residual_fn: Callable[[S], S],
    hessian_fn: Callable[[S, S], S],
    pairing: Callable[[S, S], float],
    positive: Sequence[int] = (),
    tol: float = 1e-12,
    max_iters: int = 50,
) -> FibreSolution[S]:
    """Damped Newton for a critical point of the fibre function that may be a saddle.

    The merit function is the gradient ∞-norm.
    """
    fb = _Fibre(directions, value_fn, residual_fn, hessian_fn, pairing, None)
    c = np.array(start, dtype=float)
    z = fb.state(c)
    grad = fb.gradient(z, c)
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    while True:
        hess = fb.hessian(z)
        f = fb.value(z, c)
        if gnorm <= tol * max(1.0, abs(f)) or it >= max_iters:
            break
        try:
            delta = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as e:
            raise InnerSolveError("singular fibre Jacobian") from e

        accepted = False
        step = 1.0
        for _ in range(40):
            cn = c + step * delta
            if _feasible(cn, positive):
                zn = fb.state(cn)
                gn = fb.gradient(zn, cn)
                gnn = float(np.max(np.abs(gn)))
                if gnn < (1.0 - 1e-4 * step) * gnorm:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        c, z, grad, gnorm = cn, zn, gn, gnn
        it += 1

    f = fb.value(z, c)
    if gnorm > math.sqrt(tol) * max(1.0, abs(f)):
        raise InnerSolveError(f"fibre Newton did not converge (|grad|={gnorm:.3e})")
    return FibreSolution(coeffs=c, state=z, value=f, gradient_norm=gnorm, iterations=it, hessian=fb.hessian(z))


# ---- Multistart ----

def run_branches(fn: Callable[[int, Any], DescentResult], items: Sequence[Any], threads: int | None = None) -> list[DescentResult]:
    """Run ``fn(index, item)`` for each seed; results keep input order."""
    threads = settings.THREADS if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(i, item) for i, item in enumerate(items)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(len(items)), items))


def select_best(results: Sequence[DescentResult], accept: Callable[[DescentResult], bool] = lambda r: True) -> Optional[DescentResult]:
    """Lowest energy among converged, accepted branches; ties broken by seed index.

    Falls back to the best unconverged branch (caller flags it) when no
    branch converged.
    """
    pool = [r for r in results if r.ok and r.converged and accept(r)]
    if not pool:
        pool = [r for r in results if r.ok and accept(r)]
    if not pool:
        return None
    return min(pool, key=lambda r: (r.value, r.index))
