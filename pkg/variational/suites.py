"""Verification suites: tent and bubble profiles on the grid, plus the
tabular checks behind ``app.py verify``.

Every suite returns a ``pandas.DataFrame`` with one row per case so the CLI
can write it straight to CSV.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import quad

from config import settings
from utils.logger import get_logger
from variational.constants import (
    K_q,
    K_q_quadrature,
    constants_KqKM,
    sobolev_S,
    sobolev_S_coupled,
    sphere_area,
    tent_energy_bound,
)
from variational.errors import DomainError, ResolutionError
from variational.grid import DomainSpec, Field, Grid, Pair, build_grid, lp_power
from variational.operators import (
    SystemParams,
    bilinear_B,
    eigenbasis,
    energy,
    hessian_apply,
    mode_count,
    pair_inner,
    residual,
    smooth_random_field,
)
from variational.regimes import constant_energy, constant_solutions
from variational.system import mountain_pass_quotient

log = get_logger("suites", settings.LOG_LEVEL)

TENT_POWERS = (1, 2, 4)


# ---- Tent profiles ----

def tent_field(grid: Grid, eps: float, centre: Optional[Sequence[float]] = None) -> Field:
    """φ_ε(x) = ε^(-N/2)·(1 - ε^(-1/2)|x - x₀|)₊, centred at the box centre by default."""
    N = grid.dimension
    root = math.sqrt(eps)
    x0 = [0.5 * L for L in grid.domain.side_lengths] if centre is None else list(centre)
    if root < 4.0 * grid.max_spacing:
        raise ResolutionError(f"tent radius {root:.3e} below 4h = {4 * grid.max_spacing:.3e}")
    for c, L in zip(x0, grid.domain.side_lengths):
        if c - root < 0 or c + root > L:
            raise ResolutionError(f"tent of radius {root:.3e} at {x0} leaves the box")
    r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), x0))
    vals = eps ** (-N / 2) * np.maximum(1.0 - np.sqrt(r2) / root, 0.0)
    return Field(grid, vals)


@dataclass
class TentRecord:
    eps: float
    dimension: int
    norms: dict[int, float]
    expected: dict[int, float]
    gradient: float
    expected_gradient: float
    tent_bound: Optional[float] = None
    tent_level: Optional[float] = None

    def deviation(self, q: int) -> float:
        return abs(self.norms[q] - self.expected[q]) / self.expected[q]

    @property
    def gradient_deviation(self) -> float:
        return abs(self.gradient - self.expected_gradient) / self.expected_gradient

    def row(self) -> dict:
        out = {"eps": self.eps, "dimension": self.dimension}
        for q in TENT_POWERS:
            out[f"L{q}"] = self.norms[q]
            out[f"L{q}_expected"] = self.expected[q]
            out[f"L{q}_deviation"] = self.deviation(q)
        out.update(
            gradient=self.gradient,
            gradient_expected=self.expected_gradient,
            gradient_deviation=self.gradient_deviation,
            tent_bound=self.tent_bound,
            tent_level=self.tent_level,
        )
        return out


def tent_suite(eps: float, grid: Grid, params: Optional[SystemParams] = None) -> TentRecord:
    N = grid.dimension
    sc = constants_KqKM(N)
    phi = tent_field(grid, eps)
    norms = {q: lp_power(phi, q) for q in TENT_POWERS}
    expected = {q: K_q(N, q) * eps ** ((1 - q) * N / 2) for q in TENT_POWERS}
    rec = TentRecord(
        eps=eps,
        dimension=N,
        norms=norms,
        expected=expected,
        gradient=bilinear_B(phi, phi, 0.0),
        expected_gradient=sc.K * eps ** (-1 - N / 2),
    )
    if params is not None and params.lambda1 + params.lambda2 > 0 and params.beta > -1:
        rec.tent_bound = tent_energy_bound(params.lambda1, params.lambda2, params.beta, N)
        # the bound's test function lives at ε = 1/(λ₁+λ₂); evaluate it when the grid resolves it
        try:
            at = tent_field(grid, 1.0 / (params.lambda1 + params.lambda2))
            rec.tent_level = mountain_pass_quotient(Pair(at, at), params)
        except ResolutionError as e:
            log.debug("tent level skipped: %s", e)
    return rec


def scaling_exponents(ladder: Sequence[TentRecord]) -> dict[str, tuple[float, float]]:
    """Least-squares log-log slopes against ε, paired with the expected exponents."""
    if len(ladder) < 2:
        raise DomainError("an exponent fit needs at least two ε values")
    N = ladder[0].dimension
    logs = np.log([r.eps for r in ladder])
    out = {}
    for q in TENT_POWERS:
        slope = np.polyfit(logs, np.log([r.norms[q] for r in ladder]), 1)[0]
        out[f"L{q}"] = (float(slope), (1 - q) * N / 2)
    slope = np.polyfit(logs, np.log([r.gradient for r in ladder]), 1)[0]
    out["gradient"] = (float(slope), -1 - N / 2)
    return out


# ---- Boundary bubbles (N = 4) ----

def smooth_cutoff(r: np.ndarray | float, rho: float) -> np.ndarray | float:
    """Quintic smoothstep: 1 on [0, ρ/2], 0 beyond ρ, C² in between."""
    s = np.clip((np.asarray(r, dtype=float) - 0.5 * rho) / (0.5 * rho), 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _cutoff_slope(r: float, rho: float) -> float:
    s = (r - 0.5 * rho) / (0.5 * rho)
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return -30.0 * s * s * (1.0 - s) ** 2 / (0.5 * rho)


def bubble_profile(r: np.ndarray | float, eps: float) -> np.ndarray | float:
    return math.sqrt(8.0 * eps) / (eps + np.asarray(r, dtype=float) ** 2)


def face_centre(grid: Grid) -> tuple[float, ...]:
    """Centre of the x₀ = 0 face; the bubble sees a half-space around it."""
    return (0.0,) + tuple(0.5 * L for L in grid.domain.side_lengths[1:])


@dataclass
class BubbleRecord:
    eps: float
    rho: float
    gradient: float
    gradient_exact: float
    leading: float
    quartic: float
    quartic_exact: float
    l2: float
    l2_exact: float
    l1: float
    l3: float
    S: float
    S_coupled: dict[float, float] = field(default_factory=dict)

    @property
    def gradient_ratio(self) -> float:
        return self.gradient / self.leading

    @property
    def cutoff_excess(self) -> float:
        """Continuum gradient energy of the cut-off profile minus S²/2."""
        return self.gradient_exact - self.leading

    @property
    def l2_ratio(self) -> float:
        return self.l2 / (self.eps * abs(math.log(self.eps)))

    def row(self) -> dict:
        out = asdict(self)
        del out["S_coupled"]
        out.update(
            gradient_ratio=self.gradient_ratio,
            cutoff_excess=self.cutoff_excess,
            l2_ratio=self.l2_ratio,
        )
        for b, val in self.S_coupled.items():
            out[f"S_coupled[{b:g}]"] = val
        return out


def _half_space_radial(fn: Callable[[float], float], rho: float, width: float) -> float:
    """½·|S³|·∫₀^ρ fn(r) r³ dr."""
    breaks = sorted({min(width, 0.5 * rho), 0.5 * rho})
    val, _ = quad(lambda r: fn(r) * r ** 3, 0.0, rho, epsabs=0.0, epsrel=1e-12, limit=400, points=breaks)
    return 0.5 * sphere_area(4) * val


def bubble_exact(eps: float, rho: float) -> tuple[float, float, float]:
    """Continuum (|∇w|₂², |w|₄⁴, |w|₂²) of the cut-off bubble on the half-space."""
    def w(r: float) -> float:
        return float(smooth_cutoff(r, rho)) * float(bubble_profile(r, eps))

    def dw(r: float) -> float:
        u = float(bubble_profile(r, eps))
        du = -2.0 * r * u / (eps + r * r)
        return float(smooth_cutoff(r, rho)) * du + _cutoff_slope(r, rho) * u

    return (
        _half_space_radial(lambda r: dw(r) ** 2, rho, math.sqrt(eps)),
        _half_space_radial(lambda r: w(r) ** 4, rho, math.sqrt(eps)),
        _half_space_radial(lambda r: w(r) ** 2, rho, math.sqrt(eps)),
    )


def bubble_suite(eps: float, grid: Grid, rho: Optional[float] = None, betas: Sequence[float] = ()) -> BubbleRecord:
    if grid.dimension != 4:
        raise DomainError(f"bubble suite runs in dimension 4, got {grid.dimension}")
    h = grid.max_spacing
    if eps < 4.0 * h * h:
        raise ResolutionError(f"eps = {eps:.3e} under-resolved (needs >= 4h^2 = {4 * h * h:.3e})")
    x0 = face_centre(grid)
    reach = min([grid.domain.side_lengths[0]] + [0.5 * L for L in grid.domain.side_lengths[1:]])
    rho = reach if rho is None else rho
    if not 0 < rho <= reach:
        raise DomainError(f"cutoff radius {rho} must lie in (0, {reach}]")

    r = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.mesh(), x0)))
    w = Field(grid, smooth_cutoff(r, rho) * bubble_profile(r, eps))
    grad_exact, quartic_exact, l2_exact = bubble_exact(eps, rho)
    S = sobolev_S()
    rec = BubbleRecord(
        eps=eps,
        rho=rho,
        gradient=bilinear_B(w, w, 0.0),
        gradient_exact=grad_exact,
        leading=0.5 * S * S,
        quartic=lp_power(w, 4),
        quartic_exact=quartic_exact,
        l2=lp_power(w, 2),
        l2_exact=l2_exact,
        l1=lp_power(w, 1),
        l3=lp_power(w, 3),
        S=S,
        S_coupled={float(b): sobolev_S_coupled(b) for b in betas},
    )
    log.debug("bubble eps=%.3e: grad=%.6g exact=%.6g leading=%.6g", eps, rec.gradient, grad_exact, rec.leading)
    return rec


# ---- Verify suites ----

CONSTANT_TUPLES: tuple[tuple[float, float, float], ...] = (
    (2.0, 2.0, 0.5), (1.0, 4.0, 0.2), (4.0, 1.0, -0.5), (3.0, 3.0, -0.3),
    (5.0, 2.0, 0.1), (2.0, 5.0, -2.0), (1.0, 1.0, 3.0), (2.0, 1.0, 3.0),
    (1.0, 1.0, 1.0), (4.0, 4.0, 1.0), (1.0, -1.0, -1.0), (-2.0, 2.0, -1.0),
    (1.0, 0.0, 0.5), (0.0, 3.0, -0.5), (1.0, -2.0, 0.3), (-1.0, -1.0, 2.0),
    (-1.0, -3.0, 2.0), (6.0, 1.0, -0.9), (0.5, 0.5, 0.0), (-1.0, -1.0, -0.5),
)


def constants_suite(nodes: int = 33, tuples: Sequence[tuple[float, float, float]] = CONSTANT_TUPLES) -> pd.DataFrame:
    domain = DomainSpec.unit(1)
    grid = build_grid(domain, nodes)
    rows = []
    for l1, l2, b in tuples:
        params = SystemParams(l1, l2, b)
        closed = constant_energy(params, domain)
        families = constant_solutions(params)
        if not families:
            rows.append(dict(lambda1=l1, lambda2=l2, beta=b, kind="none"))
        for fam in families:
            for c1, c2 in fam.representatives:
                p = Pair.constant(grid, c1, c2)
                e = energy(p, params)
                exact = closed if fam.kind == "isolated_pair" else None
                rows.append(dict(
                    lambda1=l1, lambda2=l2, beta=b, kind=fam.kind, c1=c1, c2=c2,
                    residual=residual(p, params).max_abs(), energy=e, closed_form=exact,
                    rel_err=(abs(e - exact) / max(abs(exact), 1e-300)) if exact is not None else None,
                ))
    return pd.DataFrame(rows)


def _slope_error(p: Pair, d: Pair, params: SystemParams, delta: float) -> float:
    """Central-difference slope error, relative to the Cauchy-Schwarz scale |r|·|d|."""
    fd = (energy(p + d * delta, params) - energy(p - d * delta, params)) / (2.0 * delta)
    r = residual(p, params)
    exact = pair_inner(r, d)
    scale = max(abs(exact), math.sqrt(pair_inner(r, r) * pair_inner(d, d)), 1e-300)
    return abs(fd - exact) / scale


def gradcheck_suite(samples: int = 10, dims: Sequence[int] = (1, 2), seed: Optional[int] = None) -> pd.DataFrame:
    seed = settings.DEFAULT_SEED if seed is None else seed
    rows = []
    for N in dims:
        grid = build_grid(DomainSpec.unit(N), 33 if N == 1 else 17)
        basis = eigenbasis(grid, min(12, mode_count(grid)))
        rng = np.random.default_rng([seed, N])

        def draw() -> Pair:
            return Pair(smooth_random_field(basis, rng, 12), smooth_random_field(basis, rng, 12))

        for k in range(samples):
            params = SystemParams(*rng.uniform(-2.0, 4.0, size=2), rng.uniform(-0.9, 2.0))
            # directions lean on p so the cubic term of the slope error dominates roundoff
            p = draw()
            d, e = p + draw() * 0.25, draw()
            coarse = _slope_error(p, d, params, 1e-3)
            fine = _slope_error(p, d, params, 1e-4)
            hd, he = hessian_apply(p, d, params), hessian_apply(p, e, params)
            a, b = pair_inner(hd, e), pair_inner(he, d)
            rows.append(dict(
                dimension=N, sample=k, **params.to_dict(),
                rel_err_1e3=coarse, rel_err_1e4=fine, ratio=coarse / fine if fine > 0 else math.inf,
                hessian_asymmetry=abs(a - b) / max(math.sqrt(pair_inner(hd, hd) * pair_inner(e, e)), 1e-300),
            ))
    return pd.DataFrame(rows)


def tent_ladder(N: int, eps_values: Sequence[float], nodes: Optional[int] = None) -> pd.DataFrame:
    nodes = nodes or {1: 4097, 2: 513}.get(N, settings.DEFAULT_NODES[N])
    grid = build_grid(DomainSpec.unit(N), nodes)
    ladder = [tent_suite(eps, grid) for eps in eps_values]
    frame = pd.DataFrame([r.row() for r in ladder])
    for name, (fit, expected) in scaling_exponents(ladder).items():
        frame[f"{name}_exponent"] = fit
        frame[f"{name}_exponent_expected"] = expected
    return frame


def tent_verify(dims: Sequence[int] = (1, 2)) -> pd.DataFrame:
    ladders = {1: (0.04, 0.02, 0.01, 0.005), 2: (0.04, 0.02, 0.01)}
    return pd.concat([tent_ladder(N, ladders[N]) for N in dims], ignore_index=True)


def bubble_verify(nodes: int = 33, eps_values: Sequence[float] = (1e-2, 5e-3), betas: Sequence[float] = (1.0,)) -> pd.DataFrame:
    grid = build_grid(DomainSpec.unit(4), nodes)
    return pd.DataFrame([bubble_suite(eps, grid, betas=betas).row() for eps in eps_values])


def kqkm_suite() -> pd.DataFrame:
    rows = []
    for N in (1, 2, 3, 4):
        sc = constants_KqKM(N)
        for q in TENT_POWERS:
            closed, numeric = K_q(N, q), K_q_quadrature(N, q)
            rows.append(dict(dimension=N, q=q, closed_form=closed, quadrature=numeric,
                             rel_err=abs(closed - numeric) / closed, K=sc.K, M=sc.M))
    return pd.DataFrame(rows)


SUITES: dict[str, Callable[[], pd.DataFrame]] = {
    "constants": constants_suite,
    "gradcheck": gradcheck_suite,
    "tent": tent_verify,
    "bubble": bubble_verify,
    "kqkm": kqkm_suite,
}


def run_suite(name: str) -> pd.DataFrame:
    try:
        fn = SUITES[name]
    except KeyError:
        raise DomainError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    frame = fn()
    log.info("verify %s: %d rows", name, len(frame))
    return frame
