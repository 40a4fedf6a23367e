"""Closed-form layer: constant solutions, sufficient-condition checkers,
coupling thresholds and the regime report.

Condition checkers evaluate their inequality literally and return ``None``
when the inequality is not applicable at the parameter point (a λ outside
the required sign range, a division by zero, or a missing level).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from config import settings
from utils.logger import get_logger
from variational.constants import (
    ShapeConstants,
    constants_KqKM,
    sobolev_S,
    sobolev_S_coupled,
    tent_energy_bound,
)
from variational.descent import SolveOptions, descend
from variational.errors import DomainError, SamplingFailureError
from variational.grid import Boundary, DomainSpec, Field, Grid, Pair, lp_power, overlap
from variational.operators import (
    SystemParams,
    bilinear_B,
    continuum_split_dims,
    eigenbasis,
    laplacian_apply,
    mode_count,
    pair_inner,
    precondition_pair,
    smooth_random_field,
    split_for,
)
from variational.scalar import ScalarSolveOptions, cached_scalar, sobolev_constant

__all__ = [
    "ConstantFamily",
    "Conditions",
    "RegimeReport",
    "BetaStarEstimate",
    "constants_KqKM",
    "constant_solutions",
    "constant_energy",
    "check_conditions",
    "select_regime",
    "beta_underbar",
    "beta_star_estimate",
    "sobolev_constant_CS",
    "build_regime_report",
]

log = get_logger("regimes", settings.LOG_LEVEL)

# β̲ cap used when the scalar levels are unknown (its largest possible value)
BETA_UNDERBAR_CAP = 1.0 / math.sqrt(2.0)


# ---- Constant solutions ----

@dataclass(frozen=True)
class ConstantFamily:
    kind: str
    representatives: tuple[tuple[float, float], ...]
    parameterization: Optional[str] = None

    def contains(self, c1: float, c2: float, params: SystemParams, tol: float = 1e-6) -> bool:
        l1, l2, b = params.lambda1, params.lambda2, params.beta
        scale = 1.0 + max(abs(l1), abs(l2))
        if self.kind == "circle":
            return abs(c1 * c1 + c2 * c2 - l1) <= tol * scale
        if self.kind == "hyperbola":
            return abs(c1 * c1 - c2 * c2 - l1) <= tol * scale
        return any(abs(c1 - a) <= tol * scale and abs(c2 - d) <= tol * scale for a, d in self.representatives)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "representatives": [list(r) for r in self.representatives],
            "parameterization": self.parameterization,
        }


def _signed(a: float, b: float) -> tuple[tuple[float, float], ...]:
    out = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            pt = (s1 * a, s2 * b)
            if pt not in out:
                out.append(pt)
    return tuple(out)


def constant_solutions(params: SystemParams) -> list[ConstantFamily]:
    """Every family of constant solutions (c₁, c₂) ≠ (0, 0)."""
    l1, l2, b = params.lambda1, params.lambda2, params.beta
    out: list[ConstantFamily] = []
    if l1 >= 0:
        out.append(ConstantFamily("semi_trivial_u", _signed(math.sqrt(l1), 0.0)))
    if l2 >= 0:
        out.append(ConstantFamily("semi_trivial_v", _signed(0.0, math.sqrt(l2))))
    if abs(b) != 1.0:
        q1 = (l1 - b * l2) / (1.0 - b * b)
        q2 = (l2 - b * l1) / (1.0 - b * b)
        if q1 >= 0 and q2 >= 0:
            out.append(ConstantFamily("isolated_pair", _signed(math.sqrt(q1), math.sqrt(q2))))
    elif b == 1.0 and l1 == l2 and l1 > 0:
        r = math.sqrt(l1)
        reps = ((r, 0.0), (0.0, r), (r / math.sqrt(2.0), r / math.sqrt(2.0)))
        out.append(ConstantFamily("circle", reps, "c1^2 + c2^2 = lambda1"))
    elif b == -1.0 and l1 == -l2:
        base = max(0.0, -l1)
        reps = tuple((math.sqrt(l1 + base + k), math.sqrt(base + k)) for k in (0.0, 1.0, 2.0))
        out.append(ConstantFamily("hyperbola", reps, "c1^2 - c2^2 = lambda1"))
    return out


def constant_energy(params: SystemParams, domain: DomainSpec) -> Optional[float]:
    """Energy of the isolated fully nontrivial constants, or None when there are none."""
    l1, l2, b = params.lambda1, params.lambda2, params.beta
    if abs(b) == 1.0:
        return None
    q1 = (l1 - b * l2) / (1.0 - b * b)
    q2 = (l2 - b * l1) / (1.0 - b * b)
    if not (q1 > 0 and q2 > 0):
        return None
    return (l1 * l1 - 2.0 * b * l1 * l2 + l2 * l2) / (4.0 * (1.0 - b * b)) * domain.volume()


# ---- Thresholds ----

def beta_underbar(L1: float, L2: float) -> float:
    if not (L1 > 0 and L2 > 0):
        raise DomainError(f"beta_underbar needs positive levels, got {L1}, {L2}")
    return min(math.sqrt(L1), math.sqrt(L2)) / math.sqrt(L1 + L2)


def sobolev_constant_CS(grid: Grid, opts: ScalarSolveOptions | None = None) -> float:
    """Discrete best constant of H¹ ⊂ L⁴ (an upper bound from the found candidate)."""
    return sobolev_constant(grid, 1.0, opts)


# ---- Conditions ----

@dataclass
class Conditions:
    mixed_sign_cooperative: Optional[bool] = None
    ratio_window: Optional[bool] = None
    weak_coop_nonconstant: Optional[bool] = None
    strong_coop_nonconstant: Optional[bool] = None
    competitive_nonconstant: Optional[bool] = None
    symmetric_nonconstant: Optional[bool] = None
    weak_coop_beta_bound: Optional[bool] = None
    clauses: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _pos(params: SystemParams) -> bool:
    return params.lambda1 > 0 and params.lambda2 > 0


def _constant_level(params: SystemParams, volume: float) -> Optional[float]:
    l1, l2, b = params.lambda1, params.lambda2, params.beta
    if abs(b) == 1.0:
        return None
    return (l1 * l1 + l2 * l2 - 2.0 * b * l1 * l2) / (4.0 * (1.0 - b * b)) * volume


def check_conditions(
    params: SystemParams,
    domain: DomainSpec,
    L1: Optional[float] = None,
    L2: Optional[float] = None,
    C_S: Optional[float] = None,
) -> Conditions:
    l1, l2, b = params.lambda1, params.lambda2, params.beta
    N = domain.dimension
    vol = domain.volume()
    sc = constants_KqKM(N)
    a = (4 - N) / 2
    c = Conditions()

    c.mixed_sign_cooperative = (not _pos(params)) and b > 0

    if l1 != 0 and l2 != 0:
        lo, hi = sorted((l1 / l2, l2 / l1))
        c.ratio_window = _pos(params) and lo < b < hi

    level = _constant_level(params, vol)
    if _pos(params) and level is not None:
        c.weak_coop_nonconstant = sc.M * (l1 ** a + l2 ** a) <= level

    if _pos(params) and C_S is not None and level is not None:
        bound = (2 * sc.K + sc.K2) ** 2 / (8.0 * sc.K4 * (1.0 + b)) * (l1 + l2) ** a
        rhs = min(C_S ** 2 * min(1.0, l1 * l1, l2 * l2) / 4.0, level)
        c.strong_coop_nonconstant = b >= max(l1 / l2, l2 / l1) and bound < rhs

    if _pos(params) and b < 0:
        if b <= -1:
            c.competitive_nonconstant = True
        else:
            lhs = sc.M * (l1 ** a + l2 ** a + 2 * abs(b) * l1 ** (a / 2) * l2 ** (a / 2))
            c.competitive_nonconstant = lhs < l1 * l1 + l2 * l2 + 2 * abs(b) * l1 * l2

    if l1 == l2 and l1 > 0:
        c.symmetric_nonconstant = b > 1 and l1 ** (N / 2) > (2 * sc.K + sc.K2) ** 2 / (4.0 * sc.K4 * vol)

    if _pos(params) and L1 is not None and L2 is not None and L1 > 0 and L2 > 0:
        window = (l1 * l1 + l2 * l2) / (4.0 * sc.M * (l1 ** a + l2 ** a)) - 1.0
        c.weak_coop_beta_bound = 0 < b < min(window, beta_underbar(L1, L2))

    for name in ("mixed_sign_cooperative", "ratio_window", "weak_coop_nonconstant", "strong_coop_nonconstant",
                 "competitive_nonconstant", "symmetric_nonconstant", "weak_coop_beta_bound"):
        if getattr(c, name):
            c.clauses.append(name)
    return c


def select_regime(
    params: SystemParams,
    beta_under: Optional[float] = None,
    boundary: Boundary = Boundary.NEUMANN,
) -> str:
    """Name of the theorem regime the parameter point falls in."""
    l1, l2, b = params.lambda1, params.lambda2, params.beta
    cap = BETA_UNDERBAR_CAP if beta_under is None else beta_under
    if b == 0:
        return "decoupled"
    if _pos(params) and b < 0:
        return "competitive-positive"
    if _pos(params) and b > 1:
        return "strong-cooperative"
    if l1 > 0 and l2 == 0 and b < 0 and boundary is Boundary.NEUMANN:
        return "zero-mass"
    if l1 == l2 and l1 <= 0 and b < 0:
        return "symmetric-weak" if abs(b) < min(settings.WEAK_COUPLING, 1.0) else "symmetric-strong"
    if 0 < b < cap:
        return "weak-cooperative"
    if not _pos(params) and b > 0:
        return "mixed-sign-cooperative"
    return "outside-theory"


# ---- β* estimator ----

@dataclass
class BetaStarEstimate:
    value: float
    level: float
    samples: int
    valid_samples: int
    descents: int
    lower_bound_ok: bool
    seed: int
    sample_min: float
    descent_min: float

    def to_dict(self) -> dict:
        return asdict(self)


def phi_ratio(p: Pair, params: SystemParams, L: float) -> float:
    """((4L)⁻¹B(p,p)² − |u|₄⁴ − |v|₄⁴) / (2∫u²v²)."""
    o = overlap(p.u, p.v)
    if not o > 0:
        raise SamplingFailureError("pair has no overlap")
    bb = bilinear_B(p.u, p.u, params.lambda1) + bilinear_B(p.v, p.v, params.lambda2)
    return (bb * bb / (4.0 * L) - lp_power(p.u, 4) - lp_power(p.v, 4)) / (2.0 * o)


class _PhiProblem:
    def __init__(self, params: SystemParams, L: float) -> None:
        self.params = params
        self.L = L
        self.scale = 1.0 + max(abs(params.lambda1), abs(params.lambda2))

    def retract(self, p: Pair) -> Pair:
        p = abs(p)
        n = math.sqrt(pair_inner(p, p))
        if not n > 0:
            raise SamplingFailureError("zero pair")
        return p * (1.0 / n)

    def objective(self, p: Pair) -> float:
        return phi_ratio(p, self.params, self.L)

    def residual(self, p: Pair) -> Pair:
        g = p.grid
        u, v = p.u.values, p.v.values
        l1, l2 = self.params.lambdas
        bb = bilinear_B(p.u, p.u, l1) + bilinear_B(p.v, p.v, l2)
        a = bb * bb / (4.0 * self.L) - lp_power(p.u, 4) - lp_power(p.v, 4)
        o = overlap(p.u, p.v)
        au = (bb / self.L) * (laplacian_apply(p.u).values + l1 * u) - 4.0 * u ** 3
        av = (bb / self.L) * (laplacian_apply(p.v).values + l2 * v) - 4.0 * v ** 3
        gu = au / (2.0 * o) - a * u * v * v / (o * o)
        gv = av / (2.0 * o) - a * v * u * u / (o * o)
        return Pair(Field(g, g.restrict(gu)), Field(g, g.restrict(gv)))

    def precondition(self, r: Pair) -> Pair:
        return precondition_pair(r, self.params)

    def pairing(self, a: Pair, b: Pair) -> float:
        return pair_inner(a, b)

    def constraints(self, p: Pair) -> tuple[float, ...]:
        return ()

    def polish(self, p: Pair) -> None:
        return None


def beta_star_estimate(
    params: SystemParams,
    grid: Grid,
    L: Optional[float] = None,
    samples: int = 200,
    descents: int = 4,
    opts: SolveOptions | None = None,
) -> BetaStarEstimate:
    """Upper estimate of β* by sampling and descending Φ over positive pairs."""
    if not _pos(params):
        raise DomainError("beta* is defined for lambda1, lambda2 > 0")
    opts = opts or SolveOptions(max_outer_iters=200, residual_tol=1e-10)
    sopts = ScalarSolveOptions(seed=opts.seed, multistart=opts.multistart)
    if L is None:
        L = min(cached_scalar(params.lambda1, grid, sopts).level, cached_scalar(params.lambda2, grid, sopts).level)

    rng = np.random.default_rng(opts.seed)
    basis = eigenbasis(grid, min(16, mode_count(grid)))
    sample_vals: list[float] = []
    for _ in range(samples):
        p = Pair(abs(smooth_random_field(basis, rng)), abs(smooth_random_field(basis, rng)))
        try:
            sample_vals.append(phi_ratio(p, params, L))
        except SamplingFailureError:
            continue

    starts: list[Pair] = []
    if params.symmetric:
        w = cached_scalar(params.lambda1, grid, sopts).z
        starts.append(Pair(abs(w), abs(w)))
    while len(starts) < descents:
        starts.append(Pair(abs(smooth_random_field(basis, rng)), abs(smooth_random_field(basis, rng))))

    descent_vals: list[float] = []
    for i, start in enumerate(starts):
        res = descend(_PhiProblem(params, L), start, opts, label=f"phi[{i}]", index=i)
        if res.ok:
            descent_vals.append(res.value)

    values = sample_vals + descent_vals
    if not values:
        raise SamplingFailureError("every sampled pair had zero overlap")
    value = min(values)
    ok = value >= 1.0 - 1e-8
    if not ok:
        log.warning("beta* estimate %.12g fell below 1; the scalar level %.12g is likely not minimal", value, L)
    return BetaStarEstimate(
        value=value,
        level=L,
        samples=samples,
        valid_samples=len(sample_vals),
        descents=len(starts),
        lower_bound_ok=ok,
        seed=opts.seed,
        sample_min=min(sample_vals) if sample_vals else math.inf,
        descent_min=min(descent_vals) if descent_vals else math.inf,
    )


# ---- Report ----

@dataclass
class RegimeReport:
    params: SystemParams
    domain: DomainSpec
    shape: ShapeConstants
    regime: str
    conditions: Conditions
    families: list[ConstantFamily]
    constant_energy: Optional[float]
    L1: Optional[float] = None
    L2: Optional[float] = None
    beta_underbar: Optional[float] = None
    beta_star: Optional[BetaStarEstimate] = None
    C_S: Optional[float] = None
    S: float = field(default_factory=sobolev_S)
    S_coupled: Optional[float] = None
    tent_bound: Optional[float] = None
    splits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "domain": self.domain.to_dict(),
            "constants": self.shape.to_dict(),
            "regime": self.regime,
            "conditions": self.conditions.to_dict(),
            "constant_families": [f.to_dict() for f in self.families],
            "constant_energy": self.constant_energy,
            "L1": self.L1,
            "L2": self.L2,
            "beta_underbar": self.beta_underbar,
            "beta_star": self.beta_star.to_dict() if self.beta_star else None,
            "C_S": self.C_S,
            "S": self.S,
            "S_coupled": self.S_coupled,
            "tent_bound": self.tent_bound,
            "splits": self.splits,
        }


def _split_record(domain: DomainSpec, grid: Optional[Grid], lam: float) -> dict:
    neg, null = continuum_split_dims(domain, lam)
    rec = {"continuum_negative": neg, "continuum_null": null}
    if grid is not None:
        sp = split_for(grid, lam)
        rec.update(discrete_negative=len(sp.negative), discrete_null=len(sp.null))
        rec["split_mismatch"] = (neg, null) != (len(sp.negative), len(sp.null))
    return rec


def build_regime_report(
    params: SystemParams,
    domain: DomainSpec,
    grid: Optional[Grid] = None,
    with_levels: bool = False,
    beta_star_samples: int = 0,
    opts: ScalarSolveOptions | None = None,
) -> RegimeReport:
    L1 = L2 = C_S = bu = None
    if with_levels:
        if grid is None:
            raise DomainError("scalar levels need a grid")
        L1 = cached_scalar(params.lambda1, grid, opts).level
        L2 = cached_scalar(params.lambda2, grid, opts).level
        if L1 > 0 and L2 > 0:
            bu = beta_underbar(L1, L2)
        C_S = sobolev_constant_CS(grid, opts)

    beta_star = None
    if beta_star_samples and grid is not None and _pos(params):
        L = min(L1, L2) if L1 is not None and L2 is not None else None
        beta_star = beta_star_estimate(params, grid, L, samples=beta_star_samples)

    tent = None
    if params.lambda1 + params.lambda2 > 0 and params.beta > -1:
        tent = tent_energy_bound(params.lambda1, params.lambda2, params.beta, domain.dimension)

    report = RegimeReport(
        params=params,
        domain=domain,
        shape=constants_KqKM(domain.dimension),
        regime=select_regime(params, bu, domain.boundary),
        conditions=check_conditions(params, domain, L1, L2, C_S),
        families=constant_solutions(params),
        constant_energy=constant_energy(params, domain),
        L1=L1,
        L2=L2,
        beta_underbar=bu,
        beta_star=beta_star,
        C_S=C_S,
        S_coupled=sobolev_S_coupled(params.beta) if params.beta > -1 else None,
        tent_bound=tent,
        splits={
            "lambda1": _split_record(domain, grid, params.lambda1),
            "lambda2": _split_record(domain, grid, params.lambda2),
        },
    )
    log.info("classified %s -> %s (clauses: %s)", params.to_dict(), report.regime, ", ".join(report.conditions.clauses) or "none")
    return report
