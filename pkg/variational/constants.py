"""Closed-form shape constants: tent-function integrals, the critical
Sobolev constant in dimension four, and the bounds built from them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.integrate import quad
from scipy.special import beta as beta_fn
from scipy.special import gamma

from variational.errors import DomainError


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2) / gamma(N / 2)


def _check_dim(N: int) -> None:
    if not 1 <= N <= 4:
        raise DomainError(f"dimension must be in 1..4, got {N}")


def K_q(N: int, q: float) -> float:
    """∫_{B_1}(1-|x|)^q dx through the Beta function."""
    _check_dim(N)
    return sphere_area(N) * gamma(N) * gamma(q + 1) / gamma(N + q + 1)


def K_q_quadrature(N: int, q: float) -> float:
    _check_dim(N)
    val, _ = quad(lambda r: (1.0 - r) ** q * r ** (N - 1), 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return sphere_area(N) * val


@dataclass(frozen=True)
class ShapeConstants:
    N: int
    K: float
    K2: float
    K4: float
    M: float

    def to_dict(self) -> dict:
        return asdict(self)


def constants_KqKM(N: int) -> ShapeConstants:
    _check_dim(N)
    K = 2.0 * math.pi ** (N / 2) / (N * gamma(N / 2))
    K2 = K_q(N, 2)
    K4 = K_q(N, 4)
    return ShapeConstants(N=N, K=K, K2=K2, K4=K4, M=(K + K2) ** 2 / (4.0 * K4))


def radial_moment(a: float, b: float, eps: float = 1.0) -> float:
    """∫_0^∞ r^a (eps + r²)^(-b) dr for 2b > a + 1."""
    p = 0.5 * (a + 1.0)
    if not b > p:
        raise DomainError(f"radial moment diverges for a={a}, b={b}")
    return 0.5 * eps ** (p - b) * beta_fn(p, b - p)


def sobolev_critical() -> tuple[float, float]:
    """(∫|∇U|², ∫U⁴) for the unit bubble U = √8/(1+r²) in R⁴; both equal S²."""
    area = sphere_area(4)
    grad = area * 32.0 * radial_moment(5, 4)
    quartic = area * 64.0 * radial_moment(3, 4)
    return grad, quartic


def sobolev_S() -> float:
    return math.sqrt(sobolev_critical()[0])


def sobolev_S_coupled(beta: float) -> float:
    """√2·S/√(1+β), the critical level of the coupled problem on R⁴."""
    if not beta > -1.0:
        raise DomainError(f"coupled Sobolev constant needs beta > -1, got {beta}")
    return math.sqrt(2.0) * sobolev_S() / math.sqrt(1.0 + beta)


def scalar_bound(lam: float, N: int) -> float:
    """M·λ^((4-N)/2), the tent-function upper bound on the scalar level."""
    return constants_KqKM(N).M * lam ** ((4 - N) / 2)


def tent_energy_bound(lambda1: float, lambda2: float, beta: float, N: int) -> float:
    """(2K+K₂)²(λ₁+λ₂)^((4-N)/2) / (8K₄(1+β)), the cooperative ground-level bound."""
    if not lambda1 + lambda2 > 0 or not beta > -1.0:
        raise DomainError("tent bound needs lambda1 + lambda2 > 0 and beta > -1")
    c = constants_KqKM(N)
    return (2 * c.K + c.K2) ** 2 * (lambda1 + lambda2) ** ((4 - N) / 2) / (8.0 * c.K4 * (1.0 + beta))
