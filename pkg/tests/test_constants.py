import math

import pytest

from variational.constants import (
    K_q,
    K_q_quadrature,
    constants_KqKM,
    radial_moment,
    scalar_bound,
    sobolev_critical,
    sobolev_S,
    sobolev_S_coupled,
    sphere_area,
    tent_energy_bound,
)
from variational.errors import DomainError


def test_one_dimensional_constants():
    c = constants_KqKM(1)
    assert c.K == pytest.approx(2.0)
    assert c.K2 == pytest.approx(2.0 / 3.0)
    assert c.K4 == pytest.approx(2.0 / 5.0)
    assert c.M == pytest.approx(40.0 / 9.0)


def test_unit_ball_volumes():
    assert constants_KqKM(2).K == pytest.approx(math.pi)
    assert constants_KqKM(3).K == pytest.approx(4.0 * math.pi / 3.0)
    assert constants_KqKM(4).K == pytest.approx(math.pi ** 2 / 2.0)
    assert sphere_area(4) == pytest.approx(2.0 * math.pi ** 2)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("q", [1, 2, 4])
def test_closed_form_matches_quadrature(N, q):
    closed = K_q(N, q)
    assert abs(closed - K_q_quadrature(N, q)) <= 1e-10 * closed


@pytest.mark.parametrize("N", [0, 5])
def test_dimension_range(N):
    with pytest.raises(DomainError):
        constants_KqKM(N)


def test_sobolev_constant():
    grad, quartic = sobolev_critical()
    assert grad == pytest.approx(32.0 * math.pi ** 2 / 3.0, rel=1e-13)
    assert quartic == pytest.approx(grad, rel=1e-13)
    assert sobolev_S() == pytest.approx(8.0 * math.pi / math.sqrt(6.0), rel=1e-13)


def test_coupled_sobolev_constant():
    S = sobolev_S()
    assert sobolev_S_coupled(1.0) == pytest.approx(S)
    assert sobolev_S_coupled(0.0) == pytest.approx(math.sqrt(2.0) * S)
    with pytest.raises(DomainError):
        sobolev_S_coupled(-1.0)


def test_radial_moment():
    assert radial_moment(1, 2) == pytest.approx(0.5)
    assert radial_moment(1, 2, eps=4.0) == pytest.approx(0.125)
    with pytest.raises(DomainError):
        radial_moment(3, 2)


def test_bounds():
    assert scalar_bound(4.0, 1) == pytest.approx(40.0 / 9.0 * 8.0)
    assert scalar_bound(7.0, 4) == pytest.approx(constants_KqKM(4).M)
    c = constants_KqKM(2)
    expected = (2 * c.K + c.K2) ** 2 * 3.0 / (8 * c.K4 * 1.5)
    assert tent_energy_bound(1.0, 2.0, 0.5, 2) == pytest.approx(expected)
    with pytest.raises(DomainError):
        tent_energy_bound(1.0, 1.0, -1.0, 1)
    with pytest.raises(DomainError):
        tent_energy_bound(-1.0, 1.0, 0.0, 1)
