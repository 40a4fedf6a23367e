import math

import pytest

from variational.constants import scalar_bound
from variational.errors import DomainError, NotInConeError
from variational.grid import DomainSpec, Field, build_grid, lp_power
from variational.operators import bilinear_B
from variational.scalar import (
    ScalarSolveOptions,
    cached_scalar,
    is_definite,
    scalar_nehari_project,
    scalar_quotient,
    solve_scalar,
    solve_scalar_definite,
    solve_scalar_indefinite,
)

QUICK = ScalarSolveOptions(multistart=1, eigen_seeds=2)


def test_nehari_projection(grid_1d):
    z = Field.from_function(grid_1d, lambda x: 1.0 + 0.3 * x)
    p = scalar_nehari_project(z, 3.0)
    assert bilinear_B(p, p, 3.0) == pytest.approx(lp_power(p, 4), rel=1e-12)
    with pytest.raises(NotInConeError):
        scalar_nehari_project(Field.zeros(grid_1d), 3.0)
    with pytest.raises(NotInConeError):
        scalar_nehari_project(Field.constant(grid_1d, 1.0), -10.0)


def test_quotient_is_scale_invariant(grid_1d):
    z = Field.from_function(grid_1d, lambda x: 2.0 + x * x)
    assert scalar_quotient(z, 2.0) == pytest.approx(scalar_quotient(z * 7.5, 2.0), rel=1e-12)
    assert scalar_quotient(Field.constant(grid_1d, 3.0), 2.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        scalar_quotient(Field.zeros(grid_1d), 2.0)


def test_definiteness(grid_1d, dirichlet_1d):
    assert is_definite(grid_1d, 1.0)
    assert not is_definite(grid_1d, 0.0)
    assert is_definite(dirichlet_1d, -1.0)
    assert not is_definite(dirichlet_1d, -12.0)


def test_solver_preconditions(grid_1d):
    with pytest.raises(DomainError):
        solve_scalar_definite(-1.0, grid_1d, QUICK)
    with pytest.raises(DomainError):
        solve_scalar_indefinite(5.0, grid_1d, QUICK)


def test_small_lambda_gives_the_constant(grid_1d):
    rep = solve_scalar(1.0, grid_1d, QUICK)
    assert rep.method == "nehari"
    assert rep.converged
    assert rep.is_constant
    assert rep.level == pytest.approx(0.25, rel=1e-8)
    assert rep.comparisons["constant_margin"] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("lam", [1.0, 10.0])
def test_level_below_closed_form_bounds(lam, grid_1d):
    rep = solve_scalar(lam, grid_1d, QUICK)
    assert rep.converged
    assert rep.level <= min(lam * lam / 4.0, scalar_bound(lam, 1)) + 1e-8
    z = rep.z
    assert bilinear_B(z, z, lam) == pytest.approx(lp_power(z, 4), rel=1e-6)
    assert float(z.values.max()) > 0


@pytest.mark.slow
def test_large_lambda_concentrates():
    grid = build_grid(DomainSpec.unit(1), 257)
    lam = 100.0
    rep = solve_scalar(lam, grid, QUICK)
    assert rep.converged
    assert not rep.is_constant
    assert rep.level <= min(lam * lam / 4.0, scalar_bound(lam, 1)) + 1e-8
    assert rep.comparisons["constant_margin"] > 0


def test_dirichlet_negative_lambda_is_definite(dirichlet_1d):
    rep = solve_scalar(-1.0, dirichlet_1d, QUICK)
    assert rep.method == "nehari"
    assert rep.tilde_dim == 0
    assert rep.z.values[0] == 0.0 and rep.z.values[-1] == 0.0
    assert rep.level > 0


@pytest.mark.slow
def test_indefinite_lambda(grid_1d):
    rep = solve_scalar(-10.0, grid_1d, QUICK)
    assert rep.method == "generalized-nehari"
    assert rep.tilde_dim == 2
    assert not rep.resonant
    assert rep.level > 0
    assert math.isfinite(rep.residual)


@pytest.mark.slow
def test_resonant_lambda_is_flagged(grid_1d):
    rep = solve_scalar(0.0, grid_1d, QUICK)
    assert rep.resonant
    assert rep.tilde_dim == 1
    assert rep.summary()["flags"][0] == "resonant"


def test_cached_scalar_hands_out_copies(grid_1d):
    first = cached_scalar(1.0, grid_1d, QUICK)
    first.flags.append("annotated")
    first.comparisons["extra"] = 1.0
    again = cached_scalar(1.0, grid_1d, QUICK)
    assert "annotated" not in again.flags
    assert "extra" not in again.comparisons
    assert again.level == first.level
