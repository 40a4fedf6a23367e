import math

import numpy as np
import pytest

from variational.errors import CapacityError, DomainError, InsufficientBasisError
from variational.grid import DomainSpec, Field, Pair, build_grid, l2_inner
from variational.operators import (
    SystemParams,
    bilinear_B,
    continuum_split_dims,
    eigenbasis,
    energy,
    hessian_apply,
    laplacian_apply,
    mode_count,
    pair_inner,
    precondition,
    project_plus,
    residual,
    shifted_apply,
    smooth_random_field,
    split,
    split_for,
)


def _random_pair(grid, rng, modes=10):
    basis = eigenbasis(grid, min(modes, mode_count(grid)))
    return Pair(smooth_random_field(basis, rng, modes), smooth_random_field(basis, rng, modes))


def test_laplacian_kills_constants(grid_2d):
    assert laplacian_apply(Field.constant(grid_2d, 3.0)).max_abs() < 1e-10


@pytest.mark.parametrize("bc", ["neumann", "dirichlet"])
def test_eigenfields(bc):
    grid = build_grid(DomainSpec(2, (1.0, 2.0), bc), (17, 13))
    basis = eigenbasis(grid, 6)
    assert np.all(np.diff(basis.eigenvalues) >= 0)
    for i in range(basis.count):
        phi = basis.eigenfield(i)
        lap = laplacian_apply(phi)
        assert np.allclose(lap.values, basis.eigenvalues[i] * phi.values, atol=1e-9 * (1 + basis.eigenvalues[i]))
        for j in range(basis.count):
            expected = 1.0 if i == j else 0.0
            assert l2_inner(phi, basis.eigenfield(j)) == pytest.approx(expected, abs=1e-12)


def test_discrete_eigenvalues_approach_continuum():
    grid = build_grid(DomainSpec.unit(1), 257)
    basis = eigenbasis(grid, 3)
    for i in range(3):
        assert basis.eigenvalues[i] == pytest.approx(basis.continuum_eigenvalue(i), rel=1e-3, abs=1e-12)


@pytest.mark.parametrize("bc", ["neumann", "dirichlet"])
def test_precondition_inverts_shifted_operator(bc, rng):
    grid = build_grid(DomainSpec.unit(2, bc), 17)
    f = Field(grid, rng.standard_normal(grid.shape)).restricted()
    back = precondition(shifted_apply(f, 2.5), 2.5)
    assert np.allclose(back.values, f.values, atol=1e-10)


def test_precondition_needs_positive_shift(grid_1d):
    with pytest.raises(DomainError):
        precondition(Field.zeros(grid_1d), 0.0)


def test_laplacian_self_adjoint(grid_2d, rng):
    f = Field(grid_2d, rng.standard_normal(grid_2d.shape))
    g = Field(grid_2d, rng.standard_normal(grid_2d.shape))
    assert l2_inner(laplacian_apply(f), g) == pytest.approx(l2_inner(f, laplacian_apply(g)), rel=1e-12)


def test_split_counts_negative_modes():
    grid = build_grid(DomainSpec.unit(1), 257)
    sp = split_for(grid, -10.0)
    assert sp.tilde_dim == 2
    assert not sp.resonant
    assert continuum_split_dims(DomainSpec.unit(1), -10.0) == (2, 0)
    assert continuum_split_dims(DomainSpec.unit(1, "dirichlet"), -10.0) == (1, 0)
    assert continuum_split_dims(DomainSpec.unit(2), 5.0) == (0, 0)


def test_zero_lambda_is_resonant_for_neumann(grid_1d):
    sp = split_for(grid_1d, 0.0)
    assert sp.resonant
    assert sp.null == (0,)
    assert continuum_split_dims(DomainSpec.unit(1), 0.0) == (0, 1)


def test_basis_limits(grid_1d):
    with pytest.raises(CapacityError):
        eigenbasis(grid_1d, mode_count(grid_1d) + 1)
    with pytest.raises(InsufficientBasisError):
        split(eigenbasis(grid_1d, 1), -10.0)


def test_project_plus_is_orthogonal_to_tilde(grid_1d, rng):
    sp = split_for(grid_1d, -30.0, extra=4)
    f = Field(grid_1d, rng.standard_normal(grid_1d.shape))
    w = project_plus(f, sp)
    for phi in sp.tilde_fields:
        assert abs(l2_inner(w, phi)) < 1e-12
    assert bilinear_B(w, w, -30.0) > 0


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_params_must_be_finite(bad):
    with pytest.raises(DomainError):
        SystemParams(bad, 1.0, 0.0)
    with pytest.raises(DomainError):
        SystemParams(1.0, 1.0, bad)


def test_residual_is_energy_gradient(grid_1d, rng):
    params = SystemParams(2.0, -1.0, 0.7)
    p, d = _random_pair(grid_1d, rng), _random_pair(grid_1d, rng)
    delta = 1e-5
    fd = (energy(p + d * delta, params) - energy(p - d * delta, params)) / (2 * delta)
    assert fd == pytest.approx(pair_inner(residual(p, params), d), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("bc", ["neumann", "dirichlet"])
def test_hessian_symmetric(bc, rng):
    grid = build_grid(DomainSpec.unit(2, bc), 17)
    params = SystemParams(1.5, 3.0, -0.4)
    p = _random_pair(grid, rng)
    d, e = _random_pair(grid, rng), _random_pair(grid, rng)
    a = pair_inner(hessian_apply(p, d, params), e)
    b = pair_inner(hessian_apply(p, e, params), d)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_constant_pair_energy(grid_1d):
    params = SystemParams(2.0, 2.0, 0.5)
    c = math.sqrt(4.0 / 3.0)
    p = Pair.constant(grid_1d, c, c)
    assert residual(p, params).max_abs() < 1e-12
    assert energy(p, params) == pytest.approx(4.0 / 3.0, rel=1e-12)
