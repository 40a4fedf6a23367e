import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from variational.descent import descend
from variational.errors import DomainError, GramDegenerateError, InfeasibleScalingError, NotInConeError
from variational.grid import DomainSpec, Field, Pair, build_grid, integrate, l2_inner, lp_power, overlap
from variational.operators import SystemParams, bilinear_B, energy, pair_inner, residual
from variational.scalar import ScalarSolveOptions, cached_scalar
from variational.sweep import solve_system
from variational.system import (
    NehariPairProblem,
    NehariScaling,
    SymmetricPositiveProblem,
    SystemSolveOptions,
    classify_solution,
    constraint_functionals,
    constraint_jacobian,
    mountain_pass_quotient,
    nehari_scaling,
    scalar_options,
    solve_generalized_nehari,
    solve_mountain_pass,
    solve_nehari_positive,
    solve_symmetric_competitive,
    solve_zero_mass,
    symmetric_candidate,
    symmetric_functional,
    symmetric_gradient,
    symmetric_scaling,
    zero_mass_seed,
)

GRID = build_grid(DomainSpec.unit(1), 33)
QUICK = SystemSolveOptions(multistart=1)


def _bumps(grid):
    u = Field.from_function(grid, lambda x: 1.0 + 0.5 * np.cos(np.pi * x))
    v = Field.from_function(grid, lambda x: 1.0 - 0.4 * np.cos(2 * np.pi * x))
    return u, v


def _lobes(grid):
    """Nearly segregated pair, admissible for strong competition."""
    u = Field.from_function(grid, lambda x: (1.0 + np.cos(np.pi * x)) ** 2)
    v = Field.from_function(grid, lambda x: (1.0 - np.cos(np.pi * x)) ** 2)
    return u, v


def _fd_jacobian(pair, params, mode, directions, delta=1e-5):
    cols = []
    for d in directions:
        plus = constraint_functionals(pair + d * delta, params, mode)
        minus = constraint_functionals(pair - d * delta, params, mode)
        cols.append((np.array(plus) - np.array(minus)) / (2 * delta))
    return np.array(cols).T


# ---- Scalings and constraints ----

def test_nehari_scaling_of_constants():
    one = Field.constant(GRID, 1.0)
    sc = nehari_scaling(one, one, SystemParams(1.0, 1.0, 0.5))
    assert sc.t == pytest.approx(math.sqrt(2.0 / 3.0))
    assert sc.s == pytest.approx(math.sqrt(2.0 / 3.0))


@pytest.mark.parametrize("params", [SystemParams(3.0, 5.0, -2.0), SystemParams(2.0, 2.0, 0.3), SystemParams(4.0, 1.0, 0.0)])
def test_nehari_scaling_lands_on_the_constraint_set(params):
    u, v = _lobes(GRID) if params.beta < 0 else _bumps(GRID)
    sc = nehari_scaling(u, v, params)
    p = Pair(u, v).scaled(sc.t, sc.s)
    g1, g2 = constraint_functionals(p, params)
    scale = bilinear_B(p.u, p.u, params.lambda1) + bilinear_B(p.v, p.v, params.lambda2)
    assert abs(g1) < 1e-12 * scale
    assert abs(g2) < 1e-12 * scale


def test_nehari_scaling_failures():
    one = Field.constant(GRID, 1.0)
    with pytest.raises(GramDegenerateError):
        nehari_scaling(one, one, SystemParams(1.0, 1.0, 1.0))
    with pytest.raises(GramDegenerateError):
        nehari_scaling(one, Field.zeros(GRID), SystemParams(1.0, 1.0, 0.0))
    with pytest.raises(InfeasibleScalingError):
        nehari_scaling(one, one, SystemParams(1.0, -5.0, 0.5))
    with pytest.raises(InfeasibleScalingError):
        NehariScaling(-1.0, 1.0)


def test_unknown_constraint_mode():
    u, v = _bumps(GRID)
    with pytest.raises(DomainError):
        constraint_functionals(Pair(u, v), SystemParams(1.0, 1.0, 0.0), "three")
    with pytest.raises(DomainError):
        constraint_jacobian(Pair(u, v), SystemParams(1.0, 1.0, 0.0), "three")


def test_decoupled_jacobian_is_diagonal():
    u, v = _bumps(GRID)
    jac = constraint_jacobian(Pair(u, v), SystemParams(2.0, 3.0, 0.0))
    assert jac[0, 1] == 0.0 and jac[1, 0] == 0.0
    assert jac[0, 0] == pytest.approx(-2.0 * lp_power(u, 4))


@pytest.mark.parametrize("beta", [-0.3, -2.0, -20.0])
def test_competitive_jacobian_determinant(beta):
    params = SystemParams(4.0, 6.0, beta)
    u, v = _lobes(GRID)
    sc = nehari_scaling(u, v, params)
    p = Pair(u, v).scaled(sc.t, sc.s)
    jac = constraint_jacobian(p, params)
    bu = bilinear_B(p.u, p.u, params.lambda1)
    bv = bilinear_B(p.v, p.v, params.lambda2)
    assert np.linalg.det(jac) >= 4.0 * bu * bv * (1.0 - 1e-12)


@pytest.mark.parametrize("params", [SystemParams(4.0, 6.0, -1.5), SystemParams(3.0, 3.0, 0.4)])
def test_jacobian_matches_finite_differences(params):
    u, v = _lobes(GRID) if params.beta < 0 else _bumps(GRID)
    sc = nehari_scaling(u, v, params)
    p = Pair(u, v).scaled(sc.t, sc.s)
    zero = Field.zeros(GRID)
    fd = _fd_jacobian(p, params, "two", [Pair(p.u, zero), Pair(zero, p.v)])
    jac = constraint_jacobian(p, params)
    assert np.allclose(fd, jac, rtol=0, atol=1e-6 * np.max(np.abs(jac)))


def test_zero_mass_jacobian_matches_finite_differences(grid_1d):
    params = SystemParams(10.0, 0.0, -50.0)
    p = zero_mass_seed(grid_1d, params)
    g = constraint_functionals(p, params, "zero-mass")
    assert np.max(np.abs(g)) < 1e-8 * (1.0 + bilinear_B(p.u, p.u, 10.0))
    zero, one = Field.zeros(grid_1d), Field.constant(grid_1d, 1.0)
    fd = _fd_jacobian(p, params, "zero-mass", [Pair(p.u, zero), Pair(zero, p.v), Pair(zero, one)])
    jac = constraint_jacobian(p, params, "zero-mass")
    assert jac.shape == (3, 3)
    assert np.allclose(fd, jac, rtol=0, atol=1e-6 * np.max(np.abs(jac)))


# ---- Closed-form competitors ----

@hsettings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.05, max_value=20.0))
def test_mountain_pass_quotient_is_scale_invariant(t):
    u, v = _bumps(GRID)
    params = SystemParams(2.0, 3.0, 1.5)
    base = mountain_pass_quotient(Pair(u, v), params)
    assert mountain_pass_quotient(Pair(u, v) * t, params) == pytest.approx(base, rel=1e-11)


def test_mountain_pass_quotient_degenerate():
    one = Field.constant(GRID, 1.0)
    with pytest.raises(GramDegenerateError):
        mountain_pass_quotient(Pair(one, one), SystemParams(1.0, 1.0, -1.0))


def test_symmetric_functional_matches_energy_on_nonnegative_pairs():
    u, v = _bumps(GRID)
    p = Pair(u, v)
    for lam, beta in ((-2.0, -0.5), (0.0, -3.0), (1.5, 0.7)):
        expected = energy(p, SystemParams(lam, lam, beta))
        assert symmetric_functional(p, lam, beta) == pytest.approx(expected, rel=1e-12)


def test_symmetric_candidate():
    one = Field.constant(GRID, 2.0)
    p = symmetric_candidate(one, 3.0)
    assert p.u.values[0] == pytest.approx(1.0)
    # constants with c² = λ solve the scalar equation
    assert residual(p, SystemParams(4.0, 4.0, 3.0)).max_abs() < 1e-12
    with pytest.raises(DomainError):
        symmetric_candidate(one, -1.0)


def test_symmetric_gradient_matches_finite_differences():
    u = Field.from_function(GRID, lambda x: np.cos(2 * np.pi * x) + 0.3)
    v = Field.from_function(GRID, lambda x: np.sin(np.pi * x) - 0.2)
    p = Pair(u, v)
    d = Pair(Field.from_function(GRID, lambda x: x * x), Field.from_function(GRID, lambda x: 1.0 - x))
    lam, beta, delta = -0.5, -2.0, 1e-5
    plus = symmetric_functional(p + d * delta, lam, beta)
    minus = symmetric_functional(p - d * delta, lam, beta)
    slope = pair_inner(symmetric_gradient(p, lam, beta), d)
    assert (plus - minus) / (2 * delta) == pytest.approx(slope, rel=1e-6)


def test_symmetric_gradient_is_the_residual_on_nonnegative_pairs():
    p = Pair(*_bumps(GRID))
    for lam, beta in ((-2.0, -0.5), (0.0, -3.0)):
        np.testing.assert_allclose(
            symmetric_gradient(p, lam, beta).stacked(),
            residual(p, SystemParams(lam, lam, beta)).stacked(),
            atol=1e-9,
        )


@pytest.mark.parametrize("lam,beta", [(0.0, -3.0), (-1.0, -0.5)])
def test_symmetric_scaling_lands_on_its_constraint_set(lam, beta):
    problem = SymmetricPositiveProblem(SystemParams(lam, lam, beta), QUICK)
    q = problem.retract(Pair(*_lobes(GRID)))
    ref = bilinear_B(q.u, q.u, 1.0) + bilinear_B(q.v, q.v, 1.0)
    assert all(abs(c) < 1e-10 * ref for c in problem.constraints(q))
    g = symmetric_gradient(q, lam, beta)
    assert abs(l2_inner(g.u, q.u)) < 1e-10 * ref
    assert problem.objective(q) == pytest.approx(symmetric_functional(q, lam, beta))


def test_symmetric_scaling_failures():
    one = Field.constant(GRID, 1.0)
    with pytest.raises(NotInConeError):
        symmetric_scaling(one, one, -1.0, -0.5)
    with pytest.raises(GramDegenerateError):
        symmetric_scaling(one, -one, 0.0, -0.5)


# ---- Classification ----

def test_classify_semi_trivial_constant():
    params = SystemParams(1.0, 1.0, 0.5)
    flags = classify_solution(Pair.constant(GRID, 1.0, 0.0), params)
    assert flags.semi_trivial and flags.constant and flags.positive
    assert not flags.fully_nontrivial
    assert flags.constant_family == "semi_trivial_u"
    assert "non_constant" not in flags.names()


def test_classify_trivial_and_sign_changing():
    params = SystemParams(1.0, 1.0, 0.5)
    assert classify_solution(Pair.zeros(GRID), params).trivial
    wave = Field.from_function(GRID, lambda x: np.cos(2 * np.pi * x))
    flags = classify_solution(Pair(wave, wave), params)
    assert flags.fully_nontrivial and flags.sign_changing
    assert not flags.positive
    assert "non_constant" in flags.names()


# ---- Preconditions ----

def test_solver_preconditions(grid_1d, dirichlet_1d):
    with pytest.raises(DomainError):
        solve_nehari_positive(SystemParams(-1.0, 1.0, -1.0), grid_1d, QUICK)
    with pytest.raises(DomainError):
        solve_mountain_pass(SystemParams(-1.0, 1.0, 2.0), grid_1d, QUICK)
    with pytest.raises(DomainError):
        solve_zero_mass(SystemParams(10.0, 1.0, -50.0), grid_1d, QUICK)
    with pytest.raises(DomainError):
        solve_zero_mass(SystemParams(10.0, 0.0, -50.0), dirichlet_1d, QUICK)
    with pytest.raises(DomainError):
        solve_symmetric_competitive(SystemParams(1.0, 1.0, -1.0), grid_1d, QUICK)
    with pytest.raises(DomainError):
        solve_symmetric_competitive(SystemParams(-1.0, -2.0, -1.0), grid_1d, QUICK)


def test_scalar_options_drop_system_fields():
    so = scalar_options(SystemSolveOptions(seed=7, reseed_attempts=1, record_history=True))
    assert isinstance(so, ScalarSolveOptions)
    assert so.seed == 7
    assert so.record_history is False


# ---- Solver runs ----

@pytest.mark.slow
@pytest.mark.parametrize("lam", [1.0, 25.0])
@pytest.mark.parametrize("beta", [-0.5, 2.0, 10.0])
def test_symmetric_family_bound(lam, beta):
    grid = build_grid(DomainSpec.unit(1), 257)
    params = SystemParams(lam, lam, beta)
    omega = cached_scalar(lam, grid, scalar_options(QUICK))
    cand = symmetric_candidate(omega.z, beta)
    assert residual(cand, params).max_abs() < 1e-6 * (1.0 + lam)
    report, _ = solve_system(params, grid, "auto", QUICK)
    assert report.converged
    assert report.energy <= 2.0 * omega.level / (1.0 + beta) * (1.0 + 1e-6)


@pytest.mark.slow
def test_competitive_history_stays_on_the_constraint_set():
    grid = build_grid(DomainSpec.unit(1), 129)
    params = SystemParams(5.0, 5.0, -2.0)
    opts = SystemSolveOptions(multistart=1, record_history=True)
    report = solve_nehari_positive(params, grid, opts)
    assert report.converged
    scale = 6.0
    rows = [r for r in report.history if r["step"] >= 0]
    assert rows
    for row in rows:
        assert abs(row["constraint_1"]) < 1e-8 * scale
        assert abs(row["constraint_2"]) < 1e-8 * scale
    p = report.pair
    quarter = 0.25 * (bilinear_B(p.u, p.u, 5.0) + bilinear_B(p.v, p.v, 5.0))
    assert report.energy == pytest.approx(quarter, rel=1e-8)


@pytest.mark.slow
def test_segregation_trend():
    grid = build_grid(DomainSpec.unit(1), 129)
    overlaps = []
    for beta in (-1.0, -10.0, -100.0):
        report = solve_nehari_positive(SystemParams(5.0, 5.0, beta), grid, QUICK)
        assert report.converged
        for flag in ("fully_nontrivial", "positive", "non_constant"):
            assert flag in report.flags
        overlaps.append(report.overlap)
    assert overlaps[0] > overlaps[1] > overlaps[2]


@pytest.mark.slow
def test_zero_mass_constraint():
    grid = build_grid(DomainSpec.unit(1), 129)
    params = SystemParams(10.0, 0.0, -50.0)
    report = solve_zero_mass(params, grid, QUICK)
    assert report.converged
    assert report.fully_nontrivial
    u, v = report.pair.u, report.pair.v
    g3 = integrate(Field(grid, v.values ** 3 + params.beta * u.values ** 2 * v.values))
    assert abs(g3) < 1e-8 * 11.0
    assert len(report.constraint_residuals) == 3


@pytest.mark.slow
def test_mountain_pass_level_decreases_in_beta():
    grid = build_grid(DomainSpec.unit(1), 129)
    reports = [solve_mountain_pass(SystemParams(5.0, 5.0, b), grid, QUICK) for b in (2.0, 10.0, 100.0)]
    assert all(r.converged for r in reports)
    levels = [r.energy for r in reports]
    assert levels[0] > levels[1] > levels[2]
    for r in reports:
        assert r.diagnostics["quotient"] == pytest.approx(r.energy, rel=1e-6)


@pytest.mark.slow
def test_nehari_descent_is_swap_equivariant(grid_1d):
    params = SystemParams(2.0, 5.0, -0.5)
    u, v = _bumps(grid_1d)
    opts = SystemSolveOptions()
    a = descend(NehariPairProblem(params, opts, absolute=True), Pair(u, v), opts)
    b = descend(NehariPairProblem(params.swapped(), opts, absolute=True), Pair(v, u), opts)
    assert a.converged and b.converged
    assert a.value == pytest.approx(b.value, rel=1e-8)
    assert overlap(a.state.u, a.state.v) == pytest.approx(overlap(b.state.v, b.state.u), rel=1e-6)


@pytest.mark.slow
def test_decoupled_indefinite_level(grid_1d):
    params = SystemParams(-1.0, -1.0, 0.0)
    report = solve_generalized_nehari(params, grid_1d, QUICK)
    L = cached_scalar(-1.0, grid_1d, scalar_options(QUICK)).level
    assert report.diagnostics["tilde_dims"] == [1, 1]
    assert report.energy <= 2.0 * L * (1.0 + 1e-6) + 1e-8


@pytest.mark.slow
def test_symmetric_competitive_finds_a_nontrivial_pair():
    grid = build_grid(DomainSpec.unit(1), 129)
    report = solve_symmetric_competitive(SystemParams(0.0, 0.0, -100.0), grid, QUICK)
    assert "all-semi-trivial" not in report.flags
    assert report.fully_nontrivial
    assert report.energy > 0
    pair = report.pair
    assert report.diagnostics["min_value"] >= -1e-6 * pair.max_abs()
    assert symmetric_functional(pair, 0.0, -100.0) == pytest.approx(energy(pair, SystemParams(0.0, 0.0, -100.0)), rel=1e-8)
    assert "not-a-system-solution" not in report.flags
