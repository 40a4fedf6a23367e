import math

import numpy as np
import pytest

from variational.constants import sobolev_S
from variational.errors import DomainError, ResolutionError
from variational.grid import DomainSpec, build_grid, lp_power
from variational.operators import SystemParams
from variational.suites import (
    SUITES,
    bubble_exact,
    bubble_suite,
    constants_suite,
    gradcheck_suite,
    kqkm_suite,
    run_suite,
    scaling_exponents,
    smooth_cutoff,
    tent_field,
    tent_ladder,
    tent_suite,
)


def test_kqkm_suite():
    frame = kqkm_suite()
    assert len(frame) == 12
    assert (frame["rel_err"] < 1e-10).all()


def test_constants_suite():
    frame = constants_suite()
    rows = frame[frame["kind"] != "none"]
    assert len(frame[["lambda1", "lambda2", "beta"]].drop_duplicates()) == 20
    assert (rows["residual"] < 1e-12).all()
    exact = rows.dropna(subset=["rel_err"])
    assert len(exact) > 0
    assert (exact["rel_err"] < 1e-12).all()


def test_gradcheck_suite():
    frame = gradcheck_suite()
    assert len(frame) == 20
    assert (frame["rel_err_1e4"] < 1e-6).all()
    assert frame["ratio"].between(50.0, 200.0).all()
    assert (frame["hessian_asymmetry"] < 1e-12).all()


def test_tent_field_mass():
    grid = build_grid(DomainSpec.unit(1), 1025)
    phi = tent_field(grid, 0.01)
    assert lp_power(phi, 1) == pytest.approx(1.0, rel=1e-4)
    with pytest.raises(ResolutionError):
        tent_field(grid, 1e-6)
    with pytest.raises(ResolutionError):
        tent_field(grid, 0.01, centre=[0.05])


def test_tent_bound_and_level():
    grid = build_grid(DomainSpec.unit(1), 1025)
    rec = tent_suite(0.01, grid, SystemParams(50.0, 50.0, 2.0))
    assert rec.tent_bound is not None
    assert rec.tent_level is not None
    # the tent at ε = 1/(λ₁+λ₂) realises the closed-form bound
    assert rec.tent_level == pytest.approx(rec.tent_bound, rel=1e-2)


@pytest.mark.parametrize("N,eps,nodes", [(1, (0.04, 0.02, 0.01, 0.005), 4097), (2, (0.04, 0.02, 0.01), 513)])
def test_tent_exponents(N, eps, nodes):
    frame = tent_ladder(N, eps, nodes)
    for name in ("L1", "L2", "L4", "gradient"):
        fit = frame[f"{name}_exponent"].iloc[0]
        expected = frame[f"{name}_exponent_expected"].iloc[0]
        assert abs(fit - expected) <= 0.02 * max(1.0, abs(expected))


def test_exponent_fit_needs_two_points():
    grid = build_grid(DomainSpec.unit(1), 1025)
    with pytest.raises(DomainError):
        scaling_exponents([tent_suite(0.01, grid)])


def test_smooth_cutoff_profile():
    r = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 2.0])
    c = smooth_cutoff(r, 1.0)
    assert np.allclose(c, [1.0, 1.0, 1.0, 0.5, 0.0, 0.0])


def test_bubble_continuum_approaches_half_sobolev():
    leading = 0.5 * sobolev_S() ** 2
    grad, quartic, _ = bubble_exact(1e-6, 0.5)
    assert grad == pytest.approx(leading, rel=1e-3)
    assert quartic == pytest.approx(leading, rel=1e-3)
    coarse, _, _ = bubble_exact(1e-2, 0.5)
    assert abs(coarse - leading) > abs(grad - leading)


def test_bubble_suite_guards():
    with pytest.raises(DomainError):
        bubble_suite(0.01, build_grid(DomainSpec.unit(2), 17))
    grid = build_grid(DomainSpec.unit(4), 9)
    with pytest.raises(ResolutionError):
        bubble_suite(1e-3, grid)
    with pytest.raises(DomainError):
        bubble_suite(0.1, grid, rho=2.0)


@pytest.mark.slow
def test_bubble_suite_on_the_grid():
    grid = build_grid(DomainSpec.unit(4), 33)
    rec = bubble_suite(1e-2, grid, betas=(1.0,))
    assert rec.gradient == pytest.approx(rec.gradient_exact, rel=0.15)
    assert rec.quartic == pytest.approx(rec.quartic_exact, rel=0.15)
    assert math.isfinite(rec.l2_ratio) and rec.l2_ratio > 0
    assert rec.S_coupled[1.0] == pytest.approx(rec.S)
    row = rec.row()
    assert "cutoff_excess" in row and "S_coupled[1]" in row


def test_run_suite_dispatch():
    assert set(SUITES) == {"constants", "gradcheck", "tent", "bubble", "kqkm"}
    assert len(run_suite("kqkm")) == 12
    with pytest.raises(DomainError):
        run_suite("nope")


def test_tent_suite_on_a_small_grid():
    grid = build_grid(DomainSpec.unit(1), 257)
    rec = tent_suite(0.04, grid, SystemParams(10.0, 10.0, 1.0))
    for q in (1, 2, 4):
        assert rec.deviation(q) < 2e-2
    assert rec.gradient_deviation < 5e-2
    assert rec.tent_bound is not None and rec.tent_level is not None
    row = rec.row()
    assert row["eps"] == 0.04 and math.isfinite(row["tent_level"])


def test_tent_ladder_on_a_small_grid():
    frame = tent_ladder(1, (0.04, 0.02), 1025)
    assert len(frame) == 2
    fit, expected = frame["L2_exponent"].iloc[0], frame["L2_exponent_expected"].iloc[0]
    assert fit == pytest.approx(expected, abs=0.05)


def test_bubble_suite_on_a_small_grid():
    grid = build_grid(DomainSpec.unit(4), 9)
    rec = bubble_suite(0.1, grid, betas=(0.5,))
    assert rec.rho == 0.5
    assert rec.gradient > 0 and rec.quartic > 0 and rec.l2 > 0
    row = rec.row()
    for key in ("gradient_ratio", "cutoff_excess", "l2_ratio", "S_coupled[0.5]"):
        assert math.isfinite(row[key])
