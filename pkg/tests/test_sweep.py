import numpy as np
import pandas as pd
import pytest

from utils.records import read_json
from variational import sweep
from variational.errors import DomainError
from variational.grid import Boundary, DomainSpec, build_grid
from variational.operators import SystemParams
from variational.sweep import (
    METHODS,
    auto_select_method,
    parameter_grid,
    resolve_method,
    run_sweep,
    solve_system,
)
from variational.system import SystemSolveOptions

FAST = SystemSolveOptions(multistart=0, eigen_seeds=1)


@pytest.mark.parametrize(
    "params,boundary,method,regime,outside",
    [
        (SystemParams(5.0, 5.0, -2.0), Boundary.NEUMANN, "nehari", "competitive-positive", False),
        (SystemParams(1.0, 4.0, 10.0), Boundary.NEUMANN, "mp", "strong-cooperative", False),
        (SystemParams(-1.0, -1.0, -0.1), Boundary.NEUMANN, "gnehari", "symmetric-weak", False),
        (SystemParams(-1.0, -1.0, -5.0), Boundary.NEUMANN, "symmetric", "symmetric-strong", False),
        (SystemParams(10.0, 0.0, -50.0), Boundary.NEUMANN, "zeromass", "zero-mass", False),
        (SystemParams(10.0, 0.0, -50.0), Boundary.DIRICHLET, "gnehari", "outside-theory", True),
        (SystemParams(1.0, 1.0, 0.9), Boundary.NEUMANN, "gnehari", "outside-theory", True),
        (SystemParams(2.0, -3.0, 0.0), Boundary.NEUMANN, "gnehari", "decoupled", False),
    ],
)
def test_auto_select_method(params, boundary, method, regime, outside):
    choice = auto_select_method(params, boundary=boundary)
    assert (choice.method, choice.regime, choice.outside_theory) == (method, regime, outside)
    assert choice.method in METHODS


def test_unknown_method(grid_1d):
    with pytest.raises(DomainError):
        resolve_method(SystemParams(1.0, 1.0, 0.5), grid_1d, "newton", FAST)


def test_forced_method_is_not_outside_theory(grid_1d):
    choice = resolve_method(SystemParams(1.0, 1.0, 0.9), grid_1d, "mp", FAST)
    assert choice.method == "mp"
    assert choice.regime == "outside-theory"
    assert not choice.outside_theory


def test_parameter_grid_order():
    tuples = parameter_grid([1.0, 2.0], [3.0], [0.1, 0.2])
    assert [p.to_dict() for p in tuples] == [
        {"lambda1": 1.0, "lambda2": 3.0, "beta": 0.1},
        {"lambda1": 1.0, "lambda2": 3.0, "beta": 0.2},
        {"lambda1": 2.0, "lambda2": 3.0, "beta": 0.1},
        {"lambda1": 2.0, "lambda2": 3.0, "beta": 0.2},
    ]
    with pytest.raises(DomainError):
        parameter_grid([], [1.0], [0.0])
    with pytest.raises(DomainError):
        run_sweep([], build_grid(DomainSpec.unit(1), 9))


def test_singleton_sweep_matches_direct_solve(tmp_path):
    grid = build_grid(DomainSpec.unit(1), 33)
    params = SystemParams(1.0, 1.0, -0.5)
    result = run_sweep([params], grid, opts=FAST, out_dir=tmp_path, dump_fields=True)
    direct, choice = solve_system(params, grid, "auto", FAST)
    row = result.rows[0]
    assert row.method == choice.method == "nehari"
    assert row.status == "converged"
    assert row.report["energy"] == pytest.approx(direct.energy, rel=1e-12)
    assert (tmp_path / "sweep.json").exists()
    assert (tmp_path / "reports" / "tuple_0000.json").exists()
    assert (tmp_path / "fields" / "tuple_0000_u.bin").exists()
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["status"]) == ["converged"]
    assert read_json(tmp_path / "sweep.json")["provenance"]["seed"] == FAST.seed


def test_summary_csv_is_reproducible(tmp_path):
    grid = build_grid(DomainSpec.unit(1), 33)
    tuples = parameter_grid([1.0], [1.0, 2.0], [-0.5])
    run_sweep(tuples, grid, opts=FAST, out_dir=tmp_path / "a")
    run_sweep(tuples, grid, opts=FAST, out_dir=tmp_path / "b")
    first = (tmp_path / "a" / "summary.csv").read_bytes()
    assert first == (tmp_path / "b" / "summary.csv").read_bytes()
    assert first.splitlines()[0].startswith(b"lambda1,lambda2,beta,method")


def test_failed_tuple_stays_in_the_table(tmp_path):
    grid = build_grid(DomainSpec.unit(1, "dirichlet"), 33)
    result = run_sweep([SystemParams(10.0, 0.0, -50.0)], grid, method="zeromass", opts=FAST,
                       out_dir=tmp_path, record_timings=True)
    assert len(result.failed) == 1
    row = result.rows[0]
    assert row.error.startswith("DomainError")
    csv_row = row.csv_row(record_timings=True)
    assert csv_row["status"] == "failed"
    assert csv_row["wall_time"] >= 0
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert "wall_time" in summary.columns


@pytest.mark.parametrize("threads", [1, 2])
def test_numerical_failure_stays_on_its_row(tmp_path, monkeypatch, threads):
    grid = build_grid(DomainSpec.unit(1), 33)
    nehari = sweep.SOLVERS["nehari"]

    def singular_for_one_tuple(params, grid, opts=None):
        if params.beta == -0.7:
            raise np.linalg.LinAlgError("singular Krylov system")
        return nehari(params, grid, opts)

    monkeypatch.setitem(sweep.SOLVERS, "nehari", singular_for_one_tuple)
    tuples = parameter_grid([1.0], [1.0], [-0.7, -0.5])
    result = run_sweep(tuples, grid, opts=FAST, out_dir=tmp_path, threads=threads)
    assert [row.status for row in result.rows] == ["failed", "converged"]
    assert result.rows[0].error.startswith("LinAlgError")
    assert result.rows[1].report is not None
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["status"]) == ["failed", "converged"]
    assert (tmp_path / "reports" / "tuple_0000.json").exists()
