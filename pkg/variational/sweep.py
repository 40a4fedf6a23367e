"""Method selection and parameter sweeps."""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from config import settings
from utils.logger import get_logger
from utils.records import write_json, write_table
from variational import __version__
from variational.errors import DomainError, GroundStateError
from variational.grid import Boundary, Grid, dump_pair
from variational.operators import SystemParams
from variational.regimes import beta_underbar, build_regime_report, select_regime
from variational.scalar import cached_scalar
from variational.system import SOLVERS, SolveReport, SystemSolveOptions, scalar_options

log = get_logger("sweep", settings.LOG_LEVEL)

METHODS = tuple(SOLVERS)

# failures recorded on the row instead of aborting the sweep
SOLVER_FAILURES = (GroundStateError, ArithmeticError, np.linalg.LinAlgError, ValueError)

_REGIME_METHOD = {
    "competitive-positive": "nehari",
    "strong-cooperative": "mp",
    "weak-cooperative": "gnehari",
    "zero-mass": "zeromass",
    "symmetric-strong": "symmetric",
    "symmetric-weak": "gnehari",
    "decoupled": "gnehari",
    "mixed-sign-cooperative": "gnehari",
    "outside-theory": "gnehari",
}


@dataclass(frozen=True)
class MethodChoice:
    method: str
    regime: str
    outside_theory: bool

    def to_dict(self) -> dict:
        return {"method": self.method, "regime": self.regime, "outside_theory": self.outside_theory}


def auto_select_method(
    params: SystemParams,
    beta_under: Optional[float] = None,
    boundary: Boundary = Boundary.NEUMANN,
) -> MethodChoice:
    regime = select_regime(params, beta_under, boundary)
    return MethodChoice(_REGIME_METHOD[regime], regime, regime == "outside-theory")


def _beta_under_for(params: SystemParams, grid: Grid, opts: SystemSolveOptions) -> Optional[float]:
    # only the weak-cooperative window depends on the scalar levels
    if not (params.lambda1 > 0 and params.lambda2 > 0 and 0 < params.beta <= 1):
        return None
    so = scalar_options(opts)
    return beta_underbar(cached_scalar(params.lambda1, grid, so).level, cached_scalar(params.lambda2, grid, so).level)


def resolve_method(params: SystemParams, grid: Grid, method: str, opts: SystemSolveOptions) -> MethodChoice:
    if method == "auto":
        return auto_select_method(params, _beta_under_for(params, grid, opts), grid.boundary)
    if method not in SOLVERS:
        raise DomainError(f"unknown method {method!r}; choose from auto, {', '.join(METHODS)}")
    return MethodChoice(method, select_regime(params, None, grid.boundary), False)


def solve_system(
    params: SystemParams,
    grid: Grid,
    method: str = "auto",
    opts: SystemSolveOptions | None = None,
) -> tuple[SolveReport, MethodChoice]:
    opts = opts or SystemSolveOptions()
    choice = resolve_method(params, grid, method, opts)
    report = SOLVERS[choice.method](params, grid, opts)
    if choice.outside_theory and not report.outside_theory:
        report.outside_theory = True
        report.flags.append("outside-theory")
    report.notes.append(f"regime: {choice.regime}")
    return report, choice


# ---- Sweeps ----

@dataclass
class SweepRow:
    index: int
    params: SystemParams
    method: str
    regime: str
    status: str
    report: Optional[dict] = None
    regime_report: Optional[dict] = None
    error: Optional[str] = None
    wall_time: float = 0.0

    def csv_row(self, record_timings: bool = False) -> dict:
        rep = self.report or {}
        out = {
            **self.params.to_dict(),
            "method": self.method,
            "regime": self.regime,
            "status": self.status,
            "energy": rep.get("energy"),
            "residual": rep.get("residual"),
            "converged": rep.get("converged", False),
            "overlap": rep.get("overlap"),
            "component_gap": rep.get("component_gap"),
            "outside_theory": rep.get("outside_theory", False),
            "flags": ";".join(rep.get("flags", [])),
            "error": self.error or "",
        }
        if record_timings:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class SweepResult:
    rows: list[SweepRow]
    provenance: dict = field(default_factory=dict)

    def frame(self, record_timings: bool = False) -> pd.DataFrame:
        return pd.DataFrame([r.csv_row(record_timings) for r in self.rows])

    @property
    def failed(self) -> list[SweepRow]:
        return [r for r in self.rows if r.status == "failed"]

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "rows": [
                {
                    "index": r.index,
                    "params": r.params.to_dict(),
                    "method": r.method,
                    "regime": r.regime,
                    "status": r.status,
                    "error": r.error,
                    "report": r.report,
                    "regime_report": r.regime_report,
                }
                for r in self.rows
            ],
        }


def parameter_grid(lambda1: Sequence[float], lambda2: Sequence[float], beta: Sequence[float]) -> list[SystemParams]:
    """Cartesian product in (λ₁, λ₂, β) order, β varying fastest."""
    if not (lambda1 and lambda2 and beta):
        raise DomainError("sweep lists must be non-empty")
    return [SystemParams(a, b, c) for a, b, c in itertools.product(lambda1, lambda2, beta)]


def _run_one(
    index: int,
    params: SystemParams,
    grid: Grid,
    method: str,
    opts: SystemSolveOptions,
    fields_dir: Optional[Path],
) -> SweepRow:
    t0 = time.perf_counter()
    row = SweepRow(index=index, params=params, method=method, regime="", status="failed")
    try:
        row.regime_report = build_regime_report(params, grid.domain, grid).to_dict()
        report, choice = solve_system(params, grid, method, opts)
        row.method, row.regime = choice.method, choice.regime
        row.report = report.summary()
        row.status = "converged" if report.converged else "not-converged"
        if fields_dir is not None and report.converged:
            dump_pair(report.pair, fields_dir / f"tuple_{index:04d}")
    except SOLVER_FAILURES as e:
        # per-tuple failures stay in the table; OSError propagates
        row.error = f"{type(e).__name__}: {e}"
        log.warning("sweep tuple %d %s failed: %s", index, params.to_dict(), row.error)
    row.wall_time = time.perf_counter() - t0
    return row


def run_sweep(
    tuples: Sequence[SystemParams],
    grid: Grid,
    method: str = "auto",
    opts: SystemSolveOptions | None = None,
    out_dir: str | Path | None = None,
    dump_fields: bool = False,
    record_timings: bool = False,
    threads: Optional[int] = None,
) -> SweepResult:
    """Solve every tuple; rows keep input order. Files are written only when ``out_dir`` is given."""
    if not tuples:
        raise DomainError("sweep needs at least one parameter tuple")
    opts = opts or SystemSolveOptions()
    out = Path(out_dir) if out_dir is not None else None
    fields_dir = out / "fields" if (out is not None and dump_fields) else None
    if fields_dir is not None:
        fields_dir.mkdir(parents=True, exist_ok=True)

    threads = settings.THREADS if threads is None else threads
    jobs = list(enumerate(tuples))
    if threads <= 1 or len(jobs) <= 1:
        rows = [_run_one(i, p, grid, method, opts, fields_dir) for i, p in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda job: _run_one(job[0], job[1], grid, method, opts, fields_dir), jobs))

    result = SweepResult(
        rows=rows,
        provenance={
            "grid": grid.describe(),
            "seed": opts.seed,
            "residual_tol": opts.residual_tol,
            "max_outer_iters": opts.max_outer_iters,
            "method": method,
            "version": __version__,
        },
    )
    log.info("sweep: %d tuples, %d failed", len(rows), len(result.failed))
    if out is not None:
        write_json(result.to_dict(), out / "sweep.json")
        for row in rows:
            write_json(
                {"params": row.params.to_dict(), "method": row.method, "regime": row.regime, "status": row.status,
                 "error": row.error, "report": row.report, "regime_report": row.regime_report},
                out / "reports" / f"tuple_{row.index:04d}.json",
            )
        write_table(result.frame(record_timings), out / "summary.csv")
    return result
