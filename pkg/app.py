import argparse
import sys
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from config import settings
from utils.logger import get_logger, set_level
from utils.records import append_row, json_text, read_json, write_json, write_table
from variational.errors import GroundStateError
from variational.grid import Boundary, DomainSpec, Grid, build_grid, dump_field, dump_pair
from variational.operators import SystemParams
from variational.regimes import build_regime_report
from variational.scalar import ScalarSolveOptions, solve_scalar
from variational.suites import SUITES, run_suite
from variational.sweep import METHODS, parameter_grid, run_sweep, solve_system
from variational.system import SystemSolveOptions

log = get_logger("app", settings.LOG_LEVEL)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFRA = 3


class DomainConfig(BaseModel):
    dim: int = Field(default=1, ge=1, le=4)
    sides: Optional[list[float]] = None
    volume: Optional[float] = Field(default=None, gt=0)
    bc: Boundary = Boundary.NEUMANN
    nodes: Optional[list[int]] = None

    @field_validator("sides")
    @classmethod
    def _positive_sides(cls, v):
        if v is not None and not all(x > 0 for x in v):
            raise ValueError("side lengths must be positive")
        return v

    @field_validator("nodes")
    @classmethod
    def _enough_nodes(cls, v):
        if v is not None and not all(n >= 3 for n in v):
            raise ValueError("every axis needs at least 3 nodes")
        return v

    def spec(self) -> DomainSpec:
        if self.sides is not None:
            sides = tuple(self.sides) if len(self.sides) > 1 else (self.sides[0],) * self.dim
        elif self.volume is not None:
            sides = (self.volume ** (1.0 / self.dim),) * self.dim
        else:
            sides = (1.0,) * self.dim
        return DomainSpec(self.dim, sides, self.bc)

    def grid(self) -> Grid:
        nodes = self.nodes or [settings.DEFAULT_NODES[self.dim]]
        return build_grid(self.spec(), nodes[0] if len(nodes) == 1 else nodes)


class RunConfig(BaseModel):
    domain: DomainConfig = Field(default_factory=DomainConfig)
    lambda1: list[float]
    lambda2: list[float]
    beta: list[float]
    method: str = "auto"
    options: SystemSolveOptions = Field(default_factory=SystemSolveOptions)
    seed: int = settings.DEFAULT_SEED
    out_dir: str = settings.OUTPUT_DIR
    dump_fields: bool = False
    record_timings: bool = False
    threads: Optional[int] = Field(default=None, ge=1)

    @field_validator("lambda1", "lambda2", "beta")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("sweep lists must be non-empty")
        return v

    @field_validator("method")
    @classmethod
    def _known_method(cls, v):
        if v != "auto" and v not in METHODS:
            raise ValueError(f"method must be auto or one of {', '.join(METHODS)}")
        return v

    def solve_options(self) -> SystemSolveOptions:
        return self.options.model_copy(update={"seed": self.seed})


def _domain(args) -> DomainConfig:
    return DomainConfig(
        dim=args.dim,
        sides=args.sides,
        volume=getattr(args, "volume", None),
        bc=args.bc,
        nodes=args.nodes,
    )


def _emit(payload: dict, out: Optional[str]) -> None:
    if out:
        write_json(payload, out)
    else:
        print(json_text(payload))


# ---- Commands ----

def cmd_solve_scalar(args) -> int:
    grid = _domain(args).grid()
    opts = ScalarSolveOptions(seed=args.seed, record_history=args.history)
    rep = solve_scalar(args.lam, grid, opts)
    payload = rep.summary()
    if args.history:
        payload["history"] = rep.history
    _emit(payload, args.out)
    if args.fields:
        dump_field(rep.z, args.fields)
    if args.journal:
        append_row({"lambda": rep.lam, "method": rep.method, "level": rep.level, "residual": rep.residual,
                    "converged": rep.converged, "flags": ";".join(rep.flags)}, args.journal)
    return EXIT_OK


def cmd_solve_system(args) -> int:
    grid = _domain(args).grid()
    params = SystemParams(args.lambda1, args.lambda2, args.beta)
    opts = SystemSolveOptions(seed=args.seed, record_history=args.history)
    report, choice = solve_system(params, grid, args.method, opts)
    payload = report.summary()
    payload["selection"] = choice.to_dict()
    if args.history:
        payload["history"] = report.history
    _emit(payload, args.out)
    if args.fields:
        dump_pair(report.pair, args.fields)
    if args.journal:
        append_row({**params.to_dict(), "method": report.method, "energy": report.energy, "residual": report.residual,
                    "converged": report.converged, "flags": ";".join(report.flags)}, args.journal)
    return EXIT_OK


def cmd_classify(args) -> int:
    dc = _domain(args)
    params = SystemParams(args.lambda1, args.lambda2, args.beta)
    needs_grid = args.with_L or args.beta_star
    grid = dc.grid() if needs_grid else None
    report = build_regime_report(
        params,
        dc.spec(),
        grid=grid,
        with_levels=args.with_L,
        beta_star_samples=args.beta_star,
        opts=ScalarSolveOptions(seed=args.seed),
    )
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    frame = run_suite(args.suite)
    if args.out:
        write_table(frame, args.out)
    else:
        print(frame.to_csv(index=False, float_format="%.17g"), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        cfg = RunConfig(**read_json(args.config))
    else:
        cfg = RunConfig(
            domain=_domain(args),
            lambda1=args.lambda1 or [],
            lambda2=args.lambda2 or [],
            beta=args.beta or [],
            method=args.method,
            seed=args.seed,
            out_dir=args.out_dir,
            dump_fields=args.dump_fields,
            record_timings=args.record_timings,
        )
    result = run_sweep(
        parameter_grid(cfg.lambda1, cfg.lambda2, cfg.beta),
        cfg.domain.grid(),
        method=cfg.method,
        opts=cfg.solve_options(),
        out_dir=cfg.out_dir,
        dump_fields=cfg.dump_fields,
        record_timings=cfg.record_timings,
        threads=cfg.threads,
    )
    log.info("sweep written to %s (%d rows, %d failed)", Path(cfg.out_dir), len(result.rows), len(result.failed))
    return EXIT_OK


# ---- Parser ----

def _add_domain(p: argparse.ArgumentParser, volume: bool = False) -> None:
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--sides", type=float, nargs="+", default=None, help="box side lengths (one value = cube)")
    if volume:
        p.add_argument("--volume", type=float, default=None, help="|Ω| of a cube, instead of --sides")
    p.add_argument("--bc", choices=[b.value for b in Boundary], default=Boundary.NEUMANN.value)
    p.add_argument("--nodes", type=int, nargs="+", default=None)
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundstate", description="Least-energy solutions of the coupled cubic system on boxes.")
    parser.add_argument("--verbose", action="store_true", help="DEBUG logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-scalar", help="scalar ground state L_lambda")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _add_domain(p)
    p.add_argument("--out")
    p.add_argument("--fields", help="prefix for the raw field dump")
    p.add_argument("--journal", help="CSV file to append a summary row to")
    p.add_argument("--history", action="store_true")
    p.set_defaults(func=cmd_solve_scalar)

    p = sub.add_parser("solve-system", help="least-energy candidate of the coupled system")
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--method", choices=("auto",) + METHODS, default="auto")
    _add_domain(p)
    p.add_argument("--out")
    p.add_argument("--fields", help="prefix for the raw field dump")
    p.add_argument("--journal", help="CSV file to append a summary row to")
    p.add_argument("--history", action="store_true")
    p.set_defaults(func=cmd_solve_system)

    p = sub.add_parser("classify", help="regime report for a parameter point")
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    _add_domain(p, volume=True)
    p.add_argument("--with-L", dest="with_L", action="store_true", help="solve the scalar levels")
    p.add_argument("--beta-star", type=int, default=0, help="samples for the beta* estimate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("verify", help="verification suites")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="parameter sweep")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--lambda1", type=float, nargs="+")
    p.add_argument("--lambda2", type=float, nargs="+")
    p.add_argument("--beta", type=float, nargs="+")
    p.add_argument("--method", choices=("auto",) + METHODS, default="auto")
    _add_domain(p)
    p.add_argument("--out-dir", default=settings.OUTPUT_DIR)
    p.add_argument("--dump-fields", action="store_true")
    p.add_argument("--record-timings", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level("DEBUG")
    try:
        return args.func(args)
    except (ValidationError, GroundStateError) as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except OSError as e:
        log.exception("infrastructure failure: %s", e)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
