"""Command-line entry point: ``rrmfem {dims,source,eigen,verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import assemble, dump_matrices
from .exceptions import NumericalError, PreconditionError
from .local import bubble_phi0, boundary_gauss_points
from .mesh import RectGrid, build_nonuniform_pattern, build_uniform
from .postproc import eigen_table_csv, l2_lower_bound_check, lower_bound_report
from .problems import LSHAPE_LAMBDA3, exact_eigenvalues_rectangle, get_problem
from .spaces import (KINDS, build_constraints_mc, build_constraints_rrm, build_mc_basis,
                     build_rrm_basis, expected_dims, membership_rrm, numerical_rank,
                     verify_exact_sequence, wilson_dofmap)
from .studies import FORMULATIONS, eigen_grid, run_source, solve_eigen_problem

log = logging.getLogger("rrmfem")

VERIFY_TOL = 1e-10


@dataclass
class RunConfig:
    command: str
    element: str = "rrm"
    domain: object = "unit-square"
    m: int = 4
    n: int | None = None
    homogeneous: bool = False
    mode: str = "uniform"
    levels: str | None = None
    hx: str | None = None
    aspect: float | None = None
    k: int = 6
    rho: float = 1.0
    problem: str = "example1"
    formulation: str | None = None
    out: str | None = None
    format: str = "csv"
    dump_matrices: str | None = None
    mesh_file: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.element not in KINDS:
            raise PreconditionError(f"element must be one of {KINDS}")
        if self.formulation is not None and self.formulation not in FORMULATIONS:
            raise PreconditionError(f"formulation must be one of {FORMULATIONS}")
        if self.domain == "l-shape" and self.formulation in ("reduced", "both"):
            raise PreconditionError("the L-shape supports the saddle formulation only")
        if self.rho <= 0:
            raise PreconditionError("density must be positive")
        if self.jobs < 1:
            raise PreconditionError("--jobs must be >= 1")

    @property
    def resolved_formulation(self) -> str:
        if self.formulation is not None:
            return self.formulation
        return "saddle" if self.domain == "l-shape" else "reduced"


def parse_domain(text: str):
    if text in ("unit-square", "l-shape"):
        return text
    match = re.fullmatch(r"rect[:(]\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)?", text)
    if match:
        return (float(match.group(1)), float(match.group(2)))
    raise PreconditionError(f"unknown domain {text!r}; use unit-square, l-shape or rect:W,H")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise PreconditionError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise PreconditionError(f"expected comma-separated numbers, got {text!r}") from exc


def _single_grid(cfg: RunConfig) -> RectGrid:
    if cfg.mesh_file:
        return RectGrid.from_json(cfg.mesh_file)
    if cfg.mode == "nonuniform":
        return build_nonuniform_pattern(int(cfg.levels or 1), cfg.domain)
    return build_uniform(cfg.m, cfg.n if cfg.n is not None else cfg.m, cfg.domain)


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


# ---------------------------------------------------------------------------
# commands

def cmd_dims(cfg: RunConfig) -> dict:
    grid = _single_grid(cfg)
    report = {"m": grid.m, "n": grid.n, "element": cfg.element, "expected": expected_dims(grid.m, grid.n)}
    if cfg.element == "rrm":
        wilson = wilson_dofmap(grid)
        B = build_constraints_rrm(grid, wilson)
        rank = numerical_rank(B.toarray())
        report.update(dim_wilson=wilson.n_dofs, n_constraints=B.shape[0], rank=rank,
                      dim_rrm=wilson.n_dofs - rank)
        if grid.is_full and grid.m >= 2 and grid.n >= 2:
            basis = build_rrm_basis(grid, wilson)
            report.update(n_basis=len(basis), basis_rank=basis.rank())
    elif cfg.element == "mc":
        basis = build_mc_basis(grid, cfg.homogeneous)
        C = build_constraints_mc(grid, basis.dofmap, cfg.homogeneous)
        key = "dim_mc_hom" if cfg.homogeneous else "dim_mc"
        report.update({key: len(basis), "basis_rank": basis.rank(),
                       "constraint_violation": float(abs(C @ basis.matrix).max()) if C.shape[0] else 0.0})
    else:
        sys_ = assemble(cfg.element, grid, homogeneous=cfg.homogeneous)
        report.update(n_dofs=sys_.n_dofs)
    return report


def _source_grids(cfg: RunConfig) -> list[RectGrid]:
    if cfg.mesh_file:
        return [RectGrid.from_json(cfg.mesh_file)]
    if cfg.mode == "nonuniform":
        count = int(cfg.levels or 4)
        return [build_nonuniform_pattern(k, cfg.domain) for k in range(1, count + 1)]
    # square cells make the MC bubble cancel the leading error of sin*sin data,
    # so MC defaults to the stretched uniform cells used for the eigen tables
    aspect = cfg.aspect if cfg.aspect is not None else (2.0 if cfg.element == "mc" else 1.0)
    grids = []
    for m in _int_list(cfg.levels or "8,16,32,64"):
        n = m * aspect
        if abs(n - round(n)) > 1e-9:
            raise PreconditionError(f"aspect {aspect} does not give an integer row count for m={m}")
        grids.append(build_uniform(m, int(round(n)), cfg.domain))
    return grids


def cmd_source(cfg: RunConfig) -> str:
    grids = _source_grids(cfg)
    problem = get_problem(cfg.problem)
    rho = None if cfg.rho == 1.0 else cfg.rho
    report = run_source(cfg.element, grids, problem, cfg.resolved_formulation, rho, cfg.jobs)
    if cfg.mode == "uniform" and len(grids) >= 3:
        report.meta["l2_lower_bound"] = l2_lower_bound_check(report)
    if cfg.dump_matrices:
        sys_ = assemble(cfg.element, grids[-1], rho=rho, f=problem.f)
        dump_matrices(sys_, cfg.dump_matrices)
    return report.to_json() + "\n" if cfg.format == "json" else report.to_csv()


def _exact_for(cfg: RunConfig, k: int):
    if cfg.domain == "unit-square":
        return exact_eigenvalues_rectangle(k).tolist()
    if isinstance(cfg.domain, tuple):
        return exact_eigenvalues_rectangle(k, *cfg.domain).tolist()
    return [None, None, LSHAPE_LAMBDA3, None, None, None][:k] + [None] * max(0, k - 6)


def _eigen_grids(cfg: RunConfig) -> list[RectGrid]:
    if cfg.mesh_file:
        return [RectGrid.from_json(cfg.mesh_file)]
    if cfg.mode == "nonuniform":
        count = int(cfg.levels or 4)
        return [build_nonuniform_pattern(k, cfg.domain) for k in range(1, count + 1)]
    if isinstance(cfg.domain, tuple):
        raise PreconditionError("eigen on rect:W,H needs --mesh-file or --nonuniform")
    aspect = cfg.aspect if cfg.aspect is not None else 2.0
    return [eigen_grid(hx, aspect, cfg.domain) for hx in _float_list(cfg.hx or "0.25")]


def cmd_eigen(cfg: RunConfig) -> str:
    grids = _eigen_grids(cfg)
    rho = None if cfg.rho == 1.0 else cfg.rho

    def one(g):
        return solve_eigen_problem(cfg.element, g, cfg.k, cfg.resolved_formulation, rho)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(one, grids))
    else:
        results = [one(g) for g in grids]
    lams = np.array([r.eigenvalues for r in results])
    hs = [g.h for g in grids]
    hxs = [g.hx for g in grids]
    exact = _exact_for(cfg, cfg.k) if rho is None else [None] * cfg.k
    if cfg.format == "json":
        out = {"element": cfg.element, "domain": cfg.domain, "h": hs, "hx": hxs,
               "eigenvalues": lams.tolist(), "dims": [r.meta["dim"] for r in results]}
        known = [j for j, v in enumerate(exact) if v is not None]
        if len(grids) >= 2 and known:
            out["lower_bounds"] = lower_bound_report(lams[:, known], [exact[j] for j in known], hs)
        return _json(out)
    return eigen_table_csv(hs, hxs, lams, exact)


def cmd_verify(cfg: RunConfig) -> dict:
    grid = _single_grid(cfg)
    if grid.m < 2 or grid.n < 2:
        raise PreconditionError("m, n >= 2 required for the RRM basis")
    wilson = wilson_dofmap(grid)
    basis = build_rrm_basis(grid, wilson)
    B = build_constraints_rrm(grid, wilson)
    seq = verify_exact_sequence(basis, grid)
    bubble = max(float(np.abs(bubble_phi0((x0, y0, hx, hy))(*boundary_gauss_points((x0, y0, hx, hy)).T)).max())
                 for x0, y0, hx, hy in zip(*wilson.cell_geometry))
    membership = all(membership_rrm(basis.column(k), grid, B) for k in range(len(basis)))
    dims_ok = len(basis) == grid.m * grid.n + 1 and basis.rank() == len(basis)
    checks = {
        "n_basis": len(basis),
        "expected_dim": grid.m * grid.n + 1,
        "basis_rank": basis.rank(),
        "pattern_dims": dims_ok,
        "membership": membership,
        "constraint_residual": float(np.abs(B @ basis.matrix).max()),
        "bubble_gauss_max": bubble,
        "exact_sequence": seq,
    }
    worst = max(seq["max_violation"], checks["constraint_residual"], bubble)
    checks["max_violation"] = worst
    checks["passed"] = bool(dims_ok and membership and worst < VERIFY_TOL)
    return checks


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--element", choices=KINDS, default="rrm")
    common.add_argument("--domain", default="unit-square",
                        help="unit-square, l-shape or rect:W,H")
    common.add_argument("--m", type=int, default=4, help="cells in x")
    common.add_argument("--n", type=int, default=None, help="cells in y (default: m)")
    common.add_argument("--homogeneous", action="store_true")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--uniform", dest="mode", action="store_const", const="uniform")
    mode.add_argument("--nonuniform", dest="mode", action="store_const", const="nonuniform")
    common.set_defaults(mode="uniform")
    common.add_argument("--levels", help="cell counts per side (uniform) or level count (nonuniform)")
    common.add_argument("--hx", help="comma-separated cell widths for eigen runs")
    common.add_argument("--aspect", type=float, default=None, help="hx / hy")
    common.add_argument("--k", type=int, default=6, help="number of eigenvalues")
    common.add_argument("--rho", type=float, default=1.0, help="constant density")
    common.add_argument("--problem", default="example1")
    common.add_argument("--formulation", choices=FORMULATIONS, default=None)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--dump-matrices", metavar="DIR")
    common.add_argument("--mesh-file", help="grid JSON with xs, ys and optional active mask")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rrmfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dims", parents=[common], help="dimension and rank report")
    sub.add_parser("source", parents=[common], help="convergence study for the sin-sin model problem")
    sub.add_parser("eigen", parents=[common], help="smallest Dirichlet eigenvalues")
    sub.add_parser("verify", parents=[common], help="basis and exact-sequence checks")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__}
    fields["domain"] = parse_domain(ns.domain)
    return RunConfig(**fields)


def run(cfg: RunConfig) -> str:
    if cfg.command == "dims":
        return _json(cmd_dims(cfg))
    if cfg.command == "source":
        return cmd_source(cfg)
    if cfg.command == "eigen":
        return cmd_eigen(cfg)
    if cfg.command == "verify":
        return _json(cmd_verify(cfg))
    raise PreconditionError(f"unknown command {cfg.command!r}")


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
        _emit(cfg, run(cfg))
    except PreconditionError as exc:
        sys.stderr.write(json.dumps({"error": "precondition", "message": str(exc)}) + "\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(json.dumps({"error": "numerical", "message": str(exc)}) + "\n")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
