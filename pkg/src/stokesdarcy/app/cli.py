"""Command line entry point.

Exit codes: 0 when every run converged, 2 when a run stopped at ``--max-iter`` (the
truncated solution is still written), 1 on errors.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from ..fem import ParameterWarning
from .output import write_report_csv, write_vtk
from .runner import PRECONDITIONERS, ExperimentConfig, run_algorithm1
from .tables import TABLES

CASE_COMMANDS = ("case1", "case2", "manufactured", "custom")


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stokesdarcy",
                                     description="Interface flux solver for coupled Stokes-Darcy flow.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in CASE_COMMANDS + tuple(TABLES):
        p = sub.add_parser(name)
        p.add_argument("--resolution", type=int, default=None, help="cells per unit length (1/h)")
        p.add_argument("--mu", type=_positive, default=1.0)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--k", type=_positive, default=None, help="permeability K")
        g.add_argument("--kappa", type=_positive, default=None, help="sets K = kappa / mu")
        p.add_argument("--alpha", type=float, default=0.0)
        p.add_argument("--tol", type=_positive, default=1e-6)
        p.add_argument("--max-iter", type=int, default=200)
        p.add_argument("--precond", choices=PRECONDITIONERS, default="spectral")
        p.add_argument("--csv", default=None, help="write results as CSV")
        p.add_argument("--vtk", default=None, help="write fields as legacy VTK (single runs)")
        p.add_argument("--seed", type=int, default=None, help="accepted, unused (deterministic)")
        if name == "custom":
            p.add_argument("--stokes-tags", default="velocity,velocity,interface,stress",
                           help="left,right,bottom,top tags of the Stokes unit square")
            p.add_argument("--darcy-tags", default="pressure,pressure,velocity,interface",
                           help="left,right,bottom,top tags of the Darcy square below it")
            p.add_argument("--darcy-pressure", default="0,0,1",
                           help="c0,cx,cy: pressure c0 + cx*x + cy*y on Darcy pressure sides")
    return parser


def _custom_case(args):
    from ..fem import ProblemData
    from .cases import define_custom

    sides = ("left", "right", "bottom", "top")
    st = dict(zip(sides, args.stokes_tags.split(",")))
    dt = dict(zip(sides, args.darcy_tags.split(",")))
    c0, cx, cy = (float(v) for v in args.darcy_pressure.split(","))

    def g_p(x, y):
        return c0 + cx * x + cy * y

    return define_custom(st, dt, ProblemData(g_p=g_p))


def _single(args) -> int:
    K = args.k if args.k is not None else (args.kappa / args.mu if args.kappa is not None else 1.0)
    case_name = "case1" if args.command == "custom" else args.command
    default_res = 7 if args.command == "manufactured" else 8
    cfg = ExperimentConfig(case=case_name, resolution=args.resolution or default_res, mu=args.mu,
                           K=K, alpha=args.alpha, tol=args.tol, max_iter=args.max_iter,
                           precond=args.precond, csv=args.csv, vtk=args.vtk)
    case = _custom_case(args) if args.command == "custom" else None
    report, sol, _, disc = run_algorithm1(cfg, case=case)
    print(report.summary())
    if args.csv:
        write_report_csv(args.csv, report)
    if args.vtk:
        write_vtk(args.vtk, disc, sol)
    return 0 if report.converged else 2


def _table(args) -> int:
    kw = dict(tol=args.tol, max_iter=args.max_iter,
              progress=lambda e: print(f"  {e.config} -> {e.cell()}", file=sys.stderr, flush=True))
    if args.command == "table2":
        kw["precond"] = args.precond
        if args.resolution:
            kw["resolution"] = args.resolution
    elif args.command == "table1":
        kw["precond"] = args.precond
        if args.resolution:
            kw["resolutions"] = (8, 16, 32, 64, args.resolution) if args.resolution > 64 else (args.resolution,)
    elif args.resolution:
        kw["resolutions"] = (args.resolution,)
    result = TABLES[args.command](**kw)
    print(result.text)
    if args.csv:
        result.to_csv(args.csv)
    if any(e.error for e in result.entries):
        return 1
    return 0 if all(e.converged for e in result.entries) else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", ParameterWarning)
            if args.command in TABLES:
                return _table(args)
            return _single(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
