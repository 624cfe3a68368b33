"""Command line front end: `afem run` and `afem diag`."""

from __future__ import annotations

import argparse
import sys

from .errors import InputError, NumericalError

_DOMAIN_NAMES = {"circle": "unit_circle", "lshape": "l_shape"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afem",
        description="Adaptive P1 solver for the integral fractional "
        "Laplacian on polygonal domains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the adaptive loop")
    p_run.add_argument("--domain", required=True,
                       choices=sorted(_DOMAIN_NAMES))
    p_run.add_argument("--s", type=float, required=True)
    p_run.add_argument("--theta", type=float, default=0.3)
    p_run.add_argument("--strategy", choices=("adaptive", "uniform"),
                       default="adaptive")
    p_run.add_argument("--max-dofs", type=int, default=3000)
    p_run.add_argument("--quad-order", type=int, default=7)
    p_run.add_argument("--solver-tol", type=float, default=None)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--dump-mesh", default=None, metavar="DIR")
    p_run.add_argument("--rhs", default=None,
                       metavar="constant:<c>|disc-exact")

    p_diag = sub.add_parser("diag", help="norm-equivalence diagnostics")
    p_diag.add_argument("--domain", required=True,
                        choices=sorted(_DOMAIN_NAMES))
    p_diag.add_argument("--s", type=float, required=True)
    p_diag.add_argument("--samples", type=int, default=8)
    p_diag.add_argument("--levels", type=int, default=3,
                        help="number of uniform mesh levels to report")
    p_diag.add_argument("--quad-order", type=int, default=7)
    p_diag.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    from .harness import AfemConfig, run, write_records
    from .mesh import DomainSpec
    from .solver import DEFAULT_TOL

    cfg = AfemConfig(
        domain=DomainSpec(_DOMAIN_NAMES[args.domain]),
        s=args.s,
        theta=args.theta,
        strategy=args.strategy,
        max_dofs=args.max_dofs,
        quad_order=args.quad_order,
        solver_tol=DEFAULT_TOL if args.solver_tol is None
        else args.solver_tol,
        rhs="auto" if args.rhs is None else args.rhs,
    )
    result = run(cfg, collect=False, dump_dir=args.dump_mesh)
    write_records(result.records, args.out)
    for r in result.records:
        err = "-" if r.error is None else "%.6e" % r.error
        print("level %3d  dofs %6d  estimator %.6e  error %s"
              % (r.level, r.dofs, r.estimator, err))
    return 0


def _cmd_diag(args) -> int:
    from .diagnostics import equivalence_report, write_reports
    from .mesh import DomainSpec, build_initial_mesh, uniform_refine

    if args.levels < 1:
        raise InputError("--levels must be at least 1")
    mesh = build_initial_mesh(DomainSpec(_DOMAIN_NAMES[args.domain]))
    reports = []
    for level in range(args.levels):
        rep = equivalence_report(mesh, args.s, args.samples,
                                 quad_order=args.quad_order)
        reports.append((level, rep))
        print("level %d  r in [%.4g, %.4g]  q in [%.4g, %.4g]"
              % (level, rep.r_min, rep.r_max, rep.q_min, rep.q_max))
        if level + 1 < args.levels:
            mesh, _ = uniform_refine(mesh)
    write_reports(reports, args.out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_diag(args)
    except InputError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
