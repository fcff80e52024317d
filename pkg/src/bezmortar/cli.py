"""Command-line interface: mesh generation, solves and convergence studies.

Exit codes: 0 on success, 2 on usage errors, 3 on numerical failures.
The environment variable BEZMORTAR_THREADS caps the BLAS thread count (it
must be honored before numpy is first imported, which is why the heavy
imports live inside main()).
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_env():
    n = os.environ.get("BEZMORTAR_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bezmortar",
        description="Multi-patch isogeometric analysis with dual mortar coupling",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--case", required=True, help="benchmark case id")
        p.add_argument("--p", type=int, default=2, help="spline degree")
        p.add_argument("--ratio", default="2:3", help="master:slave element ratio, e.g. 2:3")
        p.add_argument("--level", type=int, default=0, help="uniform refinement level")
        p.add_argument("--n", type=int, default=1, dest="dual_refine",
                       help="dual space refinement level")
        p.add_argument("--mismatched", action="store_true",
                       help="perturb interface parameterizations")
        p.add_argument("--seed", type=int, default=1234, help="RNG seed")

    mesh = sub.add_parser("mesh", help="generate a mesh file")
    common(mesh)
    mesh.add_argument("--weak", action="store_true",
                      help="embed compiled weakly continuous element operators")
    mesh.add_argument("-o", "--output", required=True)

    solve = sub.add_parser("solve", help="solve one benchmark level")
    common(solve)
    solve.add_argument("--method", default="mortar",
                       choices=["mortar", "weak", "saddle"])
    solve.add_argument("--increments", type=int, default=20)
    solve.add_argument("--tol-factor", type=float, default=1e8)
    solve.add_argument("--pressure", type=float, default=None,
                       help="override the dead-load pressure (largedef cases)")
    solve.add_argument("-o", "--output", required=True,
                       help="output prefix (.coeffs.json and .summary.csv)")

    conv = sub.add_parser("converge", help="run a convergence study")
    common(conv)
    conv.add_argument("--levels", type=int, default=4)
    conv.add_argument("--method", default="mortar",
                      choices=["mortar", "weak", "saddle"])
    conv.add_argument("-o", "--output", required=True)
    return ap


def _ratio(text: str):
    try:
        a, b = text.split(":")
        r = (int(a), int(b))
        if r[0] < 1 or r[1] < 1:
            raise ValueError
        return r
    except ValueError:
        raise SystemExit(2)


def main(argv=None) -> int:
    _apply_thread_env()
    ap = _parser()
    args = ap.parse_args(argv)

    from .benchmarks import (
        BenchmarkCase,
        LARGEDEF_PRESSURE,
        build_case,
        case_error,
        run_convergence,
        run_largedef,
        solve_case,
    )
    from .linsys import NumericalError
    from .mesh_io import convergence_csv, dump_mesh, mesh_document

    try:
        case = BenchmarkCase(
            args.case,
            p=args.p,
            ratio=_ratio(args.ratio),
            matched=not args.mismatched,
            dual_refine=args.dual_refine,
            seed=args.seed,
        )
    except ValueError as exc:
        ap.error(str(exc))  # exits 2

    try:
        if args.command == "mesh":
            model = build_case(case, args.level)
            doc = mesh_document(
                model,
                weak=args.weak,
                meta={"case": case.case, "level": args.level, "seed": args.seed},
            )
            with open(args.output, "w") as fh:
                fh.write(dump_mesh(doc))
            print(f"wrote {args.output}")
            return 0

        if args.command == "solve":
            if case.case.startswith("largedef"):
                if args.method != "weak":
                    ap.error("largedef cases run on the weakly continuous mesh "
                             "(use --method weak)")
                pressure = args.pressure if args.pressure else LARGEDEF_PRESSURE
                field = run_largedef(
                    case.case, args.level, args.increments, args.tol_factor,
                    weak=True, pressure=pressure,
                )
                dofs = field.mesh.ndof * 2
                summary = [("case", case.case), ("method", "weak"),
                           ("level", args.level), ("dofs", dofs),
                           ("pressure", format(pressure, ".17g"))]
            else:
                solved = solve_case(case, args.level, args.method)
                field = solved["field"]
                dofs = solved["dofs"]
                summary = [("case", case.case), ("method", args.method),
                           ("level", args.level), ("dofs", dofs),
                           ("h", format(solved["h"], ".17g"))]
                err = case_error(case, solved)
                summary.append(("l2_error", format(err, ".17g")))
            coeffs = [format(float(v), ".17g") for v in field.values]
            with open(args.output + ".coeffs.json", "w") as fh:
                fh.write("[\n" + ",\n".join(coeffs) + "\n]\n")
            with open(args.output + ".summary.csv", "w") as fh:
                fh.write(",".join(k for k, _ in summary) + "\n")
                fh.write(",".join(str(v) for _, v in summary) + "\n")
            print(f"wrote {args.output}.coeffs.json and {args.output}.summary.csv")
            return 0

        if args.command == "converge":
            report = run_convergence(case, args.levels, args.method)
            with open(args.output, "w") as fh:
                fh.write(convergence_csv(report))
            print(f"wrote {args.output}")
            return 3 if report.failed else 0

    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
