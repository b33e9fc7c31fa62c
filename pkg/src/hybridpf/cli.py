"""Command-line front end: solve, verify, bench, validate.

Exit codes: 0 success, 1 input error (parse/schema/topology), 2 solve-stage
failure (non-convergence, singular Jacobian, DC infeasibility, or a verify
discrepancy above the threshold).  Log verbosity comes from the
``HYBRIDPF_LOG`` environment variable (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import caseio
from .errors import HybridPfError, InfeasibleError, SolverError
from .solver import SolverOptions, solve
from .verify import FixedPointError, fixed_point_solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridpf",
        description="Unified Newton-Raphson power flow for hybrid AC/DC networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve a case file")
    ps.add_argument("case")
    ps.add_argument("--tol", type=float, default=1e-8)
    ps.add_argument("--max-iter", type=int, default=50)
    group = ps.add_mutually_exclusive_group()
    group.add_argument("--flat-start", action="store_true",
                       help="initialise at 1 p.u. (the default)")
    group.add_argument("--init", metavar="SOLUTION_FILE",
                       help="initialise from a previously saved solution")
    ps.add_argument("--out", metavar="PATH", help="write the solution file here")
    ps.add_argument("--trace", action="store_true", help="print one line per iteration")
    ps.add_argument("--csv-voltages", metavar="PATH")
    ps.add_argument("--csv-history", metavar="PATH")

    pv = sub.add_parser("verify", help="cross-check NR against the fixed-point backend")
    pv.add_argument("case")
    pv.add_argument("--threshold", type=float, default=1e-8)
    pv.add_argument("--tol", type=float, default=1e-10,
                    help="convergence tolerance used by both methods")
    pv.add_argument("--max-sweeps", type=int, default=200000)

    pb = sub.add_parser("bench", help="time the NR stages over repeated runs")
    pb.add_argument("cases", nargs="+")
    pb.add_argument("--repeat", type=int, default=1)
    pb.add_argument("--tol", type=float, default=1e-8)
    pb.add_argument("--out", metavar="CSV", help="write timing rows here (default stdout)")

    pc = sub.add_parser("validate", help="schema and topology checks only")
    pc.add_argument("case")
    return parser


def cmd_solve(args) -> int:
    try:
        case = caseio.load_case(args.case)
        init = None
        if args.init:
            init = caseio.state_from_solution(caseio.load_solution(args.init), case)
    except HybridPfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    options = SolverOptions(tolerance=args.tol, max_iterations=args.max_iter, init=init)
    on_iteration = None
    if args.trace:
        on_iteration = lambda it, mis, worst: print(
            f"iter={it} max_mismatch={mis:.6e} worst={worst}"
        )
    try:
        solution = solve(case, options, on_iteration=on_iteration)
    except (SolverError, InfeasibleError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE

    status = "converged" if solution.converged else "NOT CONVERGED"
    print(f"case {case.name}: {status} in {solution.iterations} iterations "
          f"({solution.n_states} states, final mismatch {solution.final_mismatch:.3e})")
    for bus, inj in sorted(solution.slack_injections.items()):
        total = complex(np.sum(inj))
        print(f"slack {bus}: P = {total.real:+.6f} p.u., Q = {total.imag:+.6f} p.u.")
    for cid in sorted(solution.losses):
        lb = solution.losses[cid]
        cp = solution.converter_power[cid]
        print(f"converter {cid}: P_ac = {cp['p_ac']:+.6f}, P_dc = {cp['p_dc']:+.6f}, "
              f"loss = {lb.s_loss.real:.6f}, filter = {lb.p_filter:.6f}")
    if not solution.converged:
        print("residual history: "
              + " ".join(f"{r:.3e}" for r in solution.residual_history))
    print(f"# timings_s total={solution.timings.total_s:.6f}")

    if args.out:
        caseio.save_solution(solution, args.out, case)
    if args.csv_voltages:
        caseio.export_voltages_csv(solution, args.csv_voltages)
    if args.csv_history:
        caseio.export_history_csv(solution, args.csv_history)
    return EXIT_OK if solution.converged else EXIT_SOLVE


def cmd_verify(args) -> int:
    try:
        case = caseio.load_case(args.case)
    except HybridPfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        solution = solve(case, SolverOptions(tolerance=args.tol))
        if not solution.converged:
            print("NR did not converge", file=sys.stderr)
            return EXIT_SOLVE
        reference = fixed_point_solve(case, tol=args.tol, max_sweeps=args.max_sweeps)
    except (SolverError, InfeasibleError, FixedPointError) as exc:
        print(f"verify failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE

    x = solution.x_final
    d_ac = (np.max(np.abs(x.full_ac() - reference.full_ac()))
            if x.full_ac().size else 0.0)
    d_dc = np.max(np.abs(x.e_dc - reference.e_dc)) if x.e_dc.size else 0.0
    disc = float(max(d_ac, d_dc))
    print(f"max voltage discrepancy NR vs fixed-point: {disc:.3e} p.u. "
          f"(threshold {args.threshold:.3e})")
    return EXIT_OK if disc <= args.threshold else EXIT_SOLVE


def cmd_bench(args) -> int:
    rows = []
    for case_path in args.cases:
        try:
            case = caseio.load_case(case_path)
        except HybridPfError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        for _ in range(args.repeat):
            try:
                solution = solve(case, SolverOptions(tolerance=args.tol))
            except (SolverError, InfeasibleError) as exc:
                print(f"solve failed: {exc}", file=sys.stderr)
                return EXIT_SOLVE
            t = solution.timings
            rows.append([case.name, solution.n_states, solution.iterations,
                         f"{t.residual_s:.6f}", f"{t.jacobian_s:.6f}",
                         f"{t.linear_s:.6f}", f"{t.total_s:.6f}",
                         int(solution.converged)])
    header = ["case", "n_states", "iterations", "t_residual_s", "t_jacobian_s",
              "t_linsolve_s", "t_total_s", "converged"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        case = caseio.load_case(args.case)
    except HybridPfError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"case {case.name}: schema and topology OK "
          f"({len(case.ac_buses)} AC buses, {len(case.dc_buses)} DC buses, "
          f"{len(case.converters)} converters)")
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("HYBRIDPF_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    handlers = {
        "solve": cmd_solve,
        "verify": cmd_verify,
        "bench": cmd_bench,
        "validate": cmd_validate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
