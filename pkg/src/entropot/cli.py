"""Batch command line: benchmark sweeps, single solves, and the exact oracle.

Exit codes: 0 success, 2 invariant violations detected, 3 I/O or format
error, 4 exact-solver failure.
"""

import argparse
import json
import sys

import numpy as np

from .bench import ALGORITHMS, DATASETS, ExperimentSpec, run_experiment
from .core import Problem
from .exceptions import IdxFormatError, OracleError
from .greenkhorn import greenkhorn_solve
from .oracle import exact_ot
from .sinkhorn import SinkhornConfig, sinkhorn_solve

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_IO = 3
EXIT_ORACLE = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="entropot",
        description="Entropic optimal transport benchmarks and solvers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run an epsilon sweep and emit CSV/SVG")
    bench.add_argument("--dataset", choices=DATASETS, required=True)
    bench.add_argument("--algo", choices=ALGORITHMS, required=True)
    bench.add_argument("--eps", required=True,
                       help="comma list of accuracies relative to max|C|, e.g. 0.5,0.1")
    bench.add_argument("--trials", type=int, default=10)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--side", type=int, default=16,
                       help="image side length; the instance size is side^2")
    bench.add_argument("--out", required=True, help="output directory")
    bench.add_argument("--mnist-path", default=None, help="IDX3 image file for --dataset mnist")
    bench.add_argument("--foreground-fraction", type=float, default=0.2,
                       help="foreground pixel fraction for the synthetic dataset")
    bench.add_argument("--no-invariants", action="store_true",
                       help="skip the per-iteration invariant audit")
    bench.add_argument("--no-oracle", action="store_true",
                       help="skip the exact optimum (required above n = 512)")

    solve = sub.add_parser("solve", help="solve one instance from a JSON problem file")
    solve.add_argument("problem", help='JSON file {"a": [...], "b": [...], "C": [[...]], '
                                       '"gamma": x, "delta": y}')
    solve.add_argument("--algo", choices=("sinkhorn", "greenkhorn"), default="sinkhorn")
    solve.add_argument("--out", default=None, help="output JSON path (default: stdout)")

    oracle = sub.add_parser("oracle", help="exact optimum for a JSON problem file")
    oracle.add_argument("problem", help="JSON problem file (gamma/delta ignored)")
    oracle.add_argument("--out", default=None, help="output JSON path (default: stdout)")

    return parser


def _load_problem_file(path):
    with open(path) as handle:
        payload = json.load(handle)
    for key in ("a", "b", "C"):
        if key not in payload:
            raise ValueError(f"problem file is missing {key!r}")
    return payload


def _emit(payload, out_path):
    text = json.dumps(payload, indent=2)
    if out_path is None:
        print(text)
    else:
        with open(out_path, "w") as handle:
            handle.write(text + "\n")


def _cmd_bench(args):
    spec = ExperimentSpec(
        dataset=args.dataset,
        algorithm=args.algo,
        epsilons=tuple(float(tok) for tok in args.eps.split(",") if tok),
        trials=args.trials,
        seed=args.seed,
        side=args.side,
        foreground_fraction=args.foreground_fraction,
    )
    summary = run_experiment(
        spec,
        args.out,
        mnist_path=args.mnist_path,
        check_invariants=not args.no_invariants,
        use_oracle=not args.no_oracle,
    )
    print(f"wrote {summary.summary_csv} ({len(summary.reports)} rows)")
    if summary.invariants_checked and summary.total_violations:
        print(f"invariant violations: {summary.total_violations} (see {summary.report_path})",
              file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _cmd_solve(args):
    payload = _load_problem_file(args.problem)
    problem = Problem(payload["a"], payload["b"], payload["C"], payload.get("gamma", 1.0))
    config = SinkhornConfig(delta=payload.get("delta", 1e-9))
    solve = greenkhorn_solve if args.algo == "greenkhorn" else sinkhorn_solve
    result = solve(problem, config)
    row = float(np.abs(result.plan.row_sums - problem.a).sum())
    col = float(np.abs(result.plan.col_sums - problem.b).sum())
    _emit(
        {
            "plan": result.plan.P.tolist(),
            "iterations": result.iterations,
            "converged": result.converged,
            "row_violation": row,
            "col_violation": col,
        },
        args.out,
    )
    return EXIT_OK


def _cmd_oracle(args):
    payload = _load_problem_file(args.problem)
    plan, cost = exact_ot(payload["a"], payload["b"], payload["C"])
    _emit({"plan": plan.P.tolist(), "cost": cost}, args.out)
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"bench": _cmd_bench, "solve": _cmd_solve, "oracle": _cmd_oracle}
    try:
        return handlers[args.command](args)
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (OSError, json.JSONDecodeError, IdxFormatError) as exc:
        print(f"i/o or format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
