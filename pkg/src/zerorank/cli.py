"""Command-line interface.

Subcommands:

* ``test``              per-taxon differential-abundance tests on a TSV table
* ``test-longitudinal`` within-subject permutation tests across timepoints
* ``simulate``          Type-I-error / power / efficiency experiments from JSON configs
* ``are``               closed-form asymptotic-relative-efficiency calculators

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 everything
degenerate (no taxon could be scored).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import data_io, twopart_sim
from .are_calc import are_k_sample, are_two_sample, beta_delta_matrix
from .errors import (
    ConfigError,
    DegenerateData,
    MetadataMismatch,
    TableParseError,
    UndefinedARE,
    ZeroRankError,
)
from .k_sample import McVarianceConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DEGENERATE = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zerorank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    test = sub.add_parser("test", help="per-taxon group-difference tests")
    test.add_argument("--table", required=True, help="abundance TSV (taxa x samples)")
    test.add_argument("--meta", required=True, help="metadata TSV (sample, group[, ...])")
    test.add_argument("--method", required=True, choices=data_io.METHODS)
    test.add_argument("--alpha", type=float, default=0.05,
                      help="significance level for the stderr summary")
    test.add_argument("--fdr", choices=("bh", "none"), default="bh")
    test.add_argument("--permutations", type=int, default=0,
                      help="permutation count; 0 = asymptotic p-values")
    test.add_argument("--seed", type=int, default=0)
    test.add_argument("--mc-reps", type=int, default=10_000,
                      help="Monte-Carlo draws for truncated-test variances")
    test.add_argument("--out", required=True)
    test.add_argument("--json", action="store_true", help="write JSON lines instead of TSV")

    longi = sub.add_parser("test-longitudinal",
                           help="within-subject permutation tests across timepoints")
    longi.add_argument("--table", required=True)
    longi.add_argument("--meta", required=True,
                       help="metadata TSV with subject and time columns")
    longi.add_argument("--method", choices=("kw", "tkw"), default="tkw")
    longi.add_argument("--permutations", type=int, default=100_000)
    longi.add_argument("--seed", type=int, default=0)
    longi.add_argument("--out", required=True)

    sim = sub.add_parser("simulate", help="run a simulation experiment")
    sim.add_argument("mode", choices=("type1", "power", "are"))
    sim.add_argument("--config", required=True, help="JSON experiment config")
    sim.add_argument("--out", required=True)

    are = sub.add_parser("are", help="asymptotic relative efficiency calculators")
    are_sub = are.add_subparsers(dest="which", required=True)

    two = are_sub.add_parser("two-sample")
    two.add_argument("--theta1", type=float, required=True)
    two.add_argument("--theta2", type=float, required=True)
    two.add_argument("--delta", type=float, required=True,
                     help="effect size of the continuous parts, in [-1/2, 1/2]")

    k = are_sub.add_parser("k-sample")
    k.add_argument("--thetas", required=True, help="comma-separated non-zero probabilities")
    shapes = k.add_mutually_exclusive_group(required=True)
    shapes.add_argument("--alphas",
                        help="comma-separated Beta(alpha, 1) shapes (closed-form effects)")
    shapes.add_argument("--delta-matrix",
                        help="TSV file with the K x K antisymmetric effect matrix")
    return parser


def _floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise _UsageError(f"bad numeric list {text!r}") from exc


def _cmd_test(args) -> int:
    table = data_io.load_table(args.table)
    meta = data_io.load_metadata(args.meta)
    mc = McVarianceConfig(replicates=args.mc_reps, seed=args.seed)
    rows = data_io.run_differential_abundance(
        table, meta, args.method,
        permutations=args.permutations, seed=args.seed, mc=mc, fdr=args.fdr,
    )
    text = data_io.rows_to_json_lines(rows) if args.json else data_io.rows_to_tsv(rows)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    testable = [row for row in rows if not np.isnan(row.p_value)]
    if args.fdr == "bh":
        hits = sum(1 for row in testable if row.q_value <= args.alpha)
        crit = f"q <= {args.alpha:g}"
    else:
        hits = sum(1 for row in testable if row.p_value <= args.alpha)
        crit = f"p <= {args.alpha:g}"
    print(
        f"{len(rows)} taxa ({len(rows) - len(testable)} degenerate); "
        f"{hits} at {crit}; results in {args.out}",
        file=sys.stderr,
    )
    if not testable:
        print("every taxon was degenerate for this method", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def _cmd_test_longitudinal(args) -> int:
    table = data_io.load_table(args.table)
    meta = data_io.load_metadata(args.meta)
    rows = data_io.run_longitudinal(
        table, meta, args.method, permutations=args.permutations, seed=args.seed
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(data_io.rows_to_tsv(rows))
    testable = sum(1 for row in rows if not np.isnan(row.p_value))
    print(f"{len(rows)} taxa ({len(rows) - testable} degenerate); results in {args.out}",
          file=sys.stderr)
    if testable == 0:
        return EXIT_DEGENERATE
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = twopart_sim.load_config(args.config, args.mode)
    if args.mode == "type1":
        rows = twopart_sim.run_type1(config)
    elif args.mode == "power":
        rows = twopart_sim.run_power(config)
    else:
        rows = twopart_sim.run_are_mode(config)
    twopart_sim.write_results(rows, args.out)
    print(f"{len(rows)} result rows in {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_are(args) -> int:
    if args.which == "two-sample":
        value = are_two_sample(args.theta1, args.theta2, args.delta)
    else:
        thetas = _floats(args.thetas)
        if args.alphas is not None:
            alphas = _floats(args.alphas)
            if len(alphas) != len(thetas):
                raise _UsageError("--alphas and --thetas must have the same length")
            deltas = beta_delta_matrix(alphas)
        else:
            deltas = np.loadtxt(args.delta_matrix, delimiter="\t", ndmin=2)
        value = are_k_sample(thetas, deltas)
    print(f"{value:.10g}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "test":
            return _cmd_test(args)
        if args.command == "test-longitudinal":
            return _cmd_test_longitudinal(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_are(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TableParseError, MetadataMismatch, ConfigError, UndefinedARE) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateData as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, ValueError, ZeroRankError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
