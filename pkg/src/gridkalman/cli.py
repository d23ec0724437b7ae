"""Command line front end.

Subcommands mirror the testbench stages: ``gen`` (scenario config to
stimuli file), ``run-gm`` / ``run-mut`` (stimuli to responses),
``compare`` (stimuli + two response files to a quantile report),
``sweep`` (size ladder to a cost report), ``table-a`` (the polar-to-
rectangular uncertainty table) and ``counts`` (closed-form operation
counts).

Exit codes: 0 on success, 2 for validation problems (bad config, bad
file, bad flags), 3 when a numerical hypothesis fails (divergence,
conditioning).

Outputs are byte-reproducible for fixed inputs: BLAS/OpenMP pools are
pinned to one thread below, before numpy ever loads, so linear algebra
cannot re-associate reductions differently between machines with
different core counts.  The pinning must precede the numpy import,
which is why this module does it at the very top and why the package
``__init__`` stays import-light.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ[_var] = "1"

import argparse
import sys

from .errors import ConditioningError, ConvergenceError, ValidationError
from .noise import uncertainty_table
from .opcounts import DKF, SDKF, closed_form_op_count
from .testbench import (
    compare_responses,
    generate_stimuli,
    load_scenario,
    read_responses,
    read_stimuli,
    run_golden,
    run_mut,
    scalability_sweep,
    write_report,
    write_responses,
    write_stimuli,
    write_sweep,
)


def _parse_sizes(text: str):
    """Comma list with optional ``start:stop:step`` ranges (inclusive)."""
    sizes = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            parts = token.split(":")
            if len(parts) not in (2, 3):
                raise ValidationError(f"bad size range {token!r}")
            try:
                start, stop = int(parts[0]), int(parts[1])
                step = int(parts[2]) if len(parts) == 3 else 1
            except ValueError:
                raise ValidationError(f"bad size range {token!r}") from None
            if step < 1:
                raise ValidationError(f"size range step must be positive: {token!r}")
            sizes.extend(range(start, stop + 1, step))
        else:
            try:
                sizes.append(int(token))
            except ValueError:
                raise ValidationError(f"bad size {token!r}") from None
    if not sizes:
        raise ValidationError("no sizes given")
    return sizes


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        print(text, end="")


def _cmd_gen(args) -> int:
    config = load_scenario(args.config)
    stimuli = generate_stimuli(config, seed=args.seed)
    write_stimuli(stimuli, args.out)
    print(f"wrote {args.out}: S={stimuli.n_states} D={stimuli.n_measurements} "
          f"K={stimuli.horizon}")
    return 0


def _cmd_run_gm(args) -> int:
    responses = run_golden(read_stimuli(args.stimuli))
    write_responses(responses, args.out)
    print(f"wrote {args.out}: {responses.producer} K={responses.horizon}")
    return 0


def _cmd_run_mut(args) -> int:
    responses = run_mut(read_stimuli(args.stimuli),
                        parallelism=args.parallelism,
                        precision=args.precision)
    write_responses(responses, args.out)
    print(f"wrote {args.out}: {responses.producer} K={responses.horizon} "
          f"P={args.parallelism} binary{args.precision}")
    return 0


def _cmd_compare(args) -> int:
    stimuli = read_stimuli(args.stimuli)
    report = compare_responses(stimuli, read_responses(args.gm),
                               read_responses(args.mut))
    write_report(report, args.out)
    print(f"wrote {args.out}: {len(report.rows)} quantile rows over "
          f"{report.n_nodes} nodes")
    return 0


def _cmd_sweep(args) -> int:
    report = scalability_sweep(_parse_sizes(args.sizes),
                               parallelism=args.parallelism,
                               seed=args.seed,
                               measure_wall=args.measure_wall)
    write_sweep(report, args.out)
    print(f"wrote {args.out}: {len(report.rows)} sizes")
    return 0


def _cmd_table_a(args) -> int:
    lines = [f"# magnitude={args.magnitude!r} e_rho={args.e_rho!r} "
             f"e_phi={args.e_phi!r}",
             "delta_rad,sigma_re,sigma_im"]
    for delta, s_re, s_im in uncertainty_table(
            magnitude=args.magnitude, e_rho=args.e_rho, e_phi=args.e_phi):
        lines.append(f"{delta!r},{s_re:.3e},{s_im:.3e}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_counts(args) -> int:
    algorithms = {"dkf": (DKF,), "sdkf": (SDKF,), "both": (DKF, SDKF)}[args.algorithm]
    states = _parse_sizes(args.states)
    measurements = _parse_sizes(args.measurements) if args.measurements else states
    lines = ["algorithm,states,measurements,add_sub,mul_div,"
             "inversion_add,inversion_mul"]
    for algorithm in algorithms:
        for S in states:
            for D in measurements:
                ops = closed_form_op_count(algorithm, S, D)
                lines.append(f"{algorithm},{S},{D},{ops.add_sub},{ops.mul_div},"
                             f"{ops.inversion_add},{ops.inversion_mul}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridkalman",
        description="Grid state estimation testbench: stimuli generation, "
                    "golden/blocked filter runs, reports and cost sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a stimuli file from a scenario")
    gen.add_argument("--config", required=True, help="scenario JSON file")
    gen.add_argument("--seed", type=int, default=None,
                     help="override the scenario noise seed")
    gen.add_argument("--out", required=True, help="stimuli file to write")
    gen.set_defaults(func=_cmd_gen)

    gm = sub.add_parser("run-gm", help="run the binary64 golden model")
    gm.add_argument("stimuli", help="stimuli file")
    gm.add_argument("--out", required=True, help="responses file to write")
    gm.set_defaults(func=_cmd_run_gm)

    mut = sub.add_parser("run-mut", help="run the blocked sequential filter")
    mut.add_argument("stimuli", help="stimuli file")
    mut.add_argument("--parallelism", type=int, default=4,
                     help="block size P (default 4)")
    mut.add_argument("--precision", type=int, choices=(32, 64), default=32,
                     help="arithmetic precision (default 32)")
    mut.add_argument("--out", required=True, help="responses file to write")
    mut.set_defaults(func=_cmd_run_mut)

    cmp_ = sub.add_parser("compare", help="quantile report of errors and mismatch")
    cmp_.add_argument("stimuli", help="stimuli file (carries the truth)")
    cmp_.add_argument("gm", help="golden responses file")
    cmp_.add_argument("mut", help="candidate responses file")
    cmp_.add_argument("--out", required=True, help="report file to write")
    cmp_.set_defaults(func=_cmd_compare)

    sweep = sub.add_parser("sweep", help="cycle-cost ladder with fits")
    sweep.add_argument("--sizes", required=True,
                       help="comma list, ranges allowed (e.g. 16:256:16)")
    sweep.add_argument("--parallelism", type=int, default=4)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--measure-wall", action="store_true",
                       help="attach wall-clock medians (not reproducible)")
    sweep.add_argument("--out", required=True, help="sweep file to write")
    sweep.set_defaults(func=_cmd_sweep)

    table = sub.add_parser("table-a", help="polar-to-rectangular deviation table")
    table.add_argument("--magnitude", type=float, default=1.0)
    table.add_argument("--e-rho", type=float, default=1e-3)
    table.add_argument("--e-phi", type=float, default=1.5e-3)
    table.add_argument("--out", default=None, help="write instead of printing")
    table.set_defaults(func=_cmd_table_a)

    counts = sub.add_parser("counts", help="closed-form operation counts")
    counts.add_argument("--algorithm", choices=("dkf", "sdkf", "both"),
                        default="both")
    counts.add_argument("--states", default="1,2,4,8,16")
    counts.add_argument("--measurements", default=None,
                        help="defaults to the state sizes")
    counts.add_argument("--out", default=None, help="write instead of printing")
    counts.set_defaults(func=_cmd_counts)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConditioningError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
