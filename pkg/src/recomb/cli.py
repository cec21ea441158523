"""Benchmark command line.

Examples:
    recomb-bench --algo pbcomb --object atomicfloat --threads 4 \
        --ops 200000 --runs 3 --backend counted-noop --out results/
    recomb-bench --algo pwfcomb --object queue --sweep 1,2,4,8 \
        --backend model --ops 20000 --out results/
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (
    ALGOS,
    BACKENDS,
    OBJECTS,
    BenchConfig,
    UsageError,
    emit_csv,
    run_bench,
    write_csv,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recomb-bench",
        description="Benchmark the combining cores against a lock baseline.",
    )
    parser.add_argument("--algo", choices=ALGOS, default="pbcomb")
    parser.add_argument("--object", choices=OBJECTS, default="atomicfloat")
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--ops", type=int, default=10_000_000, help="total operations per run")
    parser.add_argument("--max-work", type=int, default=512, help="max local-work iterations")
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--backend", choices=BACKENDS, default="counted-noop")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--k", type=float, default=1.0, help="atomicfloat multiplier")
    parser.add_argument("--out", metavar="DIR", default=None, help="write bench_t{n}.csv files here")
    parser.add_argument("--sweep", default=None, help="comma-separated thread counts")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.sweep:
        try:
            thread_counts = [int(x) for x in args.sweep.split(",") if x.strip()]
        except ValueError:
            parser.error(f"bad --sweep value {args.sweep!r}")
    else:
        thread_counts = [args.threads]

    if args.out:
        os.makedirs(args.out, exist_ok=True)

    for n in thread_counts:
        config = BenchConfig(
            algo=args.algo,
            object=args.object,
            threads=n,
            total_ops=args.ops,
            max_local_work=args.max_work,
            runs=args.runs,
            backend=args.backend,
            seed=args.seed,
            k=args.k,
        )
        try:
            report = run_bench(config)
        except UsageError as exc:
            parser.error(str(exc))  # exits with status 2
        if args.out:
            path = os.path.join(args.out, f"bench_t{n}.csv")
            write_csv(report, path)
            summary = report.summary()
            print(
                f"{args.algo}/{args.object} t={n}: "
                f"{summary['throughput']:.0f} ops/s, "
                f"pwb/op={summary['pwb_per_op']:.3f}, "
                f"degree={summary['combining_degree']:.2f} -> {path}"
            )
        else:
            sys.stdout.write(emit_csv(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
