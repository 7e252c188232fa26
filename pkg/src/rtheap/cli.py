"""rtheap-bench: run a workload under either collector and write CSV metrics."""

from __future__ import annotations

import argparse
import sys

from rtheap.bench import (
    RunConfig,
    ScenarioError,
    emit_csv,
    format_summary,
    run_heap_sweep,
    run_scenario,
    summarize,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtheap-bench", description=__doc__)
    p.add_argument("--collector", choices=("chunked", "baseline"), default="chunked")
    p.add_argument("--workload", default="figure2",
                   help="workload file, or a built-in name (figure2, mixed)")
    p.add_argument("--heap-sweep", action="store_true",
                   help="run the collection-cost-vs-heap-size scenario instead of a workload")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--csv", help="write latency records here")
    p.add_argument("--heap-object-chunks", type=int, default=4096)
    p.add_argument("--heap-array-chunks", type=int, default=147456)
    p.add_argument("--heap-stack-chunks", type=int, default=256)
    p.add_argument("--baseline-heap-bytes", type=int, default=None,
                   help="baseline heap size (default: payload bytes of the chunked regions)")
    p.add_argument("--mark-budget", type=int, default=64)
    p.add_argument("--sweep-budget", type=int, default=256)
    p.add_argument("--priorities", type=int, default=8)
    p.add_argument("--suppress-wallclock", action="store_true",
                   help="write 0 in wall_nanos so runs are byte-identical")
    p.add_argument("--quiet", action="store_true", help="skip the summary table")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 1 << 64:
        print("rtheap-bench: --seed must be a u64", file=sys.stderr)
        return 2
    if args.heap_sweep:
        records = run_heap_sweep()
    else:
        config = RunConfig(
            collector=args.collector, workload=args.workload, seed=args.seed, csv=args.csv,
            object_chunks=args.heap_object_chunks, array_chunks=args.heap_array_chunks,
            stack_chunks=args.heap_stack_chunks, mark_budget=args.mark_budget,
            sweep_budget=args.sweep_budget, priorities=args.priorities,
            suppress_wallclock=args.suppress_wallclock,
            baseline_heap_bytes=args.baseline_heap_bytes,
        )
        try:
            records = run_scenario(config)
        except (ScenarioError, FileNotFoundError, ValueError) as e:
            print(f"rtheap-bench: {e}", file=sys.stderr)
            return 1
    if args.csv:
        emit_csv(records, args.csv, suppress_wallclock=args.suppress_wallclock)
    if not args.quiet:
        print(format_summary(summarize(records)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
