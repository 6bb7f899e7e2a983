"""Command-line interface.

Subcommands: ``run`` (scenario), ``compare`` (optimizer sweep), ``optimize``
(single plan), ``segment`` (stream files -> archive), ``query`` (store WAL).

Canonical output goes to stdout and is byte-reproducible for a fixed seed;
wall-clock timings are printed to stderr, clearly labeled. The default seed
can be overridden with the CITYBUS_SEED environment variable; an explicit
``--seed`` flag wins over the environment.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import replace

from citybus.harness import (
    SEED_ENV_VAR,
    CompareRow,
    DEFAULT_CONSUMER_SWEEP,
    MetricsReport,
    compare_optimizers,
    emit_csv,
    load_scenario,
    optimize_once,
    run_scenario,
)
from citybus.model import SdmKind, TimeSpan, parse_timestamp, serialize_entity
from citybus.optimizer import Constraints, check_constraints
from citybus.segments import SegmentArchive, ingest_and_segment, read_stream_file
from citybus.store import FusionStore


def _resolve_seed(flag_value: int | None, default: int) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env:
        return int(env)
    return default


def _parse_int_list(text: str) -> list[int]:
    """Accepts "1,2,3" and ranges like "1-10"."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def _print_report(report: MetricsReport) -> None:
    for name in MetricsReport.COLUMNS:
        print(f"{name}={getattr(report, name)}")


def _print_rows(rows: list[CompareRow]) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(CompareRow.COLUMNS)
    for row in rows:
        writer.writerow(row.to_row())


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.config)
    cfg = replace(cfg, seed=_resolve_seed(args.seed, cfg.seed))
    if args.store:
        cfg = replace(cfg, store_path=args.store)
    started = time.perf_counter()
    report = run_scenario(cfg)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    _print_report(report)
    if args.csv:
        emit_csv(report, args.csv)
    print(
        f"[wall-clock] scenario completed in {elapsed_ms:.1f} ms "
        f"(not part of canonical output)",
        file=sys.stderr,
    )
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    constraints = Constraints(l_max_ms=args.l_max)
    started = time.perf_counter()
    rows = compare_optimizers(
        brokers_range=_parse_int_list(args.brokers),
        replication=args.replication,
        constraints=constraints,
        consumer_sweep=tuple(_parse_int_list(args.consumers)),
        seeds=args.seeds,
        seed_base=_resolve_seed(args.seed, 0),
    )
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    _print_rows(rows)
    if args.csv:
        emit_csv(rows, args.csv)
    print(
        f"[wall-clock] sweep completed in {elapsed_ms:.1f} ms "
        f"(not part of canonical output)",
        file=sys.stderr,
    )
    return 0


def _cmd_optimize(args: argparse.Namespace) -> int:
    constraints = Constraints(l_max_ms=args.l_max)
    plan = optimize_once(
        algorithm=args.algorithm,
        brokers=args.brokers,
        replication=args.replication,
        constraints=constraints,
        seed=_resolve_seed(args.seed, 0),
        partitions_required=args.partitions,
    )
    violations = check_constraints(plan, constraints)
    print(f"algorithm={plan.algorithm}")
    print(f"partitions={plan.partitions}")
    print(f"brokers={plan.brokers}")
    print(f"replication={plan.replication}")
    print(f"predicted_latency_ms={plan.predicted_latency_ms}")
    print(f"assignment={','.join(str(b) for b in plan.assignment)}")
    print(f"violations={len(violations)}")
    for violation in violations:
        print(f"violation: {violation}")
    return 0


def _cmd_segment(args: argparse.Namespace) -> int:
    source_dir = args.source_dir
    out_dir = args.out or os.path.join(source_dir, "archive")
    archive = SegmentArchive(out_dir)
    stream_files = sorted(
        f for f in os.listdir(source_dir) if f.endswith(".stream")
    )
    if not stream_files:
        print(f"no .stream files in {source_dir}", file=sys.stderr)
        return 2
    for name in stream_files:
        source_id = name[: -len(".stream")]
        chunks = read_stream_file(os.path.join(source_dir, name))
        segments = ingest_and_segment(source_id, chunks, args.interval)
        archive.archive_segments(segments)
        total = sum(len(s.data) for s in segments)
        print(f"{source_id}: {len(segments)} segments, {total} bytes")
    print(f"archive={out_dir}")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    store = FusionStore.recover(args.store)
    span = TimeSpan(parse_timestamp(args.from_ts), parse_timestamp(args.to_ts))
    kinds = [SdmKind(k) for k in args.kind] if args.kind else None
    for entity in store.query(span, source=args.source, kinds=kinds):
        sys.stdout.write(serialize_entity(entity).decode("utf-8"))
        sys.stdout.write("\n")
    store.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citybus",
        description="Smart-city data platform: pipeline scenarios, "
        "partition optimization, AV segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a pipeline scenario from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--csv", default=None, help="also write the report as CSV")
    p_run.add_argument("--store", default=None, help="write the store WAL here")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="benchmark vs optimizer sweep")
    p_cmp.add_argument("--brokers", default="1-10", help='e.g. "3" or "1-10" or "1,3,5"')
    p_cmp.add_argument("--replication", type=int, default=2)
    p_cmp.add_argument(
        "--consumers",
        default=",".join(str(c) for c in DEFAULT_CONSUMER_SWEEP),
        help="consumer counts scaling the latency load coefficient",
    )
    p_cmp.add_argument("--seeds", type=int, default=100)
    p_cmp.add_argument("--l-max", type=float, default=5.0)
    p_cmp.add_argument("--seed", type=int, default=None, help="base seed")
    p_cmp.add_argument("--csv", default=None)
    p_cmp.set_defaults(func=_cmd_compare)

    p_opt = sub.add_parser("optimize", help="compute one partition plan")
    p_opt.add_argument(
        "--algorithm", required=True, choices=["ms-cnfl", "bro-min", "bro-max"]
    )
    p_opt.add_argument("--brokers", type=int, required=True)
    p_opt.add_argument("--replication", type=int, required=True)
    p_opt.add_argument("--l-max", type=float, default=5.0)
    p_opt.add_argument("--seed", type=int, default=None)
    p_opt.add_argument(
        "--partitions",
        type=int,
        default=None,
        help="required partition count for bro-min (default: bro-max output)",
    )
    p_opt.set_defaults(func=_cmd_optimize)

    p_seg = sub.add_parser("segment", help="segment .stream files into an archive")
    p_seg.add_argument("source_dir")
    p_seg.add_argument("--interval", type=float, default=10.0, help="seconds")
    p_seg.add_argument("--out", default=None, help="archive root (default: <dir>/archive)")
    p_seg.set_defaults(func=_cmd_segment)

    p_query = sub.add_parser("query", help="query an archived store WAL")
    p_query.add_argument("store")
    p_query.add_argument("--from", dest="from_ts", required=True, help="ISO-8601 UTC")
    p_query.add_argument("--to", dest="to_ts", required=True, help="ISO-8601 UTC")
    p_query.add_argument("--source", default=None)
    p_query.add_argument(
        "--kind",
        action="append",
        choices=[k.value for k in SdmKind],
        help="repeatable kind filter",
    )
    p_query.set_defaults(func=_cmd_query)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, LookupError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
