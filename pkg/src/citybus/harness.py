"""Scenario runner and experiment harness.

Wires synthetic analytics sources -> per-node edge brokers -> the
edge/fog/cloud relay chain -> the partitioned bus -> the fusion store, drives
everything on one simulated clock, and reports the run's metrics. Also runs
the optimizer comparison sweep and writes plot-ready CSV.

Determinism contract: a (config, seed) pair fully determines every canonical
output byte. Canonical outputs never contain wall-clock readings; the CLI
prints wall-clock timings separately on stderr, clearly labeled.

The reported ``response_time_ms`` is a deterministic desk-scale stand-in for
query latency: ``0.2 + 0.0005 * rows_examined`` milliseconds averaged over a
standard query batch derived from the stored time range.
"""

from __future__ import annotations

import csv
import heapq
import json
import os
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Sequence

from citybus.bus import Cluster, ClusterConfig, PartitionUnavailable
from citybus.model import (
    RawInferenceResult,
    SdmEntity,
    TimeSpan,
    Timestamp,
    deserialize_entity,
    deserialize_raw,
    serialize_entity,
    serialize_raw,
)
from citybus.optimizer import (
    Constraints,
    Infeasible,
    PartitionPlan,
    check_constraints,
    bro_max,
    bro_min,
    ms_cnfl,
)
from citybus.pubsub import EdgeBroker, TopicFilter, TopicName
from citybus.relay import TOPIC_BY_KIND, Layer, RelayNode
from citybus.rng import SplitMix64
from citybus.segments import AVSource, SegmentArchive, SourceKind, ingest_and_segment, synthetic_stream
from citybus.store import FusionStore, IngestOutcome

SEED_ENV_VAR = "CITYBUS_SEED"

DEFAULT_CONSUMER_SWEEP = (1, 2, 4, 8)

_RETRY_BACKOFF_MS = 5.0
_QUIESCE_TIMEOUT_MS = 10_000.0
_CONSUME_BATCH = 64

_QUERY_BASE_MS = 0.2
_QUERY_PER_ROW_MS = 0.0005


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field_name = field_name


class IoFailure(RuntimeError):
    """Output file could not be written."""


@dataclass(frozen=True)
class FailureEvent:
    at_ms: float
    broker: int
    event: str  # "fail" | "recover"

    def __post_init__(self):
        if self.event not in ("fail", "recover"):
            raise ConfigError("failure_schedule", f"unknown event {self.event!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    edge_nodes: int = 1
    fog_nodes: int = 1
    sources: tuple[AVSource, ...] = ()
    entities_per_source: int = 0
    inter_arrival_ms: float = 10.0
    duplicate_rate: float = 0.0
    topic_partitions: int = 4
    cluster: ClusterConfig = field(default_factory=lambda: ClusterConfig(3, 2))
    constraints: Constraints = field(default_factory=Constraints)
    segment_interval_s: float = 10.0
    av_stream_seconds: float = 0.0
    failure_schedule: tuple[FailureEvent, ...] = ()
    store_path: str | None = None
    archive_dir: str | None = None

    def __post_init__(self):
        if self.edge_nodes < 0 or self.fog_nodes < 0:
            raise ConfigError("edge_nodes", "node counts must be >= 0")
        if self.entities_per_source < 0:
            raise ConfigError("entities_per_source", "must be >= 0")
        if self.inter_arrival_ms <= 0:
            raise ConfigError("inter_arrival_ms", "must be positive")
        if not 0.0 <= self.duplicate_rate <= 0.9:
            raise ConfigError("duplicate_rate", "must be in [0, 0.9]")
        if self.topic_partitions < 1:
            raise ConfigError("topic_partitions", "must be >= 1")
        if self.sources and self.entities_per_source > 0:
            if self.edge_nodes < 1 or self.fog_nodes < 1:
                raise ConfigError(
                    "edge_nodes", "need at least one edge and one fog node"
                )
        times = [ev.at_ms for ev in self.failure_schedule]
        if times != sorted(times):
            raise ConfigError("failure_schedule", "times must be non-decreasing")
        seen = set()
        for src in self.sources:
            if src.source_id in seen:
                raise ConfigError("sources", f"duplicate source id {src.source_id!r}")
            seen.add(src.source_id)


def scenario_from_dict(doc: dict[str, Any]) -> ScenarioConfig:
    """Build a config from a parsed JSON document, naming the offending field."""
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    kwargs: dict[str, Any] = dict(doc)
    try:
        if "sources" in kwargs:
            kwargs["sources"] = tuple(
                AVSource(
                    source_id=s["source_id"],
                    kind=SourceKind(s.get("kind", "camera")),
                    nominal_rate=int(s.get("rate_bytes_per_s", 1_000_000)),
                    active=bool(s.get("active", True)),
                )
                for s in kwargs["sources"]
            )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError("sources", str(exc)) from exc
    try:
        if "cluster" in kwargs:
            kwargs["cluster"] = ClusterConfig(**kwargs["cluster"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("cluster", str(exc)) from exc
    try:
        if "constraints" in kwargs:
            kwargs["constraints"] = Constraints(**kwargs["constraints"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("constraints", str(exc)) from exc
    try:
        if "failure_schedule" in kwargs:
            kwargs["failure_schedule"] = tuple(
                FailureEvent(
                    at_ms=float(ev["at_ms"]),
                    broker=int(ev["broker"]),
                    event=ev["event"],
                )
                for ev in kwargs["failure_schedule"]
            )
    except (KeyError, TypeError) as exc:
        raise ConfigError("failure_schedule", str(exc)) from exc
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from exc


def load_scenario(path: str | os.PathLike) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


@dataclass(frozen=True)
class MetricsReport:
    data_loss_rate: float
    availability: float
    data_throughput: float  # bytes per simulated second
    response_time_ms: float
    data_transfer_latency_ms: float
    cluster_nodes: int
    open_handles: int
    unavailability_ms: float
    entities_produced: int
    entities_stored: int
    duplicate_deliveries: int

    COLUMNS = (
        "data_loss_rate",
        "availability",
        "data_throughput",
        "response_time_ms",
        "data_transfer_latency_ms",
        "cluster_nodes",
        "open_handles",
        "unavailability_ms",
        "entities_produced",
        "entities_stored",
        "duplicate_deliveries",
    )

    def to_row(self) -> list:
        return [getattr(self, name) for name in self.COLUMNS]


_LABELS = ("pedestrian", "bicycle", "vehicle", "crowd", "siren")


def _make_raw(
    source_id: str, producer: str, index: int, now_ms: int, rng: SplitMix64
) -> RawInferenceResult:
    roll = rng.randrange(6)
    if roll == 0:
        payload: dict[str, Any] = {"severity": "critical", "label": "crowd_gathering"}
    elif roll == 1:
        payload = {"alert": True, "zone": f"z{rng.randrange(4)}"}
    elif roll == 2:
        payload = {"anomaly_score": rng.randrange(10_000) / 10_000.0}
    else:
        payload = {
            "label": _LABELS[rng.randrange(len(_LABELS))],
            "confidence": rng.randrange(1000) / 1000.0,
        }
    if rng.randrange(5) == 0:
        when = TimeSpan(Timestamp(now_ms), Timestamp(now_ms + 500))
    else:
        when = Timestamp(now_ms)
    return RawInferenceResult(
        result_id=f"{source_id}-{index:06d}",
        av_source_id=source_id,
        producer=producer,
        when=when,
        payload=payload,
    )


class _Ops:
    """Request accounting for the availability metric."""

    def __init__(self):
        self.attempts = 0
        self.failures = 0

    def ok(self, n: int = 1) -> None:
        self.attempts += n

    def fail(self) -> None:
        self.attempts += 1
        self.failures += 1

    @property
    def availability(self) -> float:
        if self.attempts == 0:
            return 1.0
        return 1.0 - self.failures / self.attempts


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    """Execute the full pipeline under the simulated clock until quiescence."""
    rng = SplitMix64(cfg.seed)
    payload_rng = rng.spawn("payloads")
    dup_rng = rng.spawn("duplicates")
    av_rng = rng.spawn("av-streams")

    cluster = Cluster(cfg.cluster)
    for topic in TOPIC_BY_KIND.values():
        cluster.create_topic(topic, cfg.topic_partitions)
    store = FusionStore(cfg.store_path)
    ops = _Ops()

    # Relay fabric: one broker + relay node per edge node, fog fan-in, one cloud.
    pending: dict[str, deque[SdmEntity]] = {s.source_id: deque() for s in cfg.sources}

    def sink(entity: SdmEntity) -> None:
        pending[entity.av_source_id].append(entity)

    cloud = RelayNode(Layer.CLOUD, sink=sink)
    fogs = [RelayNode(Layer.FOG, downstream=cloud) for _ in range(max(cfg.fog_nodes, 1))]
    edges = [
        RelayNode(Layer.EDGE, downstream=fogs[i % len(fogs)])
        for i in range(max(cfg.edge_nodes, 1))
    ]
    brokers = [EdgeBroker() for _ in edges]
    for i, broker in enumerate(brokers):
        broker.subscribe(TopicFilter.parse("inference/#"), f"relay-{i}")

    bus_bytes = 0
    produced_to_bus = 0
    retry_at: float | None = None

    def drain(now: float) -> None:
        nonlocal retry_at, bus_bytes, produced_to_bus
        blocked = False
        for src in cfg.sources:
            queue = pending[src.source_id]
            while queue:
                entity = queue[0]
                value = serialize_entity(entity)
                try:
                    cluster.produce(
                        TOPIC_BY_KIND[entity.kind],
                        entity.av_source_id.encode("utf-8"),
                        value,
                        now,
                    )
                except PartitionUnavailable:
                    ops.fail()
                    blocked = True
                    break
                ops.ok()
                queue.popleft()
                produced_to_bus += 1
                bus_bytes += len(value)
        if blocked and retry_at is None:
            retry_at = now + _RETRY_BACKOFF_MS

    # Build the timed event list: per-source publishes plus the failure schedule.
    events: list[tuple[float, int, str, Any]] = []
    seq = 0
    for j in range(cfg.entities_per_source):
        for idx, src in enumerate(cfg.sources):
            events.append((j * cfg.inter_arrival_ms, seq, "publish", (idx, j)))
            seq += 1
    for ev in cfg.failure_schedule:
        events.append((ev.at_ms, seq, ev.event, ev.broker))
        seq += 1
    heapq.heapify(events)
    last_event_ms = max((e[0] for e in events), default=0.0)
    horizon = last_event_ms + _QUIESCE_TIMEOUT_MS

    now = 0.0
    while events or retry_at is not None:
        if events and (retry_at is None or events[0][0] <= retry_at):
            now, _, kind, data = heapq.heappop(events)
        elif retry_at is not None and retry_at <= horizon:
            now, retry_at = retry_at, None
            drain(now)
            continue
        else:
            break  # quiescence timeout: whatever is still pending is lost
        if kind == "publish":
            idx, j = data
            src = cfg.sources[idx]
            node = idx % len(edges)
            producer = f"detector-{idx % 2}"
            raw = _make_raw(src.source_id, producer, j, int(now), payload_rng)
            topic = TopicName.parse(f"inference/edge/{producer}/{src.source_id}")
            ops.ok()
            brokers[node].publish(topic, serialize_raw(raw))
            for delivery in brokers[node].poll(f"relay-{node}"):
                edges[node].process_raw(deserialize_raw(delivery.payload))
        elif kind == "fail":
            cluster.fail_broker(data, now)
        elif kind == "recover":
            cluster.recover_broker(data, now)
        drain(now)

    # Consumption into the store, with optional duplicate injection: a "crash"
    # consumes without committing, so the next pass redelivers the same batch.
    duplicate_deliveries = 0
    group = "dfb"
    for name in TOPIC_BY_KIND.values():
        for p in range(cluster.topics[name].partition_count):
            while True:
                crashed = (
                    cfg.duplicate_rate > 0.0
                    and dup_rng.random() < cfg.duplicate_rate
                )
                try:
                    batch = cluster.consume(
                        name, group, p, max_records=_CONSUME_BATCH, commit=not crashed
                    )
                except PartitionUnavailable:
                    ops.fail()
                    break
                ops.ok()
                if not batch:
                    if not crashed:
                        break
                    continue
                for record in batch:
                    outcome = store.ingest(deserialize_entity(record.value))
                    if outcome == IngestOutcome.DUPLICATE:
                        duplicate_deliveries += 1

    # AV plane: segment synthetic streams for each source.
    av_bytes = 0
    if cfg.av_stream_seconds > 0:
        archive = SegmentArchive(cfg.archive_dir) if cfg.archive_dir else None
        for src in cfg.sources:
            stream = synthetic_stream(
                src, av_rng.next_u64(), cfg.av_stream_seconds
            )
            ops.ok()
            segs = ingest_and_segment(src.source_id, stream, cfg.segment_interval_s)
            av_bytes += sum(len(s.data) for s in segs)
            if archive is not None:
                archive.archive_segments(segs)

    # Standard query batch: full range plus each half, modeled response time.
    response_time_ms = 0.0
    bounds = store.time_bounds()
    if bounds is not None:
        lo, hi = bounds.start.epoch_ms, bounds.end.epoch_ms
        mid = (lo + hi) // 2
        spans = [
            TimeSpan(Timestamp(lo), Timestamp(hi)),
            TimeSpan(Timestamp(lo), Timestamp(mid)),
            TimeSpan(Timestamp(mid), Timestamp(hi)),
        ]
        total = 0.0
        for span in spans:
            ops.ok()
            rows = store.query(span)
            total += _QUERY_BASE_MS + _QUERY_PER_ROW_MS * len(rows)
        response_time_ms = total / len(spans)

    produced = cfg.entities_per_source * len(cfg.sources)
    stored = len(store)
    loss = 0.0 if produced == 0 else 1.0 - stored / produced
    duration_s = now / 1000.0
    throughput = 0.0 if duration_s == 0 else (bus_bytes + av_bytes) / duration_s
    metrics = cluster.snapshot_metrics()
    store.close()
    return MetricsReport(
        data_loss_rate=loss,
        availability=ops.availability,
        data_throughput=throughput,
        response_time_ms=response_time_ms,
        data_transfer_latency_ms=metrics.replication_latency_ms,
        cluster_nodes=cfg.cluster.brokers,
        open_handles=metrics.total_open_handles,
        unavailability_ms=metrics.unavailability_ms,
        entities_produced=produced,
        entities_stored=stored,
        duplicate_deliveries=duplicate_deliveries,
    )


# -- optimizer comparison ---------------------------------------------------------


@dataclass(frozen=True)
class CompareRow:
    algorithm: str
    brokers: int  # configured broker count
    replication: int
    consumers: int
    seeds: int
    partitions: float  # seed mean for ms-cnfl, exact for the optimizers
    predicted_latency_ms: float
    violations: int  # count of seed plans with at least one violation
    brokers_used: int
    feasible: int

    COLUMNS = (
        "algorithm",
        "brokers",
        "replication",
        "consumers",
        "seeds",
        "partitions",
        "predicted_latency_ms",
        "violations",
        "brokers_used",
        "feasible",
    )

    def to_row(self) -> list:
        return [getattr(self, name) for name in self.COLUMNS]


def compare_optimizers(
    brokers_range: Sequence[int],
    replication: int,
    constraints: Constraints | None = None,
    consumer_sweep: Sequence[int] = DEFAULT_CONSUMER_SWEEP,
    seeds: int = 100,
    cfg: ClusterConfig | None = None,
    seed_base: int = 0,
) -> list[CompareRow]:
    """Benchmark vs optimizer sweep.

    Consumer count scales the per-load latency coefficient (a documented
    modeling extension): more consumers means more per-message fan-out work.
    Row order is frozen: for each broker count, for each consumer count,
    ms-cnfl, then bro-min, then bro-max.
    """
    if not brokers_range or not consumer_sweep:
        raise ValueError("broker range and consumer sweep must be non-empty")
    c = constraints or Constraints()
    base = cfg or ClusterConfig(brokers=1, replication=1)
    rows: list[CompareRow] = []
    for brokers in brokers_range:
        for consumers in consumer_sweep:
            cal = replace(
                base, latency_per_load_ms=base.latency_per_load_ms * consumers
            )
            p_sum = 0
            lat_sum = 0.0
            violating = 0
            for s in range(seeds):
                plan = ms_cnfl(brokers, replication, SplitMix64(seed_base + s), c, cal)
                if check_constraints(plan, c, cal):
                    violating += 1
                p_sum += plan.partitions
                lat_sum += plan.predicted_latency_ms
            rows.append(
                CompareRow(
                    algorithm="ms-cnfl",
                    brokers=brokers,
                    replication=replication,
                    consumers=consumers,
                    seeds=seeds,
                    partitions=p_sum / seeds,
                    predicted_latency_ms=lat_sum / seeds,
                    violations=violating,
                    brokers_used=brokers,
                    feasible=1,
                )
            )
            try:
                max_plan = bro_max(brokers, replication, c, cal)
            except Infeasible:
                max_plan = None
            if max_plan is not None:
                min_plan = bro_min(max_plan.partitions, replication, c, cal)
                for plan in (min_plan, max_plan):
                    rows.append(
                        CompareRow(
                            algorithm=plan.algorithm,
                            brokers=brokers,
                            replication=replication,
                            consumers=consumers,
                            seeds=1,
                            partitions=float(plan.partitions),
                            predicted_latency_ms=plan.predicted_latency_ms,
                            violations=len(check_constraints(plan, c, cal)),
                            brokers_used=plan.brokers,
                            feasible=1,
                        )
                    )
            else:
                for algorithm in ("bro-min", "bro-max"):
                    rows.append(
                        CompareRow(
                            algorithm=algorithm,
                            brokers=brokers,
                            replication=replication,
                            consumers=consumers,
                            seeds=1,
                            partitions=0.0,
                            predicted_latency_ms=0.0,
                            violations=0,
                            brokers_used=0,
                            feasible=0,
                        )
                    )
    return rows


def optimize_once(
    algorithm: str,
    brokers: int,
    replication: int,
    constraints: Constraints | None = None,
    cfg: ClusterConfig | None = None,
    seed: int = 0,
    partitions_required: int | None = None,
) -> PartitionPlan:
    """Single plan for the CLI's optimize subcommand."""
    if algorithm == "ms-cnfl":
        return ms_cnfl(brokers, replication, SplitMix64(seed), constraints, cfg)
    if algorithm == "bro-max":
        return bro_max(brokers, replication, constraints, cfg)
    if algorithm == "bro-min":
        required = partitions_required
        if required is None:
            required = bro_max(brokers, replication, constraints, cfg).partitions
        return bro_min(required, replication, constraints, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


# -- CSV ---------------------------------------------------------------------------


def emit_csv(data: MetricsReport | Iterable[CompareRow], path: str | os.PathLike) -> None:
    """Write a report or comparison table; re-emitting equal data is byte-identical."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if isinstance(data, MetricsReport):
                writer.writerow(MetricsReport.COLUMNS)
                writer.writerow(data.to_row())
            else:
                writer.writerow(CompareRow.COLUMNS)
                for row in data:
                    writer.writerow(row.to_row())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
