"""Indexed archive for entities: ingest with idempotence, time/source queries,
verification updates, and the partition-state exchange with the optimizer.

Three mutually consistent indexes are maintained: by result id, by primary
timestamp (span start for intervals), and per-source in ingestion order.

Persistence is a write-ahead append file of length-prefixed canonical entity
records (4-byte big-endian length, then the canonical document bytes). Every
ingest and verification update appends the resulting entity; recovery replays
the file with last-writer-wins per result id, tolerating a torn final record
from a crashed writer.
"""

from __future__ import annotations

import bisect
import os
from dataclasses import dataclass, replace
from typing import IO, Iterable, Mapping

from citybus.bus import Cluster, ClusterMetrics
from citybus.model import (
    MalformedDocument,
    SdmEntity,
    SdmKind,
    TimeSpan,
    Timestamp,
    VerificationMessage,
    deserialize_entity,
    serialize_entity,
)
from citybus.optimizer import InfeasiblePlan, PartitionPlan


class ConflictingEntity(ValueError):
    """An entity with a known result id but different content."""


class UnknownResultId(KeyError):
    pass


class IngestOutcome:
    INSERTED = "inserted"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class PartitionReport:
    """Live partitioning plus performance measurements, for the optimizer."""

    topics: Mapping[str, tuple[int, tuple[tuple[int, ...], ...]]]
    metrics: ClusterMetrics


_LEN_PREFIX = 4


class FusionStore:
    def __init__(self, wal_path: str | os.PathLike | None = None):
        self._by_id: dict[str, SdmEntity] = {}
        # Sorted (primary timestamp ms, result_id) pairs for range queries.
        self._by_time: list[tuple[int, str]] = []
        self._by_source: dict[str, list[str]] = {}
        self._wal: IO[bytes] | None = None
        if wal_path is not None:
            self._wal = open(wal_path, "ab")

    def close(self) -> None:
        if self._wal is not None:
            self._wal.close()
            self._wal = None

    def __len__(self) -> int:
        return len(self._by_id)

    def get(self, result_id: str) -> SdmEntity:
        try:
            return self._by_id[result_id]
        except KeyError:
            raise UnknownResultId(result_id) from None

    def source_order(self, av_source_id: str) -> list[str]:
        """Result ids for one source in ingestion order."""
        return list(self._by_source.get(av_source_id, []))

    def time_bounds(self) -> TimeSpan | None:
        """Span from the earliest to the latest primary timestamp, if any."""
        if not self._by_time:
            return None
        return TimeSpan(
            Timestamp(self._by_time[0][0]), Timestamp(self._by_time[-1][0])
        )

    # -- mutation ------------------------------------------------------------

    def _append_wal(self, e: SdmEntity) -> None:
        if self._wal is None:
            return
        data = serialize_entity(e)
        self._wal.write(len(data).to_bytes(_LEN_PREFIX, "big"))
        self._wal.write(data)
        self._wal.flush()

    def _index(self, e: SdmEntity) -> None:
        self._by_id[e.result_id] = e
        bisect.insort(self._by_time, (e.primary_timestamp.epoch_ms, e.result_id))
        self._by_source.setdefault(e.av_source_id, []).append(e.result_id)

    def ingest(self, e: SdmEntity) -> str:
        """Index an entity; replayed deliveries of the same entity are no-ops."""
        existing = self._by_id.get(e.result_id)
        if existing is not None:
            if existing == e:
                return IngestOutcome.DUPLICATE
            raise ConflictingEntity(
                f"result id {e.result_id!r} already stored with different content"
            )
        self._index(e)
        self._append_wal(e)
        return IngestOutcome.INSERTED

    def apply_verification(self, v: VerificationMessage) -> SdmEntity:
        """Set the entity's verification verdict; later messages overwrite."""
        entity = self.get(v.result_id)
        updated = replace(entity, verified=v.verdict)
        self._by_id[v.result_id] = updated
        self._append_wal(updated)
        return updated

    # -- queries ---------------------------------------------------------------

    def query(
        self,
        span: TimeSpan,
        source: str | None = None,
        kinds: Iterable[SdmKind] | None = None,
    ) -> list[SdmEntity]:
        """Entities with primary timestamp in [span.start, span.end], matching
        the filters, sorted by (timestamp, result id)."""
        kind_set = None if kinds is None else set(kinds)
        lo = bisect.bisect_left(self._by_time, (span.start.epoch_ms, ""))
        out = []
        for ts_ms, result_id in self._by_time[lo:]:
            if ts_ms > span.end.epoch_ms:
                break
            e = self._by_id[result_id]
            if source is not None and e.av_source_id != source:
                continue
            if kind_set is not None and e.kind not in kind_set:
                continue
            out.append(e)
        return out

    # -- optimizer exchange ------------------------------------------------------

    def report_partition_state(self, cluster: Cluster) -> PartitionReport:
        """Snapshot of current topic partitioning plus bus metrics."""
        return PartitionReport(
            topics={
                name: (topic.partition_count, topic.assignment)
                for name, topic in cluster.topics.items()
            },
            metrics=cluster.snapshot_metrics(),
        )

    def apply_partition_recommendation(
        self, cluster: Cluster, plan: PartitionPlan, now: float | None = None
    ) -> bool:
        """Expand bus topics to the recommended partition count.

        Partition counts never decrease; returns False when the plan does not
        grow any topic.
        """
        if plan.partitions < 1:
            raise InfeasiblePlan("plan must have at least one partition")
        if plan.replication > cluster.cfg.brokers:
            raise InfeasiblePlan(
                f"plan replication {plan.replication} exceeds "
                f"{cluster.cfg.brokers} available brokers"
            )
        if plan.brokers > cluster.cfg.brokers:
            raise InfeasiblePlan(
                f"plan uses {plan.brokers} brokers, cluster has {cluster.cfg.brokers}"
            )
        changed = False
        for name in cluster.topics:
            if cluster.expand_topic(name, plan.partitions, now):
                changed = True
        return changed

    # -- recovery ------------------------------------------------------------

    def _replay(self, e: SdmEntity) -> None:
        """Upsert during WAL replay: a later record for an id supersedes."""
        previous = self._by_id.get(e.result_id)
        if previous is None:
            self._index(e)
            return
        self._by_id[e.result_id] = e

    @classmethod
    def recover(cls, wal_path: str | os.PathLike) -> "FusionStore":
        """Rebuild a store from its append file, then keep appending to it."""
        store = cls()
        with open(wal_path, "rb") as fh:
            while True:
                header = fh.read(_LEN_PREFIX)
                if len(header) < _LEN_PREFIX:
                    break  # torn write at crash; ignore the tail
                length = int.from_bytes(header, "big")
                data = fh.read(length)
                if len(data) < length:
                    break
                try:
                    store._replay(deserialize_entity(data))
                except MalformedDocument as exc:
                    raise MalformedDocument(
                        f"corrupt record in {wal_path}: {exc}"
                    ) from exc
        store._wal = open(wal_path, "ab")
        return store
