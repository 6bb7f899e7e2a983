"""Partitioned, replicated commit-log cluster under a deterministic simulated clock.

Placement is round-robin: partition ``i`` holds replicas on brokers
``(i + j) mod B`` for ``j in 0..r-1`` with the leader at ``i mod B``. Keyed
produce picks the partition as ``fnv1a64(key) mod P``, so one key always maps
to one partition.

Failure model: when a broker fails, every partition it led becomes leaderless;
leadership moves to the most complete live replica after a delay of
``recovery_ms_per_partition`` times the number of partitions the broker led.
Leaderless time accumulates into the unavailability metric. Replication is
synchronous to all live replicas, and a recovering broker resyncs its copies
from the current leaders, so any single-failure window loses nothing with
replication >= 2.

All operations carry explicit simulated-time stamps in milliseconds; the
clock never moves backward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from citybus._kernels import fnv1a64


class InvalidPartitionCount(ValueError):
    """Partition count below 1."""


class InvalidReplication(ValueError):
    """Replication factor outside [1, broker count]."""


class PartitionUnavailable(RuntimeError):
    """No leader is currently able to serve the partition."""


class UnknownTopic(KeyError):
    pass


class UnknownPartition(KeyError):
    pass


class UnknownBroker(KeyError):
    pass


class DuplicateTopic(ValueError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    """Broker count, replication factor, and cost-model calibration knobs."""

    brokers: int
    replication: int
    handle_cost_per_replica: int = 2
    latency_base_ms: float = 1.0
    latency_per_load_ms: float = 0.01
    recovery_ms_per_partition: float = 10.0

    def __post_init__(self):
        if self.brokers < 1:
            raise ValueError(f"broker count must be >= 1, got {self.brokers}")
        if not 1 <= self.replication <= self.brokers:
            raise InvalidReplication(
                f"replication {self.replication} outside [1, {self.brokers}]"
            )


def predict_latency(
    cfg: ClusterConfig,
    partitions: int,
    brokers: int | None = None,
    replication: int | None = None,
) -> float:
    """Per-message processing latency model: base + load * partition-replicas per broker.

    `brokers`/`replication` override the config's values so optimizer searches
    can probe configurations without constructing a validated cluster config.
    """
    b = cfg.brokers if brokers is None else brokers
    r = cfg.replication if replication is None else replication
    return cfg.latency_base_ms + cfg.latency_per_load_ms * (partitions * r / b)


def replication_latency(cfg: ClusterConfig, partitions: int) -> float:
    return predict_latency(cfg, partitions)


def partition_for_key(key: bytes, partitions: int) -> int:
    """Stable keyed partitioning: FNV-1a 64 of the key, modulo the partition count."""
    if partitions < 1:
        raise InvalidPartitionCount(f"partition count must be >= 1, got {partitions}")
    return fnv1a64(key) % partitions


@dataclass(frozen=True)
class Record:
    key: bytes
    value: bytes
    offset: int
    produced_at: float


@dataclass(frozen=True)
class ClusterMetrics:
    open_handles_per_broker: Mapping[int, int]
    replication_latency_ms: float
    unavailability_ms: float
    throughput_proxy: int

    @property
    def total_open_handles(self) -> int:
        return sum(self.open_handles_per_broker.values())


class _Partition:
    __slots__ = ("replicas", "leader", "logs", "leaderless_since", "election_ready")

    def __init__(self, replicas: tuple[int, ...], leader: int | None):
        self.replicas = replicas
        self.leader = leader
        self.logs: dict[int, list[Record]] = {b: [] for b in replicas}
        self.leaderless_since: float | None = None
        self.election_ready: float | None = None


class Topic:
    def __init__(self, name: str):
        self.name = name
        self.partitions: list[_Partition] = []

    @property
    def partition_count(self) -> int:
        return len(self.partitions)

    @property
    def assignment(self) -> tuple[tuple[int, ...], ...]:
        """Per-partition replica broker ids, preferred leader first."""
        return tuple(p.replicas for p in self.partitions)

    @property
    def high_offsets(self) -> tuple[int, ...]:
        """Next offset per partition (taken from the most complete copy)."""
        return tuple(
            max(len(log) for log in p.logs.values()) for p in self.partitions
        )


class Cluster:
    """Deterministic cluster state machine advanced by explicitly timed commands."""

    def __init__(self, cfg: ClusterConfig):
        self.cfg = cfg
        self.alive: set[int] = set(range(cfg.brokers))
        self.topics: dict[str, Topic] = {}
        self._now = 0.0
        self._unavailability_ms = 0.0
        self._offsets: dict[str, dict[tuple[str, int], int]] = {}

    @property
    def now(self) -> float:
        return self._now

    # -- simulated clock ---------------------------------------------------

    def _advance(self, now: float) -> None:
        if now < self._now:
            raise ValueError(
                f"simulated clock moved backward: {now} < {self._now}"
            )
        due: list[tuple[float, str, int, _Partition]] = []
        for topic in self.topics.values():
            for idx, part in enumerate(topic.partitions):
                if part.election_ready is not None and part.election_ready <= now:
                    due.append((part.election_ready, topic.name, idx, part))
        for ready, _name, _idx, part in sorted(due, key=lambda d: (d[0], d[1], d[2])):
            self._complete_election(part, ready)
        self._now = now

    def _complete_election(self, part: _Partition, at: float) -> None:
        part.election_ready = None
        candidates = [b for b in part.replicas if b in self.alive]
        if not candidates:
            return  # stays leaderless until a replica broker recovers
        # Most complete live copy wins; ties break on assignment order.
        leader = max(candidates, key=lambda b: (len(part.logs[b]), -part.replicas.index(b)))
        self._unavailability_ms += at - part.leaderless_since
        part.leaderless_since = None
        part.leader = leader

    def _accrue_leaderless(self) -> None:
        for topic in self.topics.values():
            for part in topic.partitions:
                if part.leader is None and part.leaderless_since is not None:
                    self._unavailability_ms += self._now - part.leaderless_since
                    part.leaderless_since = self._now

    # -- topics ------------------------------------------------------------

    def _make_partition(self, index: int) -> _Partition:
        b, r = self.cfg.brokers, self.cfg.replication
        replicas = tuple((index + j) % b for j in range(r))
        part = _Partition(replicas, None)
        live = [br for br in replicas if br in self.alive]
        if live:
            part.leader = live[0]
        else:
            part.leaderless_since = self._now
        return part

    def create_topic(self, name: str, partitions: int) -> Topic:
        if partitions < 1:
            raise InvalidPartitionCount(
                f"partition count must be >= 1, got {partitions}"
            )
        if self.cfg.replication > self.cfg.brokers:
            raise InvalidReplication(
                f"replication {self.cfg.replication} exceeds {self.cfg.brokers} brokers"
            )
        if name in self.topics:
            raise DuplicateTopic(name)
        topic = Topic(name)
        for i in range(partitions):
            topic.partitions.append(self._make_partition(i))
        self.topics[name] = topic
        return topic

    def expand_topic(self, name: str, partitions: int, now: float | None = None) -> bool:
        """Grow a topic to `partitions`; partition counts never shrink."""
        self._advance(self._now if now is None else now)
        topic = self._topic(name)
        if partitions <= topic.partition_count:
            return False
        for i in range(topic.partition_count, partitions):
            topic.partitions.append(self._make_partition(i))
        return True

    def _topic(self, name: str) -> Topic:
        try:
            return self.topics[name]
        except KeyError:
            raise UnknownTopic(name) from None

    def _partition(self, topic: Topic, index: int) -> _Partition:
        if not 0 <= index < topic.partition_count:
            raise UnknownPartition(f"{topic.name}[{index}]")
        return topic.partitions[index]

    # -- produce / consume ---------------------------------------------------

    def produce(self, name: str, key: bytes, value: bytes, now: float) -> tuple[int, int]:
        """Append at the partition leader; replicate to live replicas.

        Returns (partition index, offset). Raises PartitionUnavailable while
        the partition has no leader (election pending or all replicas down).
        """
        self._advance(now)
        topic = self._topic(name)
        idx = partition_for_key(key, topic.partition_count)
        part = topic.partitions[idx]
        if part.leader is None:
            if any(b in self.alive for b in part.replicas):
                raise PartitionUnavailable(
                    f"{name}[{idx}]: leader election in progress"
                )
            raise PartitionUnavailable(f"{name}[{idx}]: no live replica")
        offset = len(part.logs[part.leader])
        record = Record(key, value, offset, now)
        for broker in part.replicas:
            if broker in self.alive:
                part.logs[broker].append(record)
        return idx, offset

    def consume(
        self,
        name: str,
        group: str,
        partition: int,
        max_records: int = 1 << 30,
        commit: bool = True,
    ) -> list[Record]:
        """Read from the group's committed offset at the partition leader.

        The committed offset advances with the read unless ``commit=False``,
        which models a consumer crashing before its commit: the next consume
        returns the same records again (at-least-once).
        """
        topic = self._topic(name)
        part = self._partition(topic, partition)
        if part.leader is None:
            raise PartitionUnavailable(f"{name}[{partition}]: no leader")
        offsets = self._offsets.setdefault(group, {})
        start = offsets.get((name, partition), 0)
        log = part.logs[part.leader]
        records = log[start : start + max_records]
        if commit:
            offsets[(name, partition)] = start + len(records)
        return list(records)

    def committed_offset(self, name: str, group: str, partition: int) -> int:
        return self._offsets.get(group, {}).get((name, partition), 0)

    # -- failures ------------------------------------------------------------

    def _check_broker(self, broker: int) -> None:
        if not 0 <= broker < self.cfg.brokers:
            raise UnknownBroker(broker)

    def fail_broker(self, broker: int, now: float) -> None:
        """Kill a broker; partitions it led become leaderless until re-election."""
        self._advance(now)
        self._check_broker(broker)
        if broker not in self.alive:
            return
        self.alive.remove(broker)
        led = [
            part
            for topic in self.topics.values()
            for part in topic.partitions
            if part.leader == broker
        ]
        delay = self.cfg.recovery_ms_per_partition * len(led)
        for part in led:
            part.leader = None
            part.leaderless_since = now
            part.election_ready = now + delay

    def recover_broker(self, broker: int, now: float) -> None:
        """Bring a broker back: resync its copies, then serve again."""
        self._advance(now)
        self._check_broker(broker)
        if broker in self.alive:
            return
        self.alive.add(broker)
        for topic in self.topics.values():
            for part in topic.partitions:
                if broker not in part.replicas:
                    continue
                if part.leader is not None:
                    if part.leader != broker:
                        part.logs[broker] = list(part.logs[part.leader])
                elif part.election_ready is None:
                    # Election expired with no candidate; complete it now.
                    self._complete_election(part, now)

    # -- metrics ---------------------------------------------------------------

    def snapshot_metrics(self, now: float | None = None) -> ClusterMetrics:
        if now is not None:
            self._advance(now)
        self._accrue_leaderless()
        handles = {b: 0 for b in range(self.cfg.brokers)}
        total_partitions = 0
        for topic in self.topics.values():
            total_partitions += topic.partition_count
            for part in topic.partitions:
                for broker in part.replicas:
                    handles[broker] += self.cfg.handle_cost_per_replica
        return ClusterMetrics(
            open_handles_per_broker=handles,
            replication_latency_ms=predict_latency(self.cfg, total_partitions),
            unavailability_ms=self._unavailability_ms,
            throughput_proxy=total_partitions,
        )
