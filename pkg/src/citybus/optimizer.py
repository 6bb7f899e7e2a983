"""Partition-allocation decision engine for the fusion bus.

Three planners produce a (partition count, broker assignment) decision:

* ``ms_cnfl`` -- randomized industry-guideline benchmark. Draws
  ``u1 uniform in [1, floor(1000*B/r)]`` (per-broker cap including replicas,
  spread over brokers) and ``u2 uniform in [1, 100*B]`` (total-partition
  guideline), takes ``P = min(u1, u2)``, and assigns each partition's leader
  to a uniformly random broker.
* ``bro_max`` -- largest P that honors the per-broker cap, the total cap, and
  the latency bound, with balanced round-robin placement.
* ``bro_min`` -- smallest broker count that can host a required P under the
  same three constraints.

``check_constraints`` validates any plan against the actual assignment, so
randomly placed benchmark plans can violate the per-broker cap even when the
aggregate bound holds.
"""

from __future__ import annotations

from dataclasses import dataclass

from citybus.bus import ClusterConfig, predict_latency
from citybus.rng import SplitMix64

DEFAULT_LATENCY_CALIBRATION = ClusterConfig(brokers=1, replication=1)


class EmptyRange(ValueError):
    """A guideline range collapsed below 1; no partition count can be drawn."""


class Infeasible(ValueError):
    """No plan satisfies every constraint."""


class InfeasiblePlan(ValueError):
    """A plan that cannot be applied to the target cluster."""


@dataclass(frozen=True)
class Constraints:
    """Sizing guidelines and the latency bound the optimizers must respect."""

    max_partitions_per_broker: int = 1000  # includes replicas
    max_partitions_total_factor: int = 100  # total partitions <= factor * brokers
    l_max_ms: float = 5.0

    def __post_init__(self):
        if self.max_partitions_per_broker <= 0:
            raise ValueError("max_partitions_per_broker must be positive")
        if self.max_partitions_total_factor <= 0:
            raise ValueError("max_partitions_total_factor must be positive")
        if self.l_max_ms <= 0:
            raise ValueError("l_max_ms must be positive")


@dataclass(frozen=True)
class PartitionPlan:
    """A partition-count decision with per-partition leader assignment."""

    partitions: int
    brokers: int
    replication: int
    assignment: tuple[int, ...]  # leader broker per partition
    predicted_latency_ms: float
    algorithm: str

    def __post_init__(self):
        if self.partitions < 1:
            raise ValueError("plan must have at least one partition")
        if not 1 <= self.replication:
            raise ValueError("replication must be >= 1")
        if len(self.assignment) != self.partitions:
            raise ValueError("assignment length must equal the partition count")

    def broker_load(self) -> dict[int, int]:
        """Partition-replicas per broker: each partition occupies its leader
        plus the next r-1 brokers (mod B), mirroring round-robin fanout."""
        load = {b: 0 for b in range(self.brokers)}
        width = min(self.replication, self.brokers)
        for leader in self.assignment:
            for j in range(width):
                load[(leader + j) % self.brokers] += 1
        return load


@dataclass(frozen=True)
class Violation:
    constraint: str  # "per_broker_partitions" | "total_partitions" | "latency"
    value: float
    limit: float
    detail: str

    def __str__(self) -> str:
        return self.detail


def ms_cnfl(
    brokers: int,
    replication: int,
    rng: SplitMix64,
    constraints: Constraints | None = None,
    cfg: ClusterConfig | None = None,
) -> PartitionPlan:
    """Randomized benchmark plan; draw order is u1, u2, then one leader per partition."""
    c = constraints or Constraints()
    cal = cfg or DEFAULT_LATENCY_CALIBRATION
    if brokers < 1 or replication < 1:
        raise ValueError("brokers and replication must be >= 1")
    hi1 = (c.max_partitions_per_broker * brokers) // replication
    if hi1 < 1:
        raise EmptyRange(
            f"floor({c.max_partitions_per_broker}*{brokers}/{replication}) < 1"
        )
    hi2 = c.max_partitions_total_factor * brokers
    u1 = rng.randint(1, hi1)
    u2 = rng.randint(1, hi2)
    partitions = min(u1, u2)
    assignment = tuple(rng.fill_bounded(brokers, partitions))
    return PartitionPlan(
        partitions=partitions,
        brokers=brokers,
        replication=replication,
        assignment=assignment,
        predicted_latency_ms=predict_latency(cal, partitions, brokers, replication),
        algorithm="ms-cnfl",
    )


def _round_robin(partitions: int, brokers: int) -> tuple[int, ...]:
    return tuple(i % brokers for i in range(partitions))


def _max_partitions_under_latency(
    cal: ClusterConfig, brokers: int, replication: int, l_max_ms: float, cap: int
) -> int:
    """Largest P <= cap with predict_latency(P) <= l_max_ms; -1 if none."""
    if cal.latency_base_ms > l_max_ms:
        return -1
    if cal.latency_per_load_ms <= 0:
        return cap
    guess = int((l_max_ms - cal.latency_base_ms) * brokers / (cal.latency_per_load_ms * replication))
    guess = min(guess, cap)
    # Float guard: nudge against the actual model so the scan oracle agrees.
    while guess < cap and predict_latency(cal, guess + 1, brokers, replication) <= l_max_ms:
        guess += 1
    while guess >= 1 and predict_latency(cal, guess, brokers, replication) > l_max_ms:
        guess -= 1
    return guess if guess >= 1 else 0


def bro_max(
    brokers: int,
    replication: int,
    constraints: Constraints | None = None,
    cfg: ClusterConfig | None = None,
) -> PartitionPlan:
    """Deterministic plan maximizing P under the caps and the latency bound."""
    c = constraints or Constraints()
    cal = cfg or DEFAULT_LATENCY_CALIBRATION
    if brokers < 1 or replication < 1:
        raise ValueError("brokers and replication must be >= 1")
    if replication > brokers:
        raise Infeasible(f"replication {replication} exceeds {brokers} brokers")
    cap = min(
        (c.max_partitions_per_broker * brokers) // replication,
        c.max_partitions_total_factor * brokers,
    )
    partitions = _max_partitions_under_latency(cal, brokers, replication, c.l_max_ms, cap)
    if partitions < 1:
        raise Infeasible(
            f"no partition count >= 1 stays within {c.l_max_ms} ms at "
            f"B={brokers}, r={replication}"
        )
    return PartitionPlan(
        partitions=partitions,
        brokers=brokers,
        replication=replication,
        assignment=_round_robin(partitions, brokers),
        predicted_latency_ms=predict_latency(cal, partitions, brokers, replication),
        algorithm="bro-max",
    )


def _satisfies(
    cal: ClusterConfig,
    c: Constraints,
    partitions: int,
    brokers: int,
    replication: int,
) -> bool:
    if partitions * replication > c.max_partitions_per_broker * brokers:
        return False
    if partitions > c.max_partitions_total_factor * brokers:
        return False
    return predict_latency(cal, partitions, brokers, replication) <= c.l_max_ms


def bro_min(
    partitions_required: int,
    replication: int,
    constraints: Constraints | None = None,
    cfg: ClusterConfig | None = None,
    search_cap: int | None = None,
) -> PartitionPlan:
    """Deterministic plan using the fewest brokers that can host the required P."""
    c = constraints or Constraints()
    cal = cfg or DEFAULT_LATENCY_CALIBRATION
    if partitions_required < 1:
        raise ValueError("partitions_required must be >= 1")
    if replication < 1:
        raise ValueError("replication must be >= 1")
    cap = search_cap if search_cap is not None else 10 * partitions_required
    for brokers in range(max(1, replication), cap + 1):
        if _satisfies(cal, c, partitions_required, brokers, replication):
            return PartitionPlan(
                partitions=partitions_required,
                brokers=brokers,
                replication=replication,
                assignment=_round_robin(partitions_required, brokers),
                predicted_latency_ms=predict_latency(
                    cal, partitions_required, brokers, replication
                ),
                algorithm="bro-min",
            )
    raise Infeasible(
        f"no broker count in [{max(1, replication)}, {cap}] can host "
        f"{partitions_required} partitions at r={replication}"
    )


def check_constraints(
    plan: PartitionPlan,
    constraints: Constraints | None = None,
    cfg: ClusterConfig | None = None,
) -> list[Violation]:
    """Every violated constraint with the violating value; empty means safe.

    The per-broker cap is evaluated against the plan's actual assignment, not
    the balanced aggregate, so unbalanced random placements are caught.
    """
    c = constraints or Constraints()
    cal = cfg or DEFAULT_LATENCY_CALIBRATION
    violations: list[Violation] = []
    load = plan.broker_load()
    worst = max(load, key=lambda b: (load[b], -b))
    if load[worst] > c.max_partitions_per_broker:
        violations.append(
            Violation(
                constraint="per_broker_partitions",
                value=load[worst],
                limit=c.max_partitions_per_broker,
                detail=(
                    f"broker {worst} hosts {load[worst]} partition-replicas "
                    f"> {c.max_partitions_per_broker}"
                ),
            )
        )
    total_cap = c.max_partitions_total_factor * plan.brokers
    if plan.partitions > total_cap:
        violations.append(
            Violation(
                constraint="total_partitions",
                value=plan.partitions,
                limit=total_cap,
                detail=f"total partitions {plan.partitions} > {total_cap}",
            )
        )
    latency = predict_latency(cal, plan.partitions, plan.brokers, plan.replication)
    if latency > c.l_max_ms:
        violations.append(
            Violation(
                constraint="latency",
                value=latency,
                limit=c.l_max_ms,
                detail=(
                    f"predicted latency {latency:.6g} ms exceeds "
                    f"{c.l_max_ms:.6g} ms"
                ),
            )
        )
    return violations
