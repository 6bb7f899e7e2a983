"""Per-layer transformation and relay of inference results up the edge->fog->cloud chain.

Each node consumes raw results from its layer, maps them onto an entity kind
with an ordered first-match-wins rule list, stamps the originating layer, and
forwards the entity exactly once (duplicates are suppressed by result id).
The cloud node terminates the chain by handing entities to a sink, normally a
producer for the partitioned bus keyed by AV source id with one topic per
entity kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from citybus.model import (
    Layer,
    MissingMandatoryField,
    RawInferenceResult,
    SdmEntity,
    SdmKind,
    Verification,
)

TOPIC_BY_KIND = {
    SdmKind.MEDIA_EVENT: "sdm.mediaevent",
    SdmKind.ALERT: "sdm.alert",
    SdmKind.ANOMALY: "sdm.anomaly",
}

_MISSING = object()


@dataclass(frozen=True)
class FieldRule:
    """Maps payloads whose top-level `field` matches a condition to `kind`.

    Exactly one condition applies per rule: `equals` compares for equality,
    `one_of` tests membership, `numeric` requires an int/float value
    (booleans excluded). With no condition set, field presence suffices.
    """

    field: str
    kind: SdmKind
    equals: Any = _MISSING
    one_of: tuple[Any, ...] | None = None
    numeric: bool = False

    def matches(self, payload: Mapping[str, Any]) -> bool:
        value = payload.get(self.field, _MISSING)
        if value is _MISSING:
            return False
        if self.equals is not _MISSING:
            return value == self.equals
        if self.one_of is not None:
            return value in self.one_of
        if self.numeric:
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        return True


DEFAULT_RULES: tuple[FieldRule, ...] = (
    FieldRule(field="alert", kind=SdmKind.ALERT, equals=True),
    FieldRule(field="severity", kind=SdmKind.ALERT, one_of=("high", "critical")),
    FieldRule(field="anomaly_score", kind=SdmKind.ANOMALY, numeric=True),
)


def classify_kind(
    raw: RawInferenceResult, rules: Sequence[FieldRule] = DEFAULT_RULES
) -> SdmKind:
    """First matching rule wins; MediaEvent is the total fallback."""
    for rule in rules:
        if rule.matches(raw.payload):
            return rule.kind
    return SdmKind.MEDIA_EVENT


def transform(
    raw: RawInferenceResult,
    layer: Layer,
    rules: Sequence[FieldRule] = DEFAULT_RULES,
) -> SdmEntity:
    """Map a raw result onto an entity: classify, copy mandatory fields verbatim."""
    if not raw.result_id:
        raise MissingMandatoryField("result_id")
    if not raw.av_source_id:
        raise MissingMandatoryField("av_source_id")
    if raw.when is None:
        raise MissingMandatoryField("when")
    return SdmEntity(
        kind=classify_kind(raw, rules),
        result_id=raw.result_id,
        av_source_id=raw.av_source_id,
        when=raw.when,
        origin_layer=layer,
        verified=Verification.UNSET,
        attributes=dict(raw.payload),
    )


class RelayNode:
    """One layer's relay: transforms local raw results and forwards entities upward.

    Non-cloud nodes forward to the next layer's node; the cloud node calls
    `sink(entity)` instead. A result id is forwarded at most once per node.
    """

    def __init__(
        self,
        layer: Layer,
        downstream: "RelayNode | None" = None,
        sink: Callable[[SdmEntity], None] | None = None,
        rules: Sequence[FieldRule] = DEFAULT_RULES,
    ):
        if layer is Layer.CLOUD:
            if downstream is not None:
                raise ValueError("cloud node cannot have a downstream relay")
            if sink is None:
                raise ValueError("cloud node requires a sink")
        else:
            if downstream is None:
                raise ValueError(f"{layer.value} node requires a downstream relay")
            if downstream.layer.rank != layer.rank + 1:
                raise ValueError(
                    f"relay direction must strictly ascend: "
                    f"{layer.value} -> {downstream.layer.value}"
                )
            if sink is not None:
                raise ValueError("only the cloud node has a sink")
        self.layer = layer
        self.downstream = downstream
        self.sink = sink
        self.rules = tuple(rules)
        self.seen_ids: set[str] = set()

    def relay(self, entity: SdmEntity) -> bool:
        """Forward unseen entities; returns False for suppressed duplicates."""
        if entity.result_id in self.seen_ids:
            return False
        self.seen_ids.add(entity.result_id)
        if self.downstream is not None:
            self.downstream.relay(entity)
        else:
            self.sink(entity)
        return True

    def process_raw(self, raw: RawInferenceResult) -> bool:
        """Transform a raw result from this node's layer and relay it."""
        return self.relay(transform(raw, self.layer, self.rules))


def build_chain(
    sink: Callable[[SdmEntity], None],
    rules: Sequence[FieldRule] = DEFAULT_RULES,
) -> tuple[RelayNode, RelayNode, RelayNode]:
    """Wire an edge->fog->cloud chain ending at `sink`; returns the three nodes."""
    cloud = RelayNode(Layer.CLOUD, sink=sink, rules=rules)
    fog = RelayNode(Layer.FOG, downstream=cloud, rules=rules)
    edge = RelayNode(Layer.EDGE, downstream=fog, rules=rules)
    return edge, fog, cloud
