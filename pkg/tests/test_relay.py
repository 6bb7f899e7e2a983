"""Transform rules, dedup, and the edge->fog->cloud relay chain."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citybus.model import (
    Layer,
    MissingMandatoryField,
    RawInferenceResult,
    SdmKind,
    TimeSpan,
    Timestamp,
    Verification,
)
from citybus.relay import (
    DEFAULT_RULES,
    TOPIC_BY_KIND,
    FieldRule,
    RelayNode,
    build_chain,
    classify_kind,
    transform,
)


def _raw(payload, result_id="r-1", source="cam1", when=None):
    return RawInferenceResult(
        result_id=result_id,
        av_source_id=source,
        producer="detector-0",
        when=when or Timestamp(1000),
        payload=payload,
    )


# -- classification -----------------------------------------------------------


def test_severity_rule_yields_alert():
    assert classify_kind(_raw({"severity": "critical", "label": "crowd"})) is SdmKind.ALERT
    assert classify_kind(_raw({"severity": "high"})) is SdmKind.ALERT
    assert classify_kind(_raw({"severity": "low"})) is SdmKind.MEDIA_EVENT


def test_alert_flag_rule():
    assert classify_kind(_raw({"alert": True})) is SdmKind.ALERT
    assert classify_kind(_raw({"alert": False})) is SdmKind.MEDIA_EVENT


def test_anomaly_score_rule_requires_number():
    assert classify_kind(_raw({"anomaly_score": 0.93})) is SdmKind.ANOMALY
    assert classify_kind(_raw({"anomaly_score": 2})) is SdmKind.ANOMALY
    assert classify_kind(_raw({"anomaly_score": "high"})) is SdmKind.MEDIA_EVENT
    assert classify_kind(_raw({"anomaly_score": True})) is SdmKind.MEDIA_EVENT


def test_fallback_is_media_event():
    assert classify_kind(_raw({"label": "bicycle", "confidence": 0.8})) is SdmKind.MEDIA_EVENT
    assert classify_kind(_raw({})) is SdmKind.MEDIA_EVENT


def test_first_matching_rule_wins():
    # Both alert and anomaly fields present: the alert rules come first.
    raw = _raw({"alert": True, "anomaly_score": 0.9})
    assert classify_kind(raw) is SdmKind.ALERT


def test_custom_rule_order():
    rules = (FieldRule(field="anomaly_score", kind=SdmKind.ANOMALY, numeric=True),) + DEFAULT_RULES
    assert classify_kind(_raw({"alert": True, "anomaly_score": 0.9}), rules) is SdmKind.ANOMALY


_payloads = st.dictionaries(
    st.sampled_from(["alert", "severity", "anomaly_score", "label", "confidence"]),
    st.one_of(
        st.booleans(),
        st.sampled_from(["high", "critical", "low", "x"]),
        st.floats(allow_nan=False, allow_infinity=False),
        st.integers(min_value=-10, max_value=10),
    ),
    max_size=4,
)


@settings(max_examples=200, deadline=None)
@given(_payloads)
def test_classification_is_total_and_deterministic(payload):
    raw = _raw(payload)
    kind = classify_kind(raw)
    assert kind in (SdmKind.MEDIA_EVENT, SdmKind.ALERT, SdmKind.ANOMALY)
    assert classify_kind(raw) is kind


# -- transform ---------------------------------------------------------------


def test_transform_copies_mandatory_fields_verbatim():
    raw = _raw({"label": "bus"}, result_id="abc", source="mic2")
    entity = transform(raw, Layer.EDGE)
    assert entity.result_id == "abc"
    assert entity.av_source_id == "mic2"
    assert entity.when == raw.when
    assert entity.origin_layer is Layer.EDGE
    assert entity.verified is Verification.UNSET
    assert dict(entity.attributes) == {"label": "bus"}


def test_transform_preserves_time_span_ends():
    span = TimeSpan(Timestamp(5000), Timestamp(7500))
    entity = transform(_raw({}, when=span), Layer.FOG)
    assert entity.when == span


def test_transform_missing_source_field():
    raw = _raw({}, source="")
    with pytest.raises(MissingMandatoryField) as err:
        transform(raw, Layer.EDGE)
    assert err.value.field_name == "av_source_id"
    with pytest.raises(MissingMandatoryField):
        transform(_raw({}, result_id=""), Layer.EDGE)


# -- relay chain ----------------------------------------------------------------


def test_chain_delivers_exactly_once():
    delivered = []
    edge, fog, cloud = build_chain(delivered.append)
    entity = transform(_raw({}), Layer.EDGE)
    assert edge.relay(entity) is True
    assert edge.relay(entity) is False  # duplicate suppressed at the edge
    assert [e.result_id for e in delivered] == ["r-1"]


def test_dedup_at_every_node():
    delivered = []
    edge, fog, cloud = build_chain(delivered.append)
    entity = transform(_raw({}), Layer.EDGE)
    fog.relay(entity)  # arrives via fog first (e.g. a fog-local producer)
    assert edge.relay(entity) is True  # edge hasn't seen it, forwards again
    assert len(delivered) == 1  # but fog/cloud suppress the duplicate


def test_relay_direction_is_enforced():
    delivered = []
    cloud = RelayNode(Layer.CLOUD, sink=delivered.append)
    with pytest.raises(ValueError):
        RelayNode(Layer.EDGE, downstream=cloud)  # must pass through fog
    fog = RelayNode(Layer.FOG, downstream=cloud)
    with pytest.raises(ValueError):
        RelayNode(Layer.FOG, downstream=fog)
    with pytest.raises(ValueError):
        RelayNode(Layer.CLOUD, downstream=fog, sink=delivered.append)
    with pytest.raises(ValueError):
        RelayNode(Layer.EDGE)


def test_thousand_entities_from_three_sources_arrive_once_each():
    delivered = []
    edge, fog, cloud = build_chain(delivered.append)
    sources = ["cam1", "cam2", "mic1"]
    expected = set()
    for i in range(1000):
        source = sources[i % 3]
        raw = _raw(
            {"label": "x", "n": i},
            result_id=f"{source}-{i}",
            source=source,
            when=Timestamp(i),
        )
        edge.process_raw(raw)
        # At-least-once upstream: every third raw is re-processed.
        if i % 3 == 0:
            edge.process_raw(raw)
        expected.add(f"{source}-{i}")
    assert len(delivered) == 1000
    assert {e.result_id for e in delivered} == expected


def test_per_source_order_preserved_through_chain():
    delivered = []
    edge, _, _ = build_chain(delivered.append)
    for i in range(50):
        for source in ("cam1", "cam2"):
            edge.process_raw(
                _raw({}, result_id=f"{source}-{i}", source=source, when=Timestamp(i))
            )
    for source in ("cam1", "cam2"):
        ids = [e.result_id for e in delivered if e.av_source_id == source]
        assert ids == [f"{source}-{i}" for i in range(50)]


def test_topic_per_kind_mapping():
    assert TOPIC_BY_KIND[SdmKind.MEDIA_EVENT] == "sdm.mediaevent"
    assert TOPIC_BY_KIND[SdmKind.ALERT] == "sdm.alert"
    assert TOPIC_BY_KIND[SdmKind.ANOMALY] == "sdm.anomaly"
