"""Domain types: timestamp grammar, canonical serialization, round-trips."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citybus.model import (
    InvalidRange,
    Layer,
    MalformedDocument,
    MalformedTimestamp,
    MissingMandatoryField,
    NonUtcOffset,
    RawInferenceResult,
    SdmEntity,
    SdmKind,
    TimeSpan,
    Timestamp,
    Verification,
    VerificationMessage,
    canonical_json_bytes,
    deserialize_entity,
    deserialize_raw,
    parse_timestamp,
    serialize_entity,
    serialize_raw,
)

# -- timestamps ---------------------------------------------------------------


def test_parse_basic_instant():
    ts = parse_timestamp("2023-01-15T10:30:00Z")
    assert ts.epoch_ms == 1673778600000
    assert ts.isoformat() == "2023-01-15T10:30:00.000Z"


def test_parse_with_milliseconds():
    ts = parse_timestamp("2023-01-15T10:30:00.250Z")
    assert ts.epoch_ms == 1673778600250


def test_parse_rejects_offsets():
    with pytest.raises(NonUtcOffset):
        parse_timestamp("2023-01-15T10:30:00+02:00")
    # Explicit +00:00 is also an offset form, only trailing Z is canonical.
    with pytest.raises(NonUtcOffset):
        parse_timestamp("2023-01-15T10:30:00+00:00")


def test_parse_rejects_bad_calendar_fields():
    with pytest.raises(MalformedTimestamp):
        parse_timestamp("2023-13-40T99:00:00Z")


def test_parse_rejects_garbage_and_excess_precision():
    for text in ("", "not-a-time", "2023-01-15 10:30:00Z", "2023-01-15T10:30:00.123456Z"):
        with pytest.raises(MalformedTimestamp):
            parse_timestamp(text)


def test_canonical_form_round_trips_identically():
    for text in (
        "2023-01-15T10:30:00.000Z",
        "1969-12-31T23:59:59.999Z",
        "0001-01-01T00:00:00.000Z",
        "9999-12-31T23:59:59.999Z",
    ):
        assert parse_timestamp(text).isoformat() == text


@given(st.integers(min_value=-62135596800000, max_value=253402300799999))
def test_isoformat_parse_round_trip(ms):
    ts = Timestamp(ms)
    assert parse_timestamp(ts.isoformat()) == ts


@given(
    st.integers(min_value=-62135596800000, max_value=253402300799999),
    st.integers(min_value=-62135596800000, max_value=253402300799999),
)
def test_string_order_matches_instant_order(a, b):
    ta, tb = Timestamp(a), Timestamp(b)
    assert (ta.isoformat() < tb.isoformat()) == (ta < tb)


def test_timespan_rejects_inverted_range():
    with pytest.raises(InvalidRange):
        TimeSpan(Timestamp(10), Timestamp(5))
    assert TimeSpan(Timestamp(5), Timestamp(5)).duration_ms == 0


# -- entities -----------------------------------------------------------------


def _entity(**overrides):
    base = dict(
        kind=SdmKind.MEDIA_EVENT,
        result_id="r-1",
        av_source_id="cam1",
        when=Timestamp(1000),
        origin_layer=Layer.EDGE,
    )
    base.update(overrides)
    return SdmEntity(**base)


def test_minimal_entity_round_trips():
    e = _entity()
    assert deserialize_entity(serialize_entity(e)) == e


def test_timespan_entity_round_trips():
    e = _entity(when=TimeSpan(Timestamp(1000), Timestamp(2500)))
    back = deserialize_entity(serialize_entity(e))
    assert back == e
    assert back.when.start.epoch_ms == 1000 and back.when.end.epoch_ms == 2500


def test_attribute_insertion_order_is_canonicalized():
    a = _entity(attributes={"zeta": 1, "alpha": {"y": 2, "x": 3}})
    b = _entity(attributes={"alpha": {"x": 3, "y": 2}, "zeta": 1})
    assert serialize_entity(a) == serialize_entity(b)


def test_deserialize_truncated_bytes():
    data = serialize_entity(_entity())
    with pytest.raises(MalformedDocument):
        deserialize_entity(data[: len(data) // 2])
    with pytest.raises(MalformedDocument):
        deserialize_entity(b"\xff\xfe\x00")


def test_deserialize_missing_result_id():
    data = canonical_json_bytes(
        {
            "kind": "Alert",
            "av_source_id": "cam1",
            "when": {"at": "2023-01-15T10:30:00.000Z"},
            "origin_layer": "edge",
        }
    )
    with pytest.raises(MissingMandatoryField) as err:
        deserialize_entity(data)
    assert err.value.field_name == "result_id"


def test_entity_constructor_enforces_mandatory_fields():
    with pytest.raises(MissingMandatoryField):
        _entity(result_id="")
    with pytest.raises(MissingMandatoryField):
        _entity(av_source_id="")


def test_attribute_tree_rejects_null_and_nan():
    with pytest.raises(MalformedDocument):
        _entity(attributes={"x": None})
    with pytest.raises(MalformedDocument):
        _entity(attributes={"x": float("nan")})
    with pytest.raises(MalformedDocument):
        _entity(attributes={"x": object()})


def test_verification_message_requires_definite_verdict():
    with pytest.raises(ValueError):
        VerificationMessage("r-1", Verification.UNSET, "user", Timestamp(0))
    v = VerificationMessage("r-1", Verification.REJECTED, "user", Timestamp(0))
    assert v.verdict is Verification.REJECTED


def test_raw_round_trip():
    raw = RawInferenceResult(
        result_id="a-1",
        av_source_id="cam1",
        producer="detector-0",
        when=Timestamp(123),
        payload={"label": "bicycle", "confidence": 0.8},
    )
    assert deserialize_raw(serialize_raw(raw)) == raw


# -- property: round-trip over generated entities ------------------------------

_scalars = st.one_of(
    st.text(st.characters(codec="utf-8"), max_size=20),
    st.integers(min_value=-(2**53), max_value=2**53),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.booleans(),
)

_trees = st.recursive(
    _scalars,
    lambda children: st.one_of(
        st.lists(children, max_size=4),
        st.dictionaries(st.text(st.characters(codec="utf-8"), max_size=10), children, max_size=4),
    ),
    max_leaves=12,
)

_timestamps = st.integers(min_value=0, max_value=4_000_000_000_000).map(Timestamp)

_whens = st.one_of(
    _timestamps,
    st.tuples(_timestamps, st.integers(min_value=0, max_value=10_000_000)).map(
        lambda t: TimeSpan(t[0], Timestamp(t[0].epoch_ms + t[1]))
    ),
)

_entities = st.builds(
    SdmEntity,
    kind=st.sampled_from(list(SdmKind)),
    result_id=st.text(st.characters(codec="utf-8"), min_size=1, max_size=24),
    av_source_id=st.text(st.characters(codec="utf-8"), min_size=1, max_size=24),
    when=_whens,
    origin_layer=st.sampled_from(list(Layer)),
    verified=st.sampled_from(list(Verification)),
    attributes=st.dictionaries(
        st.text(st.characters(codec="utf-8"), max_size=10), _trees, max_size=5
    ),
)


@settings(max_examples=200, deadline=None)
@given(_entities)
def test_entity_round_trip_property(entity):
    data = serialize_entity(entity)
    again = deserialize_entity(data)
    assert again == entity
    # Canonical form is stable under re-serialization.
    assert serialize_entity(again) == data
