"""Core data types for structured inference results and their canonical wire form.

Wire format: UTF-8 JSON with lexicographically sorted keys and no whitespace,
so equal values always serialize to equal bytes regardless of how the source
document was assembled. Timestamps are ISO-8601 UTC with a trailing "Z" and
exactly three fractional digits (millisecond precision).

Entity document layout::

    {
      "kind": "MediaEvent" | "Alert" | "Anomaly",
      "result_id": str,
      "av_source_id": str,
      "when": {"at": ts} | {"start": ts, "end": ts},
      "origin_layer": "edge" | "fog" | "cloud",
      "verified": "unset" | "confirmed" | "rejected",
      "attributes": {...}
    }

Attribute trees may contain strings, numbers, booleans, lists, and nested
objects; null, NaN, and infinities are rejected.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Mapping, Union


class MalformedTimestamp(ValueError):
    """Text is not a supported ISO-8601 UTC timestamp."""


class NonUtcOffset(ValueError):
    """Timestamp carries an explicit UTC offset instead of the trailing Z."""


class MalformedDocument(ValueError):
    """Byte sequence is not a valid canonical document."""


class MissingMandatoryField(ValueError):
    """A document or value lacks a mandatory field."""

    def __init__(self, field_name: str):
        super().__init__(f"missing mandatory field: {field_name}")
        self.field_name = field_name


class InvalidRange(ValueError):
    """A time range whose start lies after its end."""


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_TS_MIN_MS = -62135596800000  # 0001-01-01T00:00:00.000Z
_TS_MAX_MS = 253402300799999  # 9999-12-31T23:59:59.999Z

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})"
    r"(?:\.(\d{1,3}))?(Z|[+-]\d{2}:\d{2})$"
)


@dataclass(frozen=True, order=True)
class Timestamp:
    """Absolute UTC instant with millisecond precision."""

    epoch_ms: int

    def __post_init__(self):
        if not _TS_MIN_MS <= self.epoch_ms <= _TS_MAX_MS:
            raise MalformedTimestamp(f"instant out of range: {self.epoch_ms} ms")

    def isoformat(self) -> str:
        dt = _EPOCH + timedelta(milliseconds=self.epoch_ms)
        return (
            f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}"
            f"T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}"
            f".{dt.microsecond // 1000:03d}Z"
        )

    def __str__(self) -> str:
        return self.isoformat()


def parse_timestamp(text: str) -> Timestamp:
    """Parse an ISO-8601 UTC instant.

    Only the trailing-Z form is accepted; any explicit offset (including
    "+00:00") raises NonUtcOffset. At most three fractional digits are
    supported -- finer precision than the millisecond model is rejected.
    """
    m = _TS_RE.match(text)
    if m is None:
        raise MalformedTimestamp(f"not an ISO-8601 UTC timestamp: {text!r}")
    if m.group(8) != "Z":
        raise NonUtcOffset(f"offset form not accepted: {text!r}")
    try:
        dt = datetime(
            int(m.group(1)), int(m.group(2)), int(m.group(3)),
            int(m.group(4)), int(m.group(5)), int(m.group(6)),
            tzinfo=timezone.utc,
        )
    except ValueError as exc:
        raise MalformedTimestamp(f"invalid calendar fields: {text!r}") from exc
    ms = int((m.group(7) or "").ljust(3, "0"))
    epoch_s = (dt - _EPOCH) // timedelta(seconds=1)
    return Timestamp(epoch_s * 1000 + ms)


@dataclass(frozen=True)
class TimeSpan:
    """Closed time interval; start must not lie after end."""

    start: Timestamp
    end: Timestamp

    def __post_init__(self):
        if self.start > self.end:
            raise InvalidRange(f"span start {self.start} after end {self.end}")

    @property
    def duration_ms(self) -> int:
        return self.end.epoch_ms - self.start.epoch_ms


When = Union[Timestamp, TimeSpan]


class SdmKind(Enum):
    MEDIA_EVENT = "MediaEvent"
    ALERT = "Alert"
    ANOMALY = "Anomaly"


class Layer(Enum):
    EDGE = "edge"
    FOG = "fog"
    CLOUD = "cloud"

    @property
    def rank(self) -> int:
        return _LAYER_RANK[self]


_LAYER_RANK = {Layer.EDGE: 0, Layer.FOG: 1, Layer.CLOUD: 2}


class Verification(Enum):
    UNSET = "unset"
    CONFIRMED = "confirmed"
    REJECTED = "rejected"


def _validate_tree(value: Any, path: str) -> None:
    if isinstance(value, bool) or isinstance(value, str):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            raise MalformedDocument(f"non-finite number at {path}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _validate_tree(item, f"{path}[{i}]")
        return
    if isinstance(value, Mapping):
        for key, item in value.items():
            if not isinstance(key, str):
                raise MalformedDocument(f"non-string key at {path}: {key!r}")
            _validate_tree(item, f"{path}.{key}")
        return
    raise MalformedDocument(f"unsupported value at {path}: {type(value).__name__}")


@dataclass(frozen=True)
class RawInferenceResult:
    """Inference result as emitted by an analytics component.

    `result_id` is expected to be unique within a run and `av_source_id`
    non-empty; both are enforced where raw results enter the relay
    (see relay.transform), not here, so wire-level inputs can be inspected.
    """

    result_id: str
    av_source_id: str
    producer: str
    when: When
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        _validate_tree(self.payload, "payload")


@dataclass(frozen=True)
class SdmEntity:
    """Structured inference result mapped onto one of the three entity kinds."""

    kind: SdmKind
    result_id: str
    av_source_id: str
    when: When
    origin_layer: Layer
    verified: Verification = Verification.UNSET
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.result_id:
            raise MissingMandatoryField("result_id")
        if not self.av_source_id:
            raise MissingMandatoryField("av_source_id")
        _validate_tree(self.attributes, "attributes")

    @property
    def primary_timestamp(self) -> Timestamp:
        """Index timestamp: the instant itself, or the start of a span."""
        return self.when.start if isinstance(self.when, TimeSpan) else self.when


@dataclass(frozen=True)
class VerificationMessage:
    """User verdict on a previously published inference result."""

    result_id: str
    verdict: Verification
    verifier: str
    at: Timestamp

    def __post_init__(self):
        if self.verdict is Verification.UNSET:
            raise ValueError("verdict must be confirmed or rejected")


def _reject_constant(name: str):
    raise MalformedDocument(f"non-finite JSON constant: {name}")


def canonical_json_bytes(doc: Any) -> bytes:
    """Serialize a document tree to canonical bytes (sorted keys, no spaces)."""
    return json.dumps(
        doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def _load_document(data: bytes) -> dict:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedDocument("not valid UTF-8") from exc
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("top-level value must be an object")
    return doc


def _when_to_doc(when: When) -> dict:
    if isinstance(when, TimeSpan):
        return {"start": when.start.isoformat(), "end": when.end.isoformat()}
    return {"at": when.isoformat()}


def _when_from_doc(doc: Any) -> When:
    if not isinstance(doc, dict):
        raise MalformedDocument("'when' must be an object")
    try:
        if "at" in doc:
            return parse_timestamp(doc["at"])
        if "start" in doc and "end" in doc:
            return TimeSpan(parse_timestamp(doc["start"]), parse_timestamp(doc["end"]))
    except (MalformedTimestamp, NonUtcOffset, InvalidRange, TypeError) as exc:
        raise MalformedDocument(f"bad 'when' value: {exc}") from exc
    raise MalformedDocument("'when' must carry 'at' or 'start'/'end'")


def _require(doc: dict, name: str) -> Any:
    if name not in doc:
        raise MissingMandatoryField(name)
    return doc[name]


def _require_str(doc: dict, name: str) -> str:
    value = _require(doc, name)
    if not isinstance(value, str):
        raise MalformedDocument(f"'{name}' must be a string")
    return value


def _enum_from_doc(enum_cls, value: Any, name: str):
    try:
        return enum_cls(value)
    except ValueError as exc:
        raise MalformedDocument(f"bad '{name}' value: {value!r}") from exc


def entity_to_document(e: SdmEntity) -> dict:
    return {
        "kind": e.kind.value,
        "result_id": e.result_id,
        "av_source_id": e.av_source_id,
        "when": _when_to_doc(e.when),
        "origin_layer": e.origin_layer.value,
        "verified": e.verified.value,
        "attributes": dict(e.attributes),
    }


def entity_from_document(doc: dict) -> SdmEntity:
    attributes = doc.get("attributes", {})
    if not isinstance(attributes, dict):
        raise MalformedDocument("'attributes' must be an object")
    return SdmEntity(
        kind=_enum_from_doc(SdmKind, _require(doc, "kind"), "kind"),
        result_id=_require_str(doc, "result_id"),
        av_source_id=_require_str(doc, "av_source_id"),
        when=_when_from_doc(_require(doc, "when")),
        origin_layer=_enum_from_doc(Layer, _require(doc, "origin_layer"), "origin_layer"),
        verified=_enum_from_doc(Verification, doc.get("verified", "unset"), "verified"),
        attributes=attributes,
    )


def serialize_entity(e: SdmEntity) -> bytes:
    """Canonical bytes; a pure function of entity content."""
    return canonical_json_bytes(entity_to_document(e))


def deserialize_entity(data: bytes) -> SdmEntity:
    """Inverse of serialize_entity on its image."""
    return entity_from_document(_load_document(data))


def raw_to_document(raw: RawInferenceResult) -> dict:
    return {
        "result_id": raw.result_id,
        "av_source_id": raw.av_source_id,
        "producer": raw.producer,
        "when": _when_to_doc(raw.when),
        "payload": dict(raw.payload),
    }


def raw_from_document(doc: dict) -> RawInferenceResult:
    payload = doc.get("payload", {})
    if not isinstance(payload, dict):
        raise MalformedDocument("'payload' must be an object")
    return RawInferenceResult(
        result_id=_require_str(doc, "result_id"),
        av_source_id=_require_str(doc, "av_source_id"),
        producer=_require_str(doc, "producer"),
        when=_when_from_doc(_require(doc, "when")),
        payload=payload,
    )


def serialize_raw(raw: RawInferenceResult) -> bytes:
    return canonical_json_bytes(raw_to_document(raw))


def deserialize_raw(data: bytes) -> RawInferenceResult:
    return raw_from_document(_load_document(data))
