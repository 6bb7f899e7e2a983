"""Per-layer message broker with hierarchical topics and wildcard filters.

Topic names are "/"-joined segment paths. Filters use MQTT-style wildcards:
"+" matches exactly one level, a trailing "#" matches the remaining levels
(including none). Raw inference results use the documented convention
``inference/<layer>/<producer>/<av_source_id>``.

The broker keeps no history: a new subscription sees only messages published
after it was registered. Delivery is FIFO per (publisher, topic) for every
matching subscription and exactly-once per (message, matching subscription).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator


class InvalidTopic(ValueError):
    """Topic or filter text violates the naming grammar."""


class DuplicateSubscription(ValueError):
    """Subscriber already holds an identical filter."""


_RESERVED = ("/", "+", "#")


@dataclass(frozen=True)
class TopicName:
    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments:
            raise InvalidTopic("topic must have at least one segment")
        for seg in self.segments:
            if not seg:
                raise InvalidTopic("empty topic segment")
            if any(ch in seg for ch in _RESERVED):
                raise InvalidTopic(f"reserved character in segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> "TopicName":
        return cls(tuple(text.split("/")))

    def __str__(self) -> str:
        return "/".join(self.segments)


@dataclass(frozen=True)
class TopicFilter:
    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments:
            raise InvalidTopic("filter must have at least one segment")
        for i, seg in enumerate(self.segments):
            if seg == "#":
                if i != len(self.segments) - 1:
                    raise InvalidTopic("'#' allowed only as the final segment")
            elif seg == "+":
                pass
            else:
                if not seg:
                    raise InvalidTopic("empty filter segment")
                if any(ch in seg for ch in _RESERVED):
                    raise InvalidTopic(f"reserved character in segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> "TopicFilter":
        return cls(tuple(text.split("/")))

    def __str__(self) -> str:
        return "/".join(self.segments)


def matches(filt: TopicFilter, topic: TopicName) -> bool:
    """True iff the filter matches the topic under +/# wildcard semantics."""
    fsegs, tsegs = filt.segments, topic.segments
    for i, fseg in enumerate(fsegs):
        if fseg == "#":
            return True  # matches the remaining levels, including none
        if i >= len(tsegs):
            return False
        if fseg != "+" and fseg != tsegs[i]:
            return False
    return len(fsegs) == len(tsegs)


@dataclass(frozen=True)
class Delivery:
    topic: TopicName
    payload: bytes


@dataclass(frozen=True)
class Subscription:
    handle: int
    subscriber: str
    filter: TopicFilter


class EdgeBroker:
    """Single in-process broker; commands are serialized through one lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscriptions: list[Subscription] = []
        self._queues: dict[str, list[Delivery]] = {}
        self._next_handle = 0
        self.delivery_log: list[tuple[str, str]] = []  # (subscriber, topic)

    def subscribe(self, filt: TopicFilter, subscriber: str) -> Subscription:
        """Register a filter; future matching publishes are enqueued, past ones are not."""
        with self._lock:
            for sub in self._subscriptions:
                if sub.subscriber == subscriber and sub.filter == filt:
                    raise DuplicateSubscription(
                        f"{subscriber!r} already subscribed to {filt}"
                    )
            sub = Subscription(self._next_handle, subscriber, filt)
            self._next_handle += 1
            self._subscriptions.append(sub)
            self._queues.setdefault(subscriber, [])
            return sub

    def publish(self, topic: TopicName, payload: bytes) -> int:
        """Enqueue to every matching subscription; returns the match count."""
        with self._lock:
            delivered = 0
            for sub in self._subscriptions:
                if matches(sub.filter, topic):
                    self._queues[sub.subscriber].append(Delivery(topic, payload))
                    self.delivery_log.append((sub.subscriber, str(topic)))
                    delivered += 1
            return delivered

    def poll(self, subscriber: str, max_messages: int | None = None) -> list[Delivery]:
        """Dequeue pending deliveries for a subscriber, in arrival order."""
        with self._lock:
            queue = self._queues.get(subscriber, [])
            if max_messages is None or max_messages >= len(queue):
                taken, rest = queue, []
            else:
                taken, rest = queue[:max_messages], queue[max_messages:]
            self._queues[subscriber] = rest
            return taken

    def pending(self, subscriber: str) -> int:
        with self._lock:
            return len(self._queues.get(subscriber, []))

    def subscriptions(self) -> Iterator[Subscription]:
        with self._lock:
            return iter(list(self._subscriptions))
