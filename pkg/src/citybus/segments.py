"""AV data plane: source discovery, stream segmentation, archive, and clip retrieval.

Streams arrive as timestamped byte chunks; each chunk's bytes belong to the
instant of its timestamp. A trailing empty chunk marks the stream end. Bytes
are partitioned at wall-clock boundaries every `interval_s` seconds from the
stream start, so segment spans tile the stream with no gaps or overlaps and
concatenating all segments reproduces the input exactly.

Archive layout (bit-exact): ``<root>/<source_id>/<seq>.seg`` plus a per-source
index file ``<root>/<source_id>/index.txt`` with one line per segment,
``seq,start_ms,end_ms,length_bytes``. Registry files carry one source per
line, ``source_id,kind,rate_bytes_per_s,active``.

Retrieval trims the first and last overlapping segment proportionally by time
(bytes are assumed uniform-rate within one segment) and reports a manifest of
contributing segments alongside the spliced bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from citybus._kernels import fnv1a64
from citybus.model import InvalidRange, TimeSpan, Timestamp
from citybus.rng import SplitMix64


class RegistryUnavailable(RuntimeError):
    """Registry cannot be read or is not parseable."""


class NonMonotonicTimestamps(ValueError):
    """Chunk timestamps decreased within one stream."""


class UnknownSource(KeyError):
    pass


class NoDataInRange(LookupError):
    """No archived segment overlaps the requested timeframe."""


class SourceKind(Enum):
    CAMERA = "camera"
    MICROPHONE = "microphone"


@dataclass(frozen=True)
class AVSource:
    source_id: str
    kind: SourceKind
    nominal_rate: int  # bytes per second
    active: bool


@dataclass(frozen=True)
class Chunk:
    ts_ms: int
    data: bytes


@dataclass(frozen=True)
class SegmentFile:
    source_id: str
    span: TimeSpan
    data: bytes
    seq: int


@dataclass(frozen=True)
class SegmentEntry:
    seq: int
    span: TimeSpan
    length: int
    path: Path | None = None


@dataclass(frozen=True)
class ClipRequest:
    source_id: str
    span: TimeSpan


@dataclass(frozen=True)
class ClipManifest:
    source_id: str
    served: TimeSpan
    parts: tuple[tuple[int, TimeSpan], ...]  # (seq, contributed span)


# -- registry -----------------------------------------------------------------


def parse_registry(lines: Iterable[str]) -> list[AVSource]:
    sources = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise RegistryUnavailable(f"registry line {lineno}: expected 4 fields")
        source_id, kind, rate, active = (f.strip() for f in fields)
        try:
            sources.append(
                AVSource(
                    source_id=source_id,
                    kind=SourceKind(kind),
                    nominal_rate=int(rate),
                    active=active.lower() in ("true", "1", "yes"),
                )
            )
        except ValueError as exc:
            raise RegistryUnavailable(f"registry line {lineno}: {exc}") from exc
    return sources


def discover_sources(registry_path: str | os.PathLike) -> list[AVSource]:
    """All active sources from a file-backed registry."""
    try:
        with open(registry_path, "r", encoding="utf-8") as fh:
            sources = parse_registry(fh)
    except OSError as exc:
        raise RegistryUnavailable(f"cannot read registry: {exc}") from exc
    return [s for s in sources if s.active]


# -- segmentation ----------------------------------------------------------------


def ingest_and_segment(
    source_id: str,
    chunks: Sequence[Chunk],
    interval_s: float,
    end_ms: int | None = None,
) -> list[SegmentFile]:
    """Partition a chunk stream at fixed boundaries from the stream start.

    A trailing empty chunk sets the stream end; otherwise `end_ms` is used,
    defaulting to one millisecond past the final chunk. Every input byte lands
    in exactly one segment; spans tile [start, end) and only the final span
    may be shorter than the interval.
    """
    if interval_s <= 0:
        raise ValueError("segment interval must be positive")
    last_ts = None
    for chunk in chunks:
        if last_ts is not None and chunk.ts_ms < last_ts:
            raise NonMonotonicTimestamps(
                f"{source_id}: chunk at {chunk.ts_ms} ms after {last_ts} ms"
            )
        last_ts = chunk.ts_ms
    data_chunks = list(chunks)
    if data_chunks and not data_chunks[-1].data:
        end_marker = data_chunks.pop()
        if end_ms is None:
            end_ms = end_marker.ts_ms
    data_chunks = [c for c in data_chunks if c.data]
    if not data_chunks:
        return []
    start_ms = data_chunks[0].ts_ms
    if end_ms is None:
        end_ms = data_chunks[-1].ts_ms + 1
    if end_ms <= data_chunks[-1].ts_ms:
        raise InvalidRange(
            f"{source_id}: stream end {end_ms} ms not after last chunk "
            f"at {data_chunks[-1].ts_ms} ms"
        )
    interval_ms = round(interval_s * 1000)
    buckets: dict[int, list[bytes]] = {}
    for chunk in data_chunks:
        buckets.setdefault((chunk.ts_ms - start_ms) // interval_ms, []).append(chunk.data)
    last_bucket = (end_ms - 1 - start_ms) // interval_ms
    segments = []
    for seq in range(last_bucket + 1):
        lo = start_ms + seq * interval_ms
        hi = min(start_ms + (seq + 1) * interval_ms, end_ms)
        segments.append(
            SegmentFile(
                source_id=source_id,
                span=TimeSpan(Timestamp(lo), Timestamp(hi)),
                data=b"".join(buckets.get(seq, [])),
                seq=seq,
            )
        )
    return segments


# -- archive ---------------------------------------------------------------------


class SegmentIndex:
    """Time-ordered catalog of archived segments per source."""

    def __init__(self):
        self._entries: dict[str, list[SegmentEntry]] = {}

    def add(self, source_id: str, entry: SegmentEntry) -> None:
        entries = self._entries.setdefault(source_id, [])
        if entries:
            prev = entries[-1]
            if entry.seq != prev.seq + 1:
                raise ValueError(
                    f"{source_id}: segment seq must be dense, "
                    f"got {entry.seq} after {prev.seq}"
                )
            if entry.span.start != prev.span.end:
                raise ValueError(f"{source_id}: segment spans must be contiguous")
        elif entry.seq != 0:
            raise ValueError(f"{source_id}: first segment must have seq 0")
        entries.append(entry)

    def sources(self) -> list[str]:
        return list(self._entries)

    def entries(self, source_id: str) -> list[SegmentEntry]:
        if source_id not in self._entries:
            raise UnknownSource(source_id)
        return list(self._entries[source_id])


class SegmentArchive:
    """Filesystem-backed segment archive rooted at one directory."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.index = SegmentIndex()

    def archive_segments(self, segments: Iterable[SegmentFile]) -> list[SegmentEntry]:
        written = []
        for seg in segments:
            source_dir = self.root / seg.source_id
            source_dir.mkdir(parents=True, exist_ok=True)
            path = source_dir / f"{seg.seq}.seg"
            path.write_bytes(seg.data)
            entry = SegmentEntry(seg.seq, seg.span, len(seg.data), path)
            self.index.add(seg.source_id, entry)
            # seq 0 starts a fresh stream: truncate any stale index.
            mode = "w" if seg.seq == 0 else "a"
            with open(source_dir / "index.txt", mode, encoding="utf-8") as fh:
                fh.write(
                    f"{seg.seq},{seg.span.start.epoch_ms},"
                    f"{seg.span.end.epoch_ms},{len(seg.data)}\n"
                )
            written.append(entry)
        return written

    @classmethod
    def load(cls, root: str | os.PathLike) -> "SegmentArchive":
        archive = cls(root)
        if not archive.root.is_dir():
            return archive
        for source_dir in sorted(p for p in archive.root.iterdir() if p.is_dir()):
            index_file = source_dir / "index.txt"
            if not index_file.is_file():
                continue
            for line in index_file.read_text(encoding="utf-8").splitlines():
                seq, start_ms, end_ms, length = (int(f) for f in line.split(","))
                archive.index.add(
                    source_dir.name,
                    SegmentEntry(
                        seq,
                        TimeSpan(Timestamp(start_ms), Timestamp(end_ms)),
                        length,
                        source_dir / f"{seq}.seg",
                    ),
                )
        return archive

    def segment_bytes(self, source_id: str, seq: int) -> bytes:
        return (self.root / source_id / f"{seq}.seg").read_bytes()


def _slice_offsets(entry: SegmentEntry, lo_ms: int, hi_ms: int) -> tuple[int, int]:
    """Byte range for [lo_ms, hi_ms) under uniform rate within the segment."""
    span_ms = entry.span.duration_ms
    if span_ms == 0:
        return 0, entry.length
    start = entry.length * (lo_ms - entry.span.start.epoch_ms) // span_ms
    end = entry.length * (hi_ms - entry.span.start.epoch_ms) // span_ms
    return start, end


def retrieve_clip(
    archive: SegmentArchive, request: ClipRequest
) -> tuple[ClipManifest, bytes]:
    """Compile a unified clip for the requested timeframe.

    Selects all segments overlapping the request, trims the boundary segments
    proportionally by time, and splices the bytes; the manifest lists each
    contributing (seq, span) and the span actually served.
    """
    entries = archive.index.entries(request.source_id)
    a, b = request.span.start.epoch_ms, request.span.end.epoch_ms
    overlapping = [
        e for e in entries
        if e.span.start.epoch_ms <= b and e.span.end.epoch_ms > a
    ]
    if not overlapping:
        raise NoDataInRange(
            f"{request.source_id}: no archived data in "
            f"[{request.span.start}, {request.span.end}]"
        )
    parts = []
    pieces = []
    for entry in overlapping:
        lo = max(a, entry.span.start.epoch_ms)
        hi = min(b, entry.span.end.epoch_ms)
        start, end = _slice_offsets(entry, lo, hi)
        data = archive.segment_bytes(request.source_id, entry.seq)
        pieces.append(data[start:end])
        parts.append((entry.seq, TimeSpan(Timestamp(lo), Timestamp(hi))))
    served = TimeSpan(parts[0][1].start, parts[-1][1].end)
    manifest = ClipManifest(
        source_id=request.source_id, served=served, parts=tuple(parts)
    )
    return manifest, b"".join(pieces)


# -- synthetic sources -----------------------------------------------------------


def synthetic_stream(
    source: AVSource,
    seed: int,
    duration_s: float,
    chunk_ms: int = 250,
    start_ms: int = 0,
) -> list[Chunk]:
    """Deterministic pseudorandom stream for a source: same (source, seed)
    always yields identical bytes. Ends with an empty end-marker chunk."""
    rng = SplitMix64(fnv1a64(source.source_id.encode("utf-8")) ^ seed)
    duration_ms = round(duration_s * 1000)
    chunks = []
    t = 0
    while t < duration_ms:
        step = min(chunk_ms, duration_ms - t)
        size = source.nominal_rate * step // 1000
        chunks.append(Chunk(start_ms + t, rng.bytes(size)))
        t += step
    chunks.append(Chunk(start_ms + duration_ms, b""))
    return chunks


# -- stream files (CLI surface) ----------------------------------------------------


def write_stream_file(path: str | os.PathLike, chunks: Iterable[Chunk]) -> None:
    """Binary chunk stream: repeated [u64 ts_ms BE][u32 length BE][bytes]."""
    with open(path, "wb") as fh:
        for chunk in chunks:
            fh.write(chunk.ts_ms.to_bytes(8, "big", signed=True))
            fh.write(len(chunk.data).to_bytes(4, "big"))
            fh.write(chunk.data)


def read_stream_file(path: str | os.PathLike) -> list[Chunk]:
    chunks = []
    with open(path, "rb") as fh:
        while True:
            header = fh.read(12)
            if not header:
                break
            if len(header) < 12:
                raise ValueError(f"{path}: truncated chunk header")
            ts_ms = int.from_bytes(header[:8], "big", signed=True)
            length = int.from_bytes(header[8:], "big")
            data = fh.read(length)
            if len(data) < length:
                raise ValueError(f"{path}: truncated chunk body")
            chunks.append(Chunk(ts_ms, data))
    return chunks
