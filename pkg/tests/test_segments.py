"""Stream segmentation, archive layout, and clip retrieval."""

import random

import pytest

from citybus.model import TimeSpan, Timestamp
from citybus.segments import (
    AVSource,
    Chunk,
    ClipRequest,
    NoDataInRange,
    NonMonotonicTimestamps,
    RegistryUnavailable,
    SegmentArchive,
    SourceKind,
    UnknownSource,
    discover_sources,
    ingest_and_segment,
    parse_registry,
    read_stream_file,
    retrieve_clip,
    synthetic_stream,
    write_stream_file,
)


def _src(source_id="cam1", rate=100_000, active=True, kind=SourceKind.CAMERA):
    return AVSource(source_id, kind, rate, active)


# -- registry -----------------------------------------------------------------


def test_discover_filters_inactive(tmp_path):
    registry = tmp_path / "registry.txt"
    registry.write_text(
        "cam1,camera,1000000,true\n"
        "mic1,microphone,64000,true\n"
        "cam2,camera,1000000,false\n"
    )
    sources = discover_sources(registry)
    assert [s.source_id for s in sources] == ["cam1", "mic1"]
    assert sources[1].kind is SourceKind.MICROPHONE


def test_empty_registry(tmp_path):
    registry = tmp_path / "registry.txt"
    registry.write_text("# no sources yet\n")
    assert discover_sources(registry) == []


def test_missing_registry_file(tmp_path):
    with pytest.raises(RegistryUnavailable):
        discover_sources(tmp_path / "absent.txt")


def test_malformed_registry_line():
    with pytest.raises(RegistryUnavailable):
        parse_registry(["cam1,camera,fast,true"])
    with pytest.raises(RegistryUnavailable):
        parse_registry(["cam1,camera,1000"])


# -- segmentation ----------------------------------------------------------------


def test_boundary_arithmetic_35s_stream():
    chunks = [Chunk(t * 1000, bytes([t % 251]) * 8) for t in range(35)]
    chunks.append(Chunk(35_000, b""))  # end marker
    segments = ingest_and_segment("s", chunks, 10.0)
    spans = [(s.span.start.epoch_ms, s.span.end.epoch_ms) for s in segments]
    assert spans == [(0, 10_000), (10_000, 20_000), (20_000, 30_000), (30_000, 35_000)]
    assert [s.seq for s in segments] == [0, 1, 2, 3]


def test_stream_shorter_than_interval_is_single_segment():
    chunks = [Chunk(0, b"abc"), Chunk(500, b"def"), Chunk(1000, b"")]
    segments = ingest_and_segment("s", chunks, 10.0)
    assert len(segments) == 1
    assert segments[0].data == b"abcdef"
    assert segments[0].span == TimeSpan(Timestamp(0), Timestamp(1000))


def test_segment_concatenation_reproduces_stream():
    source = _src(rate=1_000_000)
    stream = synthetic_stream(source, seed=9, duration_s=6.0)
    original = b"".join(c.data for c in stream)
    segments = ingest_and_segment(source.source_id, stream, 1.0)
    assert len(segments) == 6
    assert b"".join(s.data for s in segments) == original
    assert all(len(s.data) == 1_000_000 for s in segments)


def test_non_monotonic_timestamps_rejected():
    with pytest.raises(NonMonotonicTimestamps):
        ingest_and_segment("s", [Chunk(100, b"a"), Chunk(50, b"b")], 1.0)


def test_empty_stream_yields_no_segments():
    assert ingest_and_segment("s", [], 1.0) == []
    assert ingest_and_segment("s", [Chunk(0, b"")], 1.0) == []


def test_spans_tile_randomized():
    rng = random.Random(5)
    for _ in range(50):
        rate = rng.choice([1000, 3000, 64_000])
        duration = rng.uniform(0.3, 12.0)
        interval = rng.choice([0.25, 0.5, 1.0, 3.0, 10.0])
        source = _src(rate=rate)
        stream = synthetic_stream(source, rng.randrange(1 << 32), duration, chunk_ms=rng.choice([50, 130, 250]))
        segments = ingest_and_segment(source.source_id, stream, interval)
        original = b"".join(c.data for c in stream)
        assert b"".join(s.data for s in segments) == original
        assert [s.seq for s in segments] == list(range(len(segments)))
        interval_ms = round(interval * 1000)
        for i, seg in enumerate(segments):
            if i + 1 < len(segments):
                assert seg.span.duration_ms == interval_ms
                assert seg.span.end == segments[i + 1].span.start
            else:
                assert 0 < seg.span.duration_ms <= interval_ms


# -- archive layout ---------------------------------------------------------------


def test_archive_layout_is_bit_exact(tmp_path):
    chunks = [Chunk(0, b"aaaa"), Chunk(1000, b"bbbb"), Chunk(2000, b"")]
    segments = ingest_and_segment("cam1", chunks, 1.0)
    archive = SegmentArchive(tmp_path)
    archive.archive_segments(segments)
    assert (tmp_path / "cam1" / "0.seg").read_bytes() == b"aaaa"
    assert (tmp_path / "cam1" / "1.seg").read_bytes() == b"bbbb"
    assert (tmp_path / "cam1" / "index.txt").read_text() == (
        "0,0,1000,4\n1,1000,2000,4\n"
    )


def test_archive_load_round_trip(tmp_path):
    source = _src(rate=10_000)
    stream = synthetic_stream(source, 3, 4.0)
    archive = SegmentArchive(tmp_path)
    archive.archive_segments(ingest_and_segment(source.source_id, stream, 1.0))
    again = SegmentArchive.load(tmp_path)
    assert again.index.entries(source.source_id) == archive.index.entries(source.source_id)


# -- retrieval ----------------------------------------------------------------------


def _archived(tmp_path, duration_s=35.0, interval_s=10.0, rate=1000):
    source = _src(rate=rate)
    stream = synthetic_stream(source, 11, duration_s, chunk_ms=100)
    archive = SegmentArchive(tmp_path)
    segments = ingest_and_segment(source.source_id, stream, interval_s)
    archive.archive_segments(segments)
    return archive, b"".join(c.data for c in stream)


def test_request_within_one_segment(tmp_path):
    archive, _ = _archived(tmp_path)
    request = ClipRequest("cam1", TimeSpan(Timestamp(3000), Timestamp(7000)))
    manifest, data = retrieve_clip(archive, request)
    assert [p[0] for p in manifest.parts] == [0]
    assert manifest.served == request.span
    assert len(data) == 4 * 1000  # 4 s of a 1 kB/s source


def test_request_spanning_two_segments(tmp_path):
    archive, original = _archived(tmp_path)
    request = ClipRequest("cam1", TimeSpan(Timestamp(12_000), Timestamp(28_000)))
    manifest, data = retrieve_clip(archive, request)
    assert [(p[0], p[1].start.epoch_ms, p[1].end.epoch_ms) for p in manifest.parts] == [
        (1, 12_000, 20_000),
        (2, 20_000, 28_000),
    ]
    assert data in original  # contiguous substring of the stream
    assert len(data) == 16_000  # 16 s at 1 kB/s


def test_request_before_any_data(tmp_path):
    chunks = [Chunk(50_000, b"xyz"), Chunk(51_000, b"")]
    archive = SegmentArchive(tmp_path)
    archive.archive_segments(ingest_and_segment("cam1", chunks, 10.0))
    with pytest.raises(NoDataInRange):
        retrieve_clip(
            archive, ClipRequest("cam1", TimeSpan(Timestamp(0), Timestamp(10_000)))
        )


def test_unknown_source(tmp_path):
    archive, _ = _archived(tmp_path)
    with pytest.raises(UnknownSource):
        retrieve_clip(
            archive, ClipRequest("nope", TimeSpan(Timestamp(0), Timestamp(1)))
        )


def test_clip_coverage_randomized(tmp_path):
    rng = random.Random(21)
    archive, original = _archived(tmp_path, duration_s=30.0, rate=2000)
    for _ in range(40):
        a = rng.randrange(0, 30_000)
        b = rng.randrange(a, 30_001)
        manifest, data = retrieve_clip(
            archive, ClipRequest("cam1", TimeSpan(Timestamp(a), Timestamp(b)))
        )
        assert data in original
        assert manifest.served.start.epoch_ms >= 0
        assert manifest.served.end.epoch_ms <= 30_000
        # Contributions are contiguous in time.
        for (s1, span1), (s2, span2) in zip(manifest.parts, manifest.parts[1:]):
            assert s2 == s1 + 1
            assert span2.start == span1.end


# -- synthetic streams and stream files ------------------------------------------------


def test_synthetic_stream_is_deterministic():
    source = _src()
    a = synthetic_stream(source, 77, 2.0)
    b = synthetic_stream(source, 77, 2.0)
    assert a == b
    c = synthetic_stream(source, 78, 2.0)
    assert a != c
    other = synthetic_stream(_src(source_id="cam2"), 77, 2.0)
    assert [ch.data for ch in a] != [ch.data for ch in other]


def test_stream_file_round_trip(tmp_path):
    source = _src(rate=5000)
    stream = synthetic_stream(source, 4, 1.5)
    path = tmp_path / "cam1.stream"
    write_stream_file(path, stream)
    assert read_stream_file(path) == stream
