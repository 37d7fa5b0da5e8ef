import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evlign.dataset import (
    WindowIndex,
    esie_protocol,
    esie_windows,
    segment_stream,
    select_max_event_segment,
    select_top_k_segments,
)
from evlign.errors import ParameterError, ProtocolError
from evlign.events import EventStream, SensorGeometry, count_events

from conftest import make_stream


def stream_spanning(rng, span_us, n=2000, width=16, height=16, t_first=0):
    geometry = SensorGeometry(width=width, height=height)
    t = np.sort(rng.integers(0, span_us + 1, n)).astype(np.int64)
    t[0], t[-1] = 0, span_us
    return EventStream(
        geometry, t + t_first,
        rng.integers(0, width, n).astype(np.int32),
        rng.integers(0, height, n).astype(np.int32),
        rng.choice(np.array([-1, 1], np.int8), n),
    )


class TestSegmentStream:
    def test_100ms_at_25fps_gives_three_40ms_windows(self, rng):
        stream = stream_spanning(rng, 100_000)
        index = segment_stream(stream, 25.0)
        assert len(index) == 3
        assert all(dt == 40_000 for _, dt in index.windows)
        assert [t0 for t0, _ in index.windows] == [0, 40_000, 80_000]

    def test_empty_stream_empty_index(self):
        index = segment_stream(EventStream(SensorGeometry(4, 4)), 25.0)
        assert len(index) == 0

    def test_counts_partition_total(self, rng):
        stream = stream_spanning(rng, 123_456, n=700)
        index = segment_stream(stream, 25.0)
        assert sum(index.counts) == count_events(stream)

    def test_windows_align_to_first_event(self, rng):
        stream = stream_spanning(rng, 50_000, t_first=7_777)
        index = segment_stream(stream, 25.0)
        assert index.windows[0][0] == 7_777

    def test_bad_fps(self, rng):
        with pytest.raises(ParameterError):
            segment_stream(make_stream(rng), 0.0)


class TestSelection:
    def test_max_tie_breaks_to_earliest(self):
        index = WindowIndex(windows=((0, 10), (10, 10), (20, 10), (30, 10)),
                            counts=(3, 9, 9, 1))
        assert select_max_event_segment(index) == 1

    def test_single_window(self):
        index = WindowIndex(windows=((0, 10),), counts=(7,))
        assert select_max_event_segment(index) == 0

    def test_max_matches_linear_scan(self, rng):
        for _ in range(200):
            counts = rng.integers(0, 50, int(rng.integers(1, 30)))
            index = WindowIndex(
                windows=tuple((int(i * 10), 10) for i in range(len(counts))),
                counts=tuple(int(c) for c in counts),
            )
            # linear-scan oracle
            best, best_count = 0, counts[0]
            for i, c in enumerate(counts):
                if c > best_count:
                    best, best_count = i, c
            assert select_max_event_segment(index) == best

    def test_empty_index_rejected(self):
        with pytest.raises(ParameterError):
            select_max_event_segment(WindowIndex(windows=(), counts=()))

    def test_top_k_tie_by_earlier_window(self):
        index = WindowIndex(windows=((0, 10), (10, 10), (20, 10), (30, 10)),
                            counts=(5, 2, 8, 8))
        assert select_top_k_segments(index, 2) == [2, 3]

    def test_top_k_larger_than_index(self):
        index = WindowIndex(windows=((0, 10), (10, 10)), counts=(1, 2))
        assert select_top_k_segments(index, 10) == [1, 0]

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 100_000), k=st.integers(1, 12))
    def test_top_k_matches_sort_oracle(self, seed, k):
        rng = np.random.default_rng(seed)
        counts = [int(c) for c in rng.integers(0, 20, int(rng.integers(1, 25)))]
        index = WindowIndex(
            windows=tuple((int(i * 10), 10) for i in range(len(counts))),
            counts=tuple(counts),
        )
        oracle = [i for i, _ in sorted(enumerate(counts), key=lambda ic: (-ic[1], ic[0]))][:k]
        assert select_top_k_segments(index, k) == oracle

    def test_selection_invariant_under_time_translation(self, rng):
        stream = stream_spanning(rng, 200_000, n=900)
        shifted = EventStream(stream.geometry, stream.t + 123_456,
                              stream.x, stream.y, stream.p)
        a = segment_stream(stream, 25.0)
        b = segment_stream(shifted, 25.0)
        assert a.counts == b.counts
        assert select_max_event_segment(a) == select_max_event_segment(b)
        assert select_top_k_segments(a, 3) == select_top_k_segments(b, 3)


class TestEsieProtocol:
    def test_10p4s_recording_start_times(self, rng):
        stream = stream_spanning(rng, 10_400_000, n=5000)
        windows = esie_windows(stream)
        # interval arithmetic: halves of 5.2 s, centered 5 s leaves 0.1 s margin
        expected = [100_000 + k * 1_000_000 for k in range(5)]
        expected += [5_300_000 + k * 1_000_000 for k in range(5)]
        assert [t0 for t0, _ in windows] == expected
        assert all(dt == 40_000 for _, dt in windows)

    def test_exactly_10s_zero_margin(self, rng):
        stream = stream_spanning(rng, 10_000_000, n=5000)
        windows = esie_windows(stream)
        expected = [k * 1_000_000 for k in range(5)]
        expected += [5_000_000 + k * 1_000_000 for k in range(5)]
        assert [t0 for t0, _ in windows] == expected

    def test_9s_recording_rejected(self, rng):
        with pytest.raises(ProtocolError, match="10 s"):
            esie_windows(stream_spanning(rng, 9_000_000))

    def test_empty_stream_rejected(self):
        with pytest.raises(ProtocolError):
            esie_windows(EventStream(SensorGeometry(4, 4)))

    def test_returns_ten_nonoverlapping_streams(self, rng):
        stream = stream_spanning(rng, 11_000_000, n=8000)
        slices = esie_protocol(stream)
        windows = esie_windows(stream)
        assert len(slices) == 10
        for (t0, dt), sl in zip(windows, slices):
            assert sl.geometry == stream.geometry
            if len(sl):
                assert sl.t[0] >= t0 and sl.t[-1] < t0 + dt
        for (a0, adt), (b0, _) in zip(windows, windows[1:]):
            assert a0 + adt <= b0

    def test_offset_recording_follows_first_event(self, rng):
        base = stream_spanning(rng, 10_400_000, n=3000)
        shifted = EventStream(base.geometry, base.t + 500_000, base.x, base.y, base.p)
        starts = [t0 for t0, _ in esie_windows(shifted)]
        assert starts[0] == 600_000
