"""Windowing and selection protocols for building evaluation frames.

``segment_stream`` tiles a recording into frame-rate-sized windows aligned
to the first event; the ``select_*`` helpers pick windows by event count
(ties always resolve to the earliest window so dataset builds are
reproducible); ``esie_protocol`` extracts the ten 40 ms evaluation windows
from a >= 10 s recording.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ProtocolError
from .events import EventStream, slice_window

ESIE_MIN_DURATION_US = 10_000_000
ESIE_SEGMENT_US = 1_000_000
ESIE_INTERVAL_US = 5_000_000
ESIE_WINDOW_US = 40_000


@dataclass(frozen=True)
class WindowIndex:
    """Non-overlapping (t0, dt) windows with their event counts."""

    windows: tuple[tuple[int, int], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.windows) != len(self.counts):
            raise ParameterError("windows and counts must be parallel")

    def __len__(self) -> int:
        return len(self.windows)


def segment_stream(stream: EventStream, fps: float) -> WindowIndex:
    """Consecutive windows of 1e6/fps microseconds covering [t_first, t_last].

    The final partial window is retained; an empty stream yields an empty
    index. Windows align to the first event, not to absolute time 0.
    """
    if fps <= 0:
        raise ParameterError(f"fps must be positive, got {fps}")
    if len(stream) == 0:
        return WindowIndex(windows=(), counts=())
    dt = int(round(1e6 / fps))
    t_first = int(stream.t[0])
    span = int(stream.t[-1]) - t_first
    n = span // dt + 1
    edges = t_first + dt * np.arange(n + 1, dtype=np.int64)
    idx = np.searchsorted(stream.t, edges, side="left")
    counts = np.diff(idx)
    windows = tuple((int(edges[i]), dt) for i in range(n))
    return WindowIndex(windows=windows, counts=tuple(int(c) for c in counts))


def select_max_event_segment(index: WindowIndex) -> int:
    """Window id with the highest count; ties go to the earliest t0."""
    if len(index) == 0:
        raise ParameterError("cannot select from an empty window index")
    return int(np.argmax(np.asarray(index.counts)))


def select_top_k_segments(index: WindowIndex, k: int) -> list[int]:
    """Ids of the k highest-count windows, descending count, ties by t0."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    counts = np.asarray(index.counts)
    order = np.lexsort((np.arange(len(index)), -counts))
    return [int(i) for i in order[:k]]


def esie_windows(stream: EventStream) -> list[tuple[int, int]]:
    """(t0, dt) for the ten E-SIE evaluation windows, chronological.

    The recording is split into two halves; each half contributes the first
    40 ms of the five 1 s segments of its centered 5 s interval.
    """
    if len(stream) == 0:
        raise ProtocolError("empty stream; need a recording of at least 10 s")
    t_first = int(stream.t[0])
    span = int(stream.t[-1]) - t_first
    if span < ESIE_MIN_DURATION_US:
        raise ProtocolError(
            f"recording spans {span / 1e6:.3f} s; protocol needs at least 10 s"
        )
    out = []
    for half in range(2):
        half_start = t_first + int(round(half * span / 2))
        half_len = span / 2
        margin = (half_len - ESIE_INTERVAL_US) / 2
        interval_start = half_start + int(round(margin))
        for seg in range(5):
            out.append((interval_start + seg * ESIE_SEGMENT_US, ESIE_WINDOW_US))
    return out


def esie_protocol(stream: EventStream) -> list[EventStream]:
    """The ten 40 ms E-SIE evaluation windows as event streams."""
    return [slice_window(stream, t0, dt) for t0, dt in esie_windows(stream)]
