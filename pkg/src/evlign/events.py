"""Event data model, stream I/O, validation, and time-window slicing.

Events are timestamped polarity spikes ``(t, x, y, p)`` with integer
microsecond timestamps and polarity in {-1, +1}. Streams store events as
columnar numpy arrays (the layout every consumer kernel wants) but still
behave as ordered sequences of :class:`Event`.

On-disk formats:

* CSV: header ``t_us,x,y,p`` with p in {0, 1} (0 maps to -1 in memory).
* Binary ``EVS1``: magic bytes, u32 LE width, u32 LE height, u64 LE event
  count, then packed little-endian records (u64 t_us, u16 x, u16 y, u8 p).
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ParameterError, ParseError, ValidationError

EVS_MAGIC = b"EVS1"
_CSV_HEADER = "t_us,x,y,p"
_RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel-array extent of the producing sensor. DAVIS346-style default."""

    width: int = 346
    height: int = 260

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"geometry must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Event:
    """One polarity spike: time in microseconds, pixel, sign."""

    t: int
    x: int
    y: int
    polarity: int

    def __post_init__(self):
        if self.t < 0:
            raise ValidationError(f"negative timestamp {self.t}")
        if self.polarity not in (-1, 1):
            raise ValidationError(f"polarity must be +1 or -1, got {self.polarity}")


@dataclass(frozen=True)
class EventStream:
    """Immutable, time-sorted sequence of events with sensor geometry.

    Arrays are validated and frozen at construction; streams are safe to
    share across threads. ``resorted`` records that the source file was
    unsorted and a stable sort was applied on load.
    """

    geometry: SensorGeometry
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.int8))
    resorted: bool = False

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, np.int64)
        x = np.ascontiguousarray(self.x, np.int32)
        y = np.ascontiguousarray(self.y, np.int32)
        p = np.ascontiguousarray(self.p, np.int8)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise ValidationError("event columns must be 1-D arrays of equal length")
        _validate_columns(t, x, y, p, self.geometry)
        for name, arr in (("t", t), ("x", x), ("y", y), ("p", p)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.t.shape[0]

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    @property
    def duration(self) -> int:
        """t_last - t_first in microseconds (0 for streams with < 2 events)."""
        if len(self) < 2:
            return 0
        return int(self.t[-1] - self.t[0])


def _validate_columns(t, x, y, p, geometry: SensorGeometry) -> None:
    if t.size == 0:
        return
    if t[0] < 0:
        raise ValidationError(f"negative timestamp at event index 0: {t[0]}")
    if np.any(t[1:] < t[:-1]):
        idx = int(np.argmax(t[1:] < t[:-1]) + 1)
        raise ValidationError(f"timestamps decrease at event index {idx}")
    bad = (x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise ValidationError(
            f"event index {idx} at ({x[idx]},{y[idx]}) outside "
            f"{geometry.width}x{geometry.height} geometry"
        )
    if np.any((p != 1) & (p != -1)):
        idx = int(np.argmax((p != 1) & (p != -1)))
        raise ValidationError(f"event index {idx} has polarity {p[idx]}, want +1/-1")


def _sorted_stream(geometry, t, x, y, p) -> EventStream:
    """Stable-sort columns by t if needed, warning when the source was unsorted."""
    resorted = False
    if t.size and np.any(t[1:] < t[:-1]):
        order = np.argsort(t, kind="stable")
        t, x, y, p = t[order], x[order], y[order], p[order]
        resorted = True
        warnings.warn("event source was unsorted; applied stable sort by t")
    return EventStream(geometry, t, x, y, p, resorted=resorted)


def load_events(path: str | os.PathLike, format: str | None = None) -> EventStream:
    """Load and validate an event stream from ``csv`` or ``bin`` (EVS1).

    ``format=None`` infers from the extension. Unsorted sources are stably
    sorted by timestamp with a warning (stream.resorted is set).
    """
    fmt = format or (
        "bin" if str(path).endswith((".bin", ".evs")) else "csv"
    )
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "bin":
        return _load_bin(path)
    raise ParameterError(f"unknown event format {fmt!r}; expected 'csv' or 'bin'")


def _load_csv(path, geometry: SensorGeometry | None = None) -> EventStream:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _CSV_HEADER:
        raise ParseError(f"{path}: line 1: expected header {_CSV_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"{path}: line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            rows.append(tuple(int(v) for v in parts))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if rows:
        arr = np.asarray(rows, np.int64)
        t, x, y, p01 = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    else:
        t = x = y = p01 = np.empty(0, np.int64)
    if np.any((p01 != 0) & (p01 != 1)):
        bad = int(np.argmax((p01 != 0) & (p01 != 1)))
        raise ParseError(f"{path}: line {bad + 2}: polarity must be 0 or 1, got {p01[bad]}")
    geom = geometry or SensorGeometry()
    p = (2 * p01 - 1).astype(np.int8)
    return _sorted_stream(geom, t, x.astype(np.int32), y.astype(np.int32), p)


def _load_bin(path) -> EventStream:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:4] != EVS_MAGIC:
        raise ParseError(f"{path}: offset 0: missing {EVS_MAGIC!r} magic")
    width = int(np.frombuffer(blob, "<u4", 1, 4)[0])
    height = int(np.frombuffer(blob, "<u4", 1, 8)[0])
    count = int(np.frombuffer(blob, "<u8", 1, 12)[0])
    payload = blob[20:]
    expected = count * _RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise ParseError(
            f"{path}: offset 20: payload is {len(payload)} bytes, "
            f"expected {expected} for {count} records"
        )
    rec = np.frombuffer(payload, _RECORD_DTYPE, count)
    p = (2 * rec["p"].astype(np.int16) - 1).astype(np.int8)
    if np.any(rec["t"] > np.iinfo(np.int64).max):
        raise ParseError(f"{path}: timestamp exceeds signed 64-bit range")
    return _sorted_stream(
        SensorGeometry(width, height),
        rec["t"].astype(np.int64),
        rec["x"].astype(np.int32),
        rec["y"].astype(np.int32),
        p,
    )


def save_events(stream: EventStream, path: str | os.PathLike, format: str | None = None) -> None:
    """Write a stream in ``csv`` or ``bin`` format (round-trips bit-exactly)."""
    fmt = format or ("bin" if str(path).endswith((".bin", ".evs")) else "csv")
    if fmt == "csv":
        with open(path, "w", encoding="ascii") as fh:
            fh.write(_CSV_HEADER + "\n")
            p01 = (stream.p > 0).astype(np.int8)
            for i in range(len(stream)):
                fh.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{p01[i]}\n")
    elif fmt == "bin":
        rec = np.empty(len(stream), _RECORD_DTYPE)
        rec["t"] = stream.t.astype(np.uint64)
        rec["x"] = stream.x.astype(np.uint16)
        rec["y"] = stream.y.astype(np.uint16)
        rec["p"] = (stream.p > 0).astype(np.uint8)
        header = EVS_MAGIC + np.asarray(
            [stream.geometry.width, stream.geometry.height], "<u4"
        ).tobytes() + np.asarray([len(stream)], "<u8").tobytes()
        with open(path, "wb") as fh:
            fh.write(header + rec.tobytes())
    else:
        raise ParameterError(f"unknown event format {fmt!r}; expected 'csv' or 'bin'")


def slice_window(stream: EventStream, t0: int, dt: int) -> EventStream:
    """Events with t0 <= t < t0 + dt, order preserved, geometry copied."""
    if dt <= 0:
        raise ParameterError(f"window duration must be positive, got {dt}")
    lo = int(np.searchsorted(stream.t, t0, side="left"))
    hi = int(np.searchsorted(stream.t, t0 + dt, side="left"))
    return EventStream(
        stream.geometry, stream.t[lo:hi], stream.x[lo:hi], stream.y[lo:hi], stream.p[lo:hi]
    )


def count_events(stream: EventStream) -> int:
    return len(stream)


def concat_streams(a: EventStream, b: EventStream) -> EventStream:
    """Concatenate two streams sharing geometry (b must not precede a)."""
    if a.geometry != b.geometry:
        raise ValidationError("cannot concatenate streams with different geometries")
    return EventStream(
        a.geometry,
        np.concatenate([a.t, b.t]),
        np.concatenate([a.x, b.x]),
        np.concatenate([a.y, b.y]),
        np.concatenate([a.p, b.p]),
    )
