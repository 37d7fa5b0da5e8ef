"""Deterministic video-frames-to-events conversion (ideal threshold core).

Each pixel keeps a log-luminance reference R, initialized from frame 0 via
L = ln(I + log_eps). Between consecutive (optionally linearly interpolated)
frames L varies linearly in time; every time |L(t) - R| reaches the
contrast threshold C the pixel emits an event at the linear crossing time
with polarity sign(L - R) and R steps by exactly C toward L. The reference
is tracked as an integer step count, so repeated updates never drift.

Noise, refractory periods, and bandwidth filtering are deliberately not
modeled; the deterministic core is the part with analytic crossing counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError, ValidationError
from .events import EventStream, SensorGeometry

DEFAULT_CONTRAST = 0.2
DEFAULT_LOG_EPS = 1e-3


@dataclass(frozen=True)
class FrameSequence:
    """Ordered luminance frames (values in [0, 1]) at a fixed frame rate."""

    frames: np.ndarray  # (n, H, W) float64
    fps: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.frames, np.float64)
        if arr.ndim != 3 or arr.shape[0] < 2:
            raise ParameterError(
                f"need at least 2 frames of shape (H, W), got array of shape {arr.shape}"
            )
        if self.fps <= 0:
            raise ParameterError(f"fps must be positive, got {self.fps}")
        if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError("luminance values must be finite and in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "frames", arr)

    @property
    def geometry(self) -> SensorGeometry:
        return SensorGeometry(width=self.frames.shape[2], height=self.frames.shape[1])

    @property
    def duration_us(self) -> float:
        return (self.frames.shape[0] - 1) * 1e6 / self.fps


@dataclass(frozen=True)
class SimulatorConfig:
    threshold: float = DEFAULT_CONTRAST
    log_eps: float = DEFAULT_LOG_EPS
    interpolation_factor: int = 1

    def __post_init__(self):
        if self.threshold <= 0:
            raise ParameterError(f"contrast threshold must be positive, got {self.threshold}")
        if self.log_eps <= 0:
            raise ParameterError(f"log_eps must be positive, got {self.log_eps}")
        if self.interpolation_factor < 1:
            raise ParameterError(
                f"interpolation factor must be >= 1, got {self.interpolation_factor}"
            )


def interpolate_frames(seq: FrameSequence, factor: int) -> FrameSequence:
    """Insert factor-1 linearly blended frames per gap; fps scales by factor."""
    if factor < 1:
        raise ParameterError(f"interpolation factor must be >= 1, got {factor}")
    if factor == 1:
        return seq
    n, h, w = seq.frames.shape
    out = np.empty(((n - 1) * factor + 1, h, w), np.float64)
    for i in range(n - 1):
        a, b = seq.frames[i], seq.frames[i + 1]
        for j in range(factor):
            alpha = j / factor
            out[i * factor + j] = (1.0 - alpha) * a + alpha * b
    out[-1] = seq.frames[-1]
    return FrameSequence(frames=out, fps=seq.fps * factor)


def frames_to_events(seq: FrameSequence, cfg: SimulatorConfig = SimulatorConfig()) -> EventStream:
    """Run the ideal-threshold model over a frame sequence.

    The output stream is globally sorted by (t, y, x, polarity); identical
    inputs produce bit-identical streams.
    """
    if cfg.interpolation_factor > 1:
        seq = interpolate_frames(seq, cfg.interpolation_factor)
    n, h, w = seq.frames.shape
    log_l = np.log(seq.frames.reshape(n, h * w) + cfg.log_eps)
    base = log_l[0].copy()
    nref = np.zeros(h * w, np.int64)
    frame_dt = 1e6 / seq.fps

    ts, pixs, pols = [], [], []
    for k in range(1, n):
        t_ev, pix_ev, pol_ev = kernels.segment_crossings(
            log_l[k - 1], log_l[k], base, nref,
            (k - 1) * frame_dt, k * frame_dt, cfg.threshold,
        )
        if t_ev.shape[0]:
            ts.append(t_ev)
            pixs.append(pix_ev)
            pols.append(pol_ev)

    geometry = seq.geometry
    if not ts:
        return EventStream(geometry)
    t = np.concatenate(ts)
    pix = np.concatenate(pixs)
    p = np.concatenate(pols)
    x = (pix % w).astype(np.int32)
    y = (pix // w).astype(np.int32)
    order = np.lexsort((p, x, y, t))
    return EventStream(geometry, t[order], x[order], y[order], p[order])
