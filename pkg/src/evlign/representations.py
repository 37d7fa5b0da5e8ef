"""Dense representations of an event window: frame, voxel grid, time surface.

The three builders are pure functions of an immutable window and accumulate
in stream order, so identical inputs give bit-identical grids.

* frame: per-polarity count image, channel 0 = positive, channel 1 = negative.
* voxel: B temporal bins; each event at normalized time
  t* = (B-1)(t - t_first)/(t_last - t_first) deposits
  polarity * max(0, 1 - |b - t*|) into bin b (all mass to bin 0 when the
  window has a single distinct timestamp). Signed mass is conserved.
* time surface: exponential decay exp(-(t_ref - t_last)/tau) of each
  pixel/polarity's most recent event; pixels with no events stay 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError
from .events import EventStream

DEFAULT_VOXEL_BINS = 5


@dataclass(frozen=True)
class FrameRep:
    grid: np.ndarray  # (2, H, W) int64 counts
    t0: int
    dt: int


@dataclass(frozen=True)
class VoxelRep:
    # float64 in memory so the signed-mass invariant holds at 1e-9 * count;
    # serialization (the f32 tensor format) is where single precision applies
    grid: np.ndarray  # (B, H, W) float64
    bins: int
    t0: int
    dt: int


@dataclass(frozen=True)
class TimeSurfaceRep:
    grid: np.ndarray  # (2, H, W) float64 in [0, 1]
    t_ref: int
    tau: float


def _window_bounds(window: EventStream) -> tuple[int, int]:
    if len(window) == 0:
        return 0, 0
    return int(window.t[0]), int(window.t[-1] - window.t[0])


def build_frame(window: EventStream) -> FrameRep:
    """Per-pixel, per-polarity event counts over the window."""
    g = window.geometry
    grid = kernels.frame_counts(window.x, window.y, window.p, g.height, g.width)
    t0, dt = _window_bounds(window)
    return FrameRep(grid=grid, t0=t0, dt=dt)


def build_voxel(window: EventStream, bins: int = DEFAULT_VOXEL_BINS) -> VoxelRep:
    """Temporally bilinear signed voxel grid with ``bins`` bins."""
    if bins < 1:
        raise ParameterError(f"voxel bin count must be >= 1, got {bins}")
    g = window.geometry
    if len(window) == 0:
        grid = np.zeros((bins, g.height, g.width), np.float64)
    else:
        t_first = window.t[0]
        t_last = window.t[-1]
        span = float(t_last - t_first)
        if span == 0.0 or bins == 1:
            tstar = np.zeros(len(window), np.float64)
        else:
            tstar = (bins - 1) * (window.t - t_first).astype(np.float64) / span
        grid = kernels.voxel_accumulate(
            tstar, window.x, window.y, window.p, bins, g.height, g.width
        )
    t0, dt = _window_bounds(window)
    return VoxelRep(grid=grid, bins=bins, t0=t0, dt=dt)


def build_timesurface(window: EventStream, t_ref: int, tau: float) -> TimeSurfaceRep:
    """Exponential-decay surface of each pixel/polarity's latest event age."""
    if tau <= 0:
        raise ParameterError(f"decay constant tau must be positive, got {tau}")
    g = window.geometry
    if len(window) and t_ref < window.t[-1]:
        raise ParameterError(
            f"t_ref {t_ref} precedes last event timestamp {window.t[-1]}"
        )
    last = kernels.last_timestamps(window.t, window.x, window.y, window.p, g.height, g.width)
    grid = np.zeros((2, g.height, g.width), np.float64)
    seen = last >= 0
    grid[seen] = np.exp(-(t_ref - last[seen]).astype(np.float64) / float(tau))
    return TimeSurfaceRep(grid=grid, t_ref=t_ref, tau=float(tau))


def default_tau(dt: int) -> float:
    """Window-relative decay default: a third of the window duration."""
    return dt / 3.0


def scale_unit(grid: np.ndarray) -> np.ndarray:
    """Min-max scale a grid into [0, 1] for network input.

    Kept separate from the builders so their mass invariants stay testable.
    A constant grid maps to all zeros.
    """
    g = np.asarray(grid, np.float64)
    lo, hi = g.min(), g.max()
    if hi == lo:
        return np.zeros_like(g)
    return (g - lo) / (hi - lo)
