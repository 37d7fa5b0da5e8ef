"""Fast invariant suite behind the ``selfcheck`` CLI subcommand.

Each check is a small self-contained probe of one module contract; the
runner prints one PASS/FAIL line per check. The full acceptance suite in
tests/ runs the heavyweight versions.
"""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from . import kernels
from .attention import AttentionParams, Embeddings, cmfa_weights, layer_forward
from .dataset import esie_windows, segment_stream, select_max_event_segment
from .events import EventStream, SensorGeometry, load_events, save_events, slice_window
from .gradcheck import grad_check
from .metrics import auc, failure_rate
from .representations import build_frame, build_timesurface, build_voxel
from .simulator import FrameSequence, SimulatorConfig, frames_to_events
from .ssmer import BranchOutputs, cosine_distance, multi_rep_loss, synthetic_windows


def _random_stream(rng, width=32, height=24, n=500) -> EventStream:
    geometry = SensorGeometry(width=width, height=height)
    t = np.sort(rng.integers(0, 100_000, n)).astype(np.int64)
    x = rng.integers(0, width, n).astype(np.int32)
    y = rng.integers(0, height, n).astype(np.int32)
    p = rng.choice(np.array([-1, 1], np.int8), n)
    return EventStream(geometry, t, x, y, p)


def check_event_roundtrip() -> None:
    rng = np.random.default_rng(11)
    stream = _random_stream(rng)
    with tempfile.TemporaryDirectory() as tmp:
        for fmt in ("csv", "bin"):
            path = Path(tmp) / f"events.{fmt}"
            save_events(stream, path, fmt)
            again = load_events(path, fmt)
            assert np.array_equal(stream.t, again.t)
            assert np.array_equal(stream.x, again.x)
            assert np.array_equal(stream.y, again.y)
            assert np.array_equal(stream.p, again.p)


def check_window_slicing() -> None:
    rng = np.random.default_rng(12)
    stream = _random_stream(rng)
    window = slice_window(stream, 20_000, 30_000)
    again = slice_window(window, 20_000, 30_000)
    assert np.array_equal(window.t, again.t)
    total = sum(len(slice_window(stream, k * 25_000, 25_000)) for k in range(4))
    assert total == len(slice_window(stream, 0, 100_000))


def check_representation_mass() -> None:
    rng = np.random.default_rng(13)
    stream = _random_stream(rng)
    frame = build_frame(stream)
    assert int(frame.grid.sum()) == len(stream)
    voxel = build_voxel(stream, 5)
    assert abs(float(voxel.grid.sum(dtype=np.float64)) - float(stream.p.sum())) <= 1e-9 * len(stream)
    surface = build_timesurface(stream, int(stream.t[-1]), tau=10_000.0)
    assert surface.grid.min() >= 0.0 and surface.grid.max() <= 1.0


def check_simulator_counts() -> None:
    flat = FrameSequence(frames=np.full((4, 3, 3), 0.5), fps=25.0)
    assert len(frames_to_events(flat, SimulatorConfig())) == 0
    lo = 0.2
    hi = (lo + 1e-3) * math.exp(0.65) - 1e-3
    ramp = FrameSequence(frames=np.stack([np.full((2, 2), lo), np.full((2, 2), hi)]), fps=25.0)
    stream = frames_to_events(ramp, SimulatorConfig(threshold=0.2))
    assert len(stream) == 3 * 4 and np.all(stream.p == 1)


def check_dataset_protocols() -> None:
    rng = np.random.default_rng(14)
    geometry = SensorGeometry(width=16, height=16)
    t = np.sort(rng.integers(0, 10_400_000, 4000)).astype(np.int64)
    t[0], t[-1] = 0, 10_400_000
    stream = EventStream(
        geometry, t,
        rng.integers(0, 16, 4000).astype(np.int32),
        rng.integers(0, 16, 4000).astype(np.int32),
        rng.choice(np.array([-1, 1], np.int8), 4000),
    )
    starts = [w[0] for w in esie_windows(stream)]
    expected = [100_000 + k * 1_000_000 for k in range(5)]
    expected += [5_300_000 + k * 1_000_000 for k in range(5)]
    assert starts == expected
    index = segment_stream(stream, 25.0)
    assert all(dt == 40_000 for _, dt in index.windows)
    assert index.counts[select_max_event_segment(index)] == max(index.counts)


def check_attention_identities() -> None:
    emb = Embeddings.random(5, 7, 16, seed=3)
    params = AttentionParams.random(16, 4, seed=4)
    for head in range(4):
        rows = cmfa_weights(emb, params, head).sum(axis=1)
        assert np.allclose(rows, 1.0, atol=1e-6)
    t_prev = np.random.default_rng(5).standard_normal((5, 16))
    out = layer_forward(t_prev, emb, AttentionParams.zeros(16, 4),
                        value_source="rgb_features")
    assert np.allclose(out.tokens_out, t_prev, atol=0.0)
    square = Embeddings.random(5, 5, 16, seed=6)
    out = layer_forward(t_prev, square, AttentionParams.zeros(16, 4))
    assert np.allclose(out.tokens_out, t_prev, atol=0.0)


def check_gradients() -> None:
    assert grad_check("cmfa_block", seed=1) < 1e-4


def check_loss_identities() -> None:
    v = np.array([0.3, -1.2, 0.5])
    assert abs(cosine_distance(v, v) + 1.0) < 1e-12
    aligned = BranchOutputs(z1=v, z2=2 * v, p1=2 * v, p2=v)
    assert abs(multi_rep_loss([aligned] * 3) + 3.0) < 1e-12


def check_metric_identities() -> None:
    assert auc([0.05]) == 0.5
    assert failure_rate([0.05, 0.1, 0.15]) == 100.0 / 3


def check_backend_agreement() -> None:
    if "numba" not in kernels.BACKENDS:
        return
    rng = np.random.default_rng(15)
    stream = _random_stream(rng)
    span = float(stream.t[-1] - stream.t[0])
    tstar = 4.0 * (stream.t - stream.t[0]) / span
    a = kernels.BACKENDS["numpy"]["voxel_accumulate"](
        tstar, stream.x, stream.y, stream.p, 5, 24, 32)
    b = kernels.BACKENDS["numba"]["voxel_accumulate"](
        tstar, stream.x, stream.y, stream.p, 5, 24, 32)
    assert np.array_equal(a, b)


def check_toy_windows() -> None:
    windows = synthetic_windows(4, seed=9)
    assert len(windows) == 4 and all(len(w) > 0 for w in windows)


CHECKS = [
    ("event stream round-trip", check_event_roundtrip),
    ("window slicing partition", check_window_slicing),
    ("representation mass conservation", check_representation_mass),
    ("simulator crossing counts", check_simulator_counts),
    ("dataset selection protocols", check_dataset_protocols),
    ("attention identities", check_attention_identities),
    ("gradient verification", check_gradients),
    ("loss identities", check_loss_identities),
    ("metric identities", check_metric_identities),
    ("kernel backend agreement", check_backend_agreement),
    ("synthetic toy windows", check_toy_windows),
]


def run_selfcheck(out) -> bool:
    """Run every check, print one line each; True iff all passed."""
    all_ok = True
    for name, fn in CHECKS:
        try:
            fn()
            out.write(f"PASS {name}\n")
        except Exception as exc:  # report and continue
            all_ok = False
            out.write(f"FAIL {name}: {exc}\n")
    return all_ok
