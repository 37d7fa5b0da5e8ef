"""Single entry point for all pipelines.

Exit codes: 0 success, 1 usage error, 2 validation/numeric error. Data goes
to files or stdout; the config echo and diagnostics go to stderr. Every
randomized subcommand takes an explicit seed, so any run is reproducible
from its printed config line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .attention import AttentionParams, Embeddings, layer_forward
from .dataset import esie_windows, segment_stream, select_top_k_segments
from .errors import EvlignError, ParameterError
from .events import count_events, load_events, save_events, slice_window
from .gradcheck import grad_check
from .metrics import ced_curve, evaluate
from .representations import build_frame, build_timesurface, build_voxel, default_tau
from .selfcheck import run_selfcheck
from .simulator import FrameSequence, SimulatorConfig, frames_to_events
from .ssmer import build_pair_set, synthetic_windows, train_toy
from .tensor_io import read_tensor, write_tensor


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="evlign", description=__doc__)
    parser.add_argument("--version", action="version", version=f"evlign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="convert luminance frames to an event stream")
    p.add_argument("--frames", required=True,
                   help="directory of .tns luminance frames (H x W, [0,1]), sorted by name")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--log-eps", type=float, default=1e-3)
    p.add_argument("--interp", type=int, default=1, help="frame interpolation factor")
    p.add_argument("--out", required=True, help="output events file (.bin or .csv)")

    p = sub.add_parser("represent", help="build a dense representation of an event window")
    p.add_argument("--events", required=True)
    p.add_argument("--kind", required=True, choices=("frame", "voxel", "timesurface"))
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--tau", type=float, default=None,
                   help="time-surface decay in us (default dt/3)")
    p.add_argument("--t-ref", type=int, default=None,
                   help="time-surface reference time (default window end)")
    p.add_argument("--t0", type=int, required=True)
    p.add_argument("--dt", type=int, required=True)
    p.add_argument("--out", required=True, help="output tensor (.tns)")

    p = sub.add_parser("select", help="segment a stream and select windows by event count")
    p.add_argument("--events", required=True)
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--top-k", type=int, default=1)
    p.add_argument("--esie", action="store_true",
                   help="emit the ten 40 ms E-SIE evaluation windows instead")
    p.add_argument("--out", required=True, help="output manifest (.json)")

    p = sub.add_parser("attn", help="run the alignment layer forward, optionally grad-check")
    p.add_argument("--config", required=True, help="layer config (.json)")
    p.add_argument("--inputs", default=None,
                   help=".tns embedding bundle, rows [tokens; query; rgb_features; "
                        "rgb_encoding; event_features; event_encoding]")
    p.add_argument("--check-grad", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ssmer", help="toy multi-representation self-supervised training")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="window manifest (.json) from `select`")
    src.add_argument("--synthetic", type=int, metavar="N",
                     help="train on N seed-generated synthetic windows")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--no-stop-gradient", action="store_true")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--out", required=True, help="output trace (.csv)")

    p = sub.add_parser("eval", help="landmark metrics for prediction vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--norm", required=True, choices=("inter_ocular", "inter_pupil"))
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--report", required=True, help="output report (.json)")
    p.add_argument("--ced", default=None, help="optional CED curve output (.csv)")

    sub.add_parser("selfcheck", help="run the invariant suite and print a pass/fail table")
    return parser


def _echo_config(args: argparse.Namespace) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(
        f"evlign {__version__} backend={backend_name()} {args.command} "
        + " ".join(f"{k}={v}" for k, v in flags.items()),
        file=sys.stderr,
    )


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _cmd_simulate(args) -> int:
    frame_dir = Path(args.frames)
    paths = sorted(frame_dir.glob("*.tns"))
    if not paths:
        raise ParameterError(f"no .tns frames found in {frame_dir}")
    frames = np.stack([read_tensor(p) for p in paths])
    seq = FrameSequence(frames=frames, fps=args.fps)
    cfg = SimulatorConfig(threshold=args.threshold, log_eps=args.log_eps,
                          interpolation_factor=args.interp)
    stream = frames_to_events(seq, cfg)
    save_events(stream, args.out)
    print(f"wrote {count_events(stream)} events to {args.out}", file=sys.stderr)
    return 0


def _cmd_represent(args) -> int:
    stream = load_events(args.events)
    window = slice_window(stream, args.t0, args.dt)
    if args.kind == "frame":
        grid = build_frame(window).grid.astype(np.float32)
    elif args.kind == "voxel":
        grid = build_voxel(window, args.bins).grid
    else:
        t_ref = args.t_ref if args.t_ref is not None else args.t0 + args.dt
        tau = args.tau if args.tau is not None else default_tau(args.dt)
        grid = build_timesurface(window, t_ref, tau).grid
    write_tensor(args.out, grid)
    print(f"wrote {args.kind} grid {grid.shape} to {args.out}", file=sys.stderr)
    return 0


def _cmd_select(args) -> int:
    stream = load_events(args.events)
    if args.esie:
        chosen = []
        for t0, dt in esie_windows(stream):
            chosen.append({"t0": t0, "dt": dt, "count": len(slice_window(stream, t0, dt))})
        mode = "esie"
    else:
        index = segment_stream(stream, args.fps)
        ids = select_top_k_segments(index, args.top_k) if len(index) else []
        chosen = [
            {"id": i, "t0": index.windows[i][0], "dt": index.windows[i][1],
             "count": index.counts[i]}
            for i in ids
        ]
        mode = "top_k"
    manifest = {"events": str(args.events), "fps": args.fps, "mode": mode,
                "windows": chosen}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"selected {len(chosen)} window(s) into {args.out}", file=sys.stderr)
    return 0


def _cmd_attn(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    n = int(cfg.get("num_tokens", 5))
    m = int(cfg.get("num_patches", 64))
    channels = int(cfg.get("channels", 64))
    heads = int(cfg.get("heads", 4))
    value_source = cfg.get("value_source", "input_embedding")
    params = AttentionParams.random(channels, heads, seed=int(cfg.get("param_seed", args.seed)))
    if args.inputs:
        bundle = read_tensor(args.inputs)
        if bundle.ndim != 2 or bundle.shape != (2 * n + 4 * m, channels):
            raise ParameterError(
                f"embedding bundle must be ({2 * n + 4 * m}, {channels}), got {bundle.shape}"
            )
        rows = np.asarray(bundle, np.float64)
        splits = np.cumsum([n, n, m, m, m])
        tok, query, f_rgb, p_rgb, f_evt = np.split(rows, splits)[:5]
        p_evt = rows[splits[-1]:]
        emb = Embeddings(tokens=tok, query=query, rgb_features=f_rgb, rgb_encoding=p_rgb,
                         event_features=f_evt, event_encoding=p_evt)
    else:
        emb = Embeddings.random(n, m, channels, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    t_prev = rng.standard_normal((n, channels))
    out = layer_forward(t_prev, emb, params, value_source=value_source)
    for block in ("cmfa", "msa", "mca"):
        maps = out.attention_maps[block]
        for h in range(maps.shape[0]):
            digest = hashlib.sha256(np.ascontiguousarray(maps[h]).tobytes()).hexdigest()[:16]
            dev = float(np.abs(maps[h].sum(axis=1) - 1.0).max())
            print(f"{block} head {h} checksum {digest} row-sum-dev {_fmt(dev)}")
    out_digest = hashlib.sha256(np.ascontiguousarray(out.tokens_out).tobytes()).hexdigest()[:16]
    print(f"tokens_out checksum {out_digest}")
    if args.check_grad:
        err = grad_check("layer_forward", n_tokens=min(n, 3), n_patches=min(m, 4),
                         channels=min(channels, 8), heads=min(heads, 2),
                         seed=args.seed, value_source=value_source)
        print(f"grad-check max relative error {_fmt(err)}")
    return 0


def _load_manifest_windows(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    stream = load_events(manifest["events"])
    return [slice_window(stream, w["t0"], w["dt"]) for w in manifest["windows"]]


def _cmd_ssmer(args) -> int:
    if args.synthetic is not None:
        windows = synthetic_windows(args.synthetic, seed=args.seed)
    else:
        windows = _load_manifest_windows(args.data)
    pair_set = build_pair_set(windows, voxel_bins=args.bins)
    result = train_toy(
        pair_set, epochs=args.epochs, lr=args.lr, momentum=args.momentum,
        batch_size=args.batch, seed=args.seed,
        stop_gradient=not args.no_stop_gradient, augment=not args.no_augment,
    )
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("epoch,l_mr,pair_frame_voxel,pair_voxel_timesurface,"
                 "pair_timesurface_frame,embedding_spread\n")
        for e in range(len(result.losses)):
            row = [result.losses[e], *result.pair_losses[e], result.spreads[e]]
            fh.write(f"{e}," + ",".join(_fmt(v) for v in row) + "\n")
    print(
        f"trained {len(result.losses)} epochs: loss {_fmt(result.losses[0])} -> "
        f"{_fmt(result.losses[-1])}, spread {_fmt(result.spreads[-1])}",
        file=sys.stderr,
    )
    return 0


def _cmd_eval(args) -> int:
    report = evaluate(args.pred, args.gt, args.norm, threshold=args.threshold)
    payload = {
        "norm": report.norm,
        "threshold": args.threshold,
        "nme_percent_mean": report.nme_percent_mean,
        "fr10_percent": report.fr10_percent,
        "auc10": report.auc10,
        "per_image": [
            {"image_id": i, "nme_percent": float(v)}
            for i, v in zip(report.image_ids, report.nme_percent)
        ],
    }
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if args.ced:
        curve = ced_curve(report.nme_percent / 100.0, args.threshold)
        with open(args.ced, "w", encoding="ascii") as fh:
            fh.write("error,ced\n")
            for level, value in curve:
                fh.write(f"{_fmt(level)},{_fmt(value)}\n")
    print(
        f"NME {report.nme_percent_mean:.3f}% FR {report.fr10_percent:.3f}% "
        f"AUC {report.auc10:.3f}",
        file=sys.stderr,
    )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "represent": _cmd_represent,
    "select": _cmd_select,
    "attn": _cmd_attn,
    "ssmer": _cmd_ssmer,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _echo_config(args)
    try:
        if args.command == "selfcheck":
            return 0 if run_selfcheck(sys.stdout) else 2
        return _COMMANDS[args.command](args)
    except (EvlignError, OSError) as exc:
        print(f"evlign {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
