"""Command-line entry point: encode, decode, analyze, render-tracks, sweep.

Errors are emitted as one JSON object on stderr; usage errors exit with
code 2, data errors with code 1.  Config precedence is defaults < config
file < command-line flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import decode as decode_mod
from . import gop, metrics, pipeline, sweep
from .bitstream import read_container
from .core import CodecConfig
from .errors import AdvcError, UsageError
from .motion_io import (
    SyntheticSceneSpec,
    SyntheticTracker,
    TrackingFieldSource,
    generate_synthetic,
    load_frames,
    load_index,
    load_tracking_field,
    save_frames,
)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        sys.exit(EXIT_USAGE)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file mirroring the codec settings")
    p.add_argument("--theta-occ", type=float, default=None)
    p.add_argument("--theta-perc", type=float, default=None)
    p.add_argument("--hysteresis", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--quant-step", type=float, default=None)
    p.add_argument("--sigma-candidates", default=None, help="comma-separated bandwidths")
    p.add_argument("--t-max", type=int, default=None)


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", help="input PPM frame directory")
    p.add_argument("--synthetic-spec", help="JSON synthetic scene description")
    p.add_argument("--tracking", help="TRKF dense tracking field (required with --frames)")


def _build_config(args) -> CodecConfig:
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
    for key in ("theta_occ", "theta_perc", "hysteresis", "budget", "quant_step", "t_max"):
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    if getattr(args, "sigma_candidates", None):
        doc["sigma_candidates"] = [float(s) for s in args.sigma_candidates.split(",")]
    return sweep.config_from_overrides(doc)


def _resolve_input(args):
    """Returns (frames, tracking provider, fps)."""
    if args.synthetic_spec:
        scene = SyntheticSceneSpec.from_dict(json.loads(Path(args.synthetic_spec).read_text()))
        frames, _ = generate_synthetic(scene)
        return frames, SyntheticTracker(scene), 30.0
    if args.frames:
        frames = load_frames(args.frames)
        fps = float(load_index(args.frames).get("fps", 30.0))
        if not args.tracking:
            raise UsageError("--frames input needs a --tracking TRKF file")
        field = load_tracking_field(args.tracking)
        if (field.width, field.height) != (frames[0].width, frames[0].height):
            raise UsageError("tracking field dimensions do not match the frames")
        if field.length < len(frames):
            raise UsageError(
                f"tracking covers {field.length} frames but the video has {len(frames)}"
            )
        return frames, TrackingFieldSource(field), fps
    raise UsageError("provide an input: --frames DIR or --synthetic-spec FILE")


def cmd_encode(args) -> int:
    config = _build_config(args)
    frames, tracking, fps = _resolve_input(args)
    external = None
    if args.keyframe_codec == "external_blob":
        if not args.external_blobs:
            raise UsageError("external_blob codec needs --external-blobs DIR")
        external = {}
    t0 = time.perf_counter()
    if external is not None:
        # blobs named by absolute keyframe index: 000000.bin, ...
        plans = gop.segment_video(frames, tracking, config)
        for plan in plans:
            for f_idx in (plan.start, plan.end):
                p = Path(args.external_blobs) / f"{f_idx:06d}.bin"
                if not p.exists():
                    raise UsageError(f"missing external keyframe blob {p}")
                external[f_idx] = p.read_bytes()
        result = pipeline.encode_video(
            frames, tracking, config, args.out,
            keyframe_codec=args.keyframe_codec, fps=fps,
            external_blobs=external, plans=plans,
        )
    else:
        result = pipeline.encode_video(
            frames, tracking, config, args.out, keyframe_codec=args.keyframe_codec, fps=fps
        )
    report = pipeline.encode_report(result)
    report["timings"]["total_s"] = time.perf_counter() - t0
    report_path = args.report or (str(args.out) + ".report.json")
    Path(report_path).write_text(json.dumps(report, indent=2) + "\n")
    acc = result.bpp
    print(
        f"encoded {len(frames)} frames -> {result.path} "
        f"({result.file_bytes} bytes, {acc['bpp']:.6f} bpp, {len(result.plans)} segments); "
        f"report: {report_path}"
    )
    return EXIT_OK


def cmd_decode(args) -> int:
    t0 = time.perf_counter()
    contents = read_container(args.input)
    rconfig = decode_mod.ReconstructionConfig(
        hole_fill=args.hole_fill,
        blend=args.blend,
        external_frames_dir=args.external_frames,
    )
    frames = decode_mod.decode_segments(contents, rconfig)
    save_frames(frames, args.out, fps=contents.fps)
    report = {
        "container": str(args.input),
        "frames": len(frames),
        "timings": {"decode_s": time.perf_counter() - t0},
    }
    if args.truth:
        truth = load_frames(args.truth)
        if len(truth) != len(frames):
            raise UsageError("truth directory frame count does not match the container")
        report["psnr"] = float(
            sum(metrics.psnr(a, b) for a, b in zip(truth, frames)) / len(frames)
        )
        report["ssim"] = float(
            sum(metrics.ssim(a, b) for a, b in zip(truth, frames)) / len(frames)
        )
    if args.tracking:
        provider = TrackingFieldSource(load_tracking_field(args.tracking))
        epes, weights = [], []
        for seg in contents.segments:
            truth_field = provider(seg.plan.start, seg.plan.length)
            est = decode_mod.reconstruct_field(
                seg.stream.dequantize(), seg.sigma, contents.width, contents.height
            )
            epes.append(metrics.endpoint_error(truth_field, est))
            weights.append(seg.plan.length)
        report["epe"] = float(sum(e * w for e, w in zip(epes, weights)) / sum(weights))
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    print(
        f"decoded {len(frames)} frames -> {args.out}"
        + (f" (psnr {report['psnr']:.2f} dB)" if "psnr" in report else "")
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    config = _build_config(args)
    frames, tracking, _ = _resolve_input(args)
    plans = gop.segment_video(frames, tracking, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "t", "occ", "sim", "theta"])
        for k, plan in enumerate(plans):
            field = tracking(plan.start, plan.length)
            for score in gop.score_series(frames, field, plan.start, plan.length, config):
                writer.writerow(
                    [k, plan.start + score.t - 1, f"{score.occ:.8f}", f"{score.sim:.8f}", f"{score.theta:.8f}"]
                )
    if args.traces:
        from .sampler import greedy_select, sketch_weights

        traces = []
        for plan in plans:
            field = tracking(plan.start, plan.length)
            _, _, trace = greedy_select(field, sketch_weights(frames[plan.start]), config)
            traces.append(trace.to_dict())
        Path(args.traces).write_text(json.dumps(traces, indent=2) + "\n")
    print(f"analyzed {len(frames)} frames into {len(plans)} segments; scores: {out}")
    return EXIT_OK


def cmd_render_tracks(args) -> int:
    rconfig = decode_mod.ReconstructionConfig(rectangle_half_size=args.half_size)
    if args.input:
        contents = read_container(args.input)
        frames = []
        for k, seg in enumerate(contents.segments):
            ts = seg.stream.dequantize()
            rendered = decode_mod.render_trajectory_video(
                ts, contents.width, contents.height, rconfig
            )
            frames.extend(rendered if k == 0 else rendered[1:])
        fps = contents.fps
    elif args.tracks:
        doc = json.loads(Path(args.tracks).read_text())
        from .core import TrajectorySet
        import numpy as np

        points = doc["points"]
        ts = TrajectorySet(
            np.asarray([p["q"] for p in points], dtype=np.int64),
            np.asarray([p["track"] for p in points], dtype=np.float64),
            doc["width"],
            doc["height"],
        )
        frames = decode_mod.render_trajectory_video(ts, doc["width"], doc["height"], rconfig)
        fps = float(doc.get("fps", 30.0))
    else:
        raise UsageError("provide --in CONTAINER or --tracks JSON")
    save_frames(frames, args.out, fps=fps)
    print(f"rendered {len(frames)} trajectory frames -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = sweep.SweepSpec.from_dict(json.loads(Path(args.spec).read_text()))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ran = []
    if spec.theta_occ and spec.theta_perc:
        rows = sweep.run_threshold_sweep(spec, out_dir)
        ran.append(f"threshold.csv ({len(rows)} rows)")
    if spec.budgets:
        rows = sweep.run_budget_sweep(spec, out_dir)
        ran.append(f"budget.csv ({len(rows)} rows)")
    if not ran:
        raise UsageError("sweep spec defines no axes (theta_occ+theta_perc or budgets)")
    print(f"sweep outputs in {out_dir}: " + ", ".join(ran))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="advc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode frames into an ADVC container")
    _add_input_flags(p)
    _add_config_flags(p)
    p.add_argument("--keyframe-codec", choices=sorted(("lossless_pred", "external_blob")),
                   default="lossless_pred")
    p.add_argument("--external-blobs", help="directory of caller-compressed keyframe blobs")
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--report", help="encode report JSON path")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a container to PPM frames")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--hole-fill", choices=decode_mod.HOLE_FILL_MODES, default="blend_with_end")
    p.add_argument("--blend", type=float, default=0.0)
    p.add_argument("--external-frames", help="sidecar decoded keyframes for external_blob")
    p.add_argument("--truth", help="original frames directory: adds PSNR/SSIM")
    p.add_argument("--tracking", help="truth TRKF field: adds EPE")
    p.add_argument("--report", help="decode report JSON path")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("analyze", help="per-frame keyframe-validity scores as CSV")
    _add_input_flags(p)
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="scores CSV path")
    p.add_argument("--traces", help="also run selection and write traces JSON here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("render-tracks", help="render the trajectory visualization video")
    p.add_argument("--in", dest="input", help="ADVC container")
    p.add_argument("--tracks", help="trajectory JSON file")
    p.add_argument("--half-size", type=int, default=2, help="rectangle half size in px")
    p.add_argument("--out", required=True, help="output frame directory")
    p.set_defaults(func=cmd_render_tracks)

    p = sub.add_parser("sweep", help="threshold / budget sweep harness")
    p.add_argument("--spec", required=True, help="sweep spec JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except AdvcError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_DATA
    except OSError as exc:
        _emit_error("io", str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
