"""End-to-end encode orchestration shared by the CLI and the sweep
harness: segmentation, per-segment trajectory selection, quantization,
keyframe coding, and container writing, with per-stage timings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

from .bitstream import (
    CODEC_TAGS,
    ContainerContents,
    SegmentPayload,
    bpp_accounting,
    keyframe_encode,
    quantize_trajectories,
    read_container,
    write_container,
)
from .core import CodecConfig, Frame, SegmentPlan
from .errors import UsageError
from .gop import TrackingProvider, segment_video
from .metrics import endpoint_error
from .rbf import RbfModel, interpolate_field
from .sampler import greedy_select, sketch_weights


@dataclass
class EncodeResult:
    path: str
    file_bytes: int
    plans: list
    traces: list
    payloads: list
    contents: ContainerContents
    timings: dict
    segment_infos: list = dc_field(default_factory=list)

    @property
    def bpp(self) -> dict:
        return bpp_accounting(self.contents)


def encode_video(
    frames: Sequence[Frame],
    tracking: TrackingProvider,
    config: CodecConfig,
    out_path,
    keyframe_codec: str = "lossless_pred",
    fps: float = 30.0,
    external_blobs: Optional[dict] = None,
    plans: Optional[Sequence[SegmentPlan]] = None,
    truth_epe: bool = False,
) -> EncodeResult:
    """Encode a frame sequence into an ADVC container.

    ``plans`` overrides segmentation (the budget sweep reuses one
    segmentation across budgets).  ``external_blobs`` maps keyframe
    indices to caller-compressed bytes for the external_blob codec.
    ``truth_epe`` additionally records per-segment endpoint error of the
    decoder-side field against the provider's field.
    """
    if keyframe_codec not in CODEC_TAGS:
        raise UsageError(f"unknown keyframe codec {keyframe_codec!r}")
    tag = CODEC_TAGS[keyframe_codec]
    timings = {}
    t0 = time.perf_counter()
    if plans is None:
        plans = segment_video(frames, tracking, config)
    timings["segmentation_s"] = time.perf_counter() - t0

    payloads = []
    traces = []
    epes = []
    t0 = time.perf_counter()
    for plan in plans:
        seg_field = tracking(plan.start, plan.length)
        sketch = sketch_weights(frames[plan.start])
        trajectories, sigma, trace = greedy_select(seg_field, sketch, config)
        stream = quantize_trajectories(trajectories, config.quant_step)
        payloads.append(SegmentPayload(sigma=sigma, stream=stream))
        traces.append(trace)
        if truth_epe:
            decoded_field = interpolate_field(
                RbfModel.from_trajectory_set(stream.dequantize(), sigma),
                seg_field.width,
                seg_field.height,
            )
            epes.append(endpoint_error(seg_field, decoded_field))
    timings["selection_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    keyframes = {}
    for plan in plans:
        for f_idx in (plan.start, plan.end):
            if f_idx not in keyframes:
                blob = keyframe_encode(
                    frames[f_idx],
                    tag,
                    (external_blobs or {}).get(f_idx) if tag == CODEC_TAGS["external_blob"] else None,
                )
                keyframes[f_idx] = (tag, blob)
    timings["keyframe_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    n_bytes = write_container(
        plans,
        keyframes,
        payloads,
        config,
        out_path,
        fps=fps,
        channels=frames[0].channels,
    )
    contents = read_container(out_path)
    timings["container_s"] = time.perf_counter() - t0

    segment_infos = []
    for k, (seg, trace, payload) in enumerate(zip(contents.segments, traces, payloads)):
        info = {
            "bits_keyframe": seg.bits["keyframe"],
            "bits_trajectory": seg.bits["trajectory"],
            "bits_codebook": seg.bits["codebook"],
            "bits_side_info": seg.bits["side_info"],
            "points": payload.stream.size,
            "sigma": payload.sigma,
            "r_initial": trace.initial_objective,
            "r_final": trace.iterations[-1].objective
            if trace.iterations
            else trace.initial_objective,
            "termination": trace.termination_reason,
        }
        if truth_epe:
            info["epe"] = epes[k]
        segment_infos.append(info)

    return EncodeResult(
        path=str(out_path),
        file_bytes=n_bytes,
        plans=list(plans),
        traces=traces,
        payloads=payloads,
        contents=contents,
        timings=timings,
        segment_infos=segment_infos,
    )


def encode_report(result: EncodeResult) -> dict:
    """JSON-ready encode report: segments, bpp breakdown, traces, timings."""
    return {
        "container": result.path,
        "file_bytes": result.file_bytes,
        "bpp": result.bpp,
        "timings": result.timings,
        "segments": [
            {
                "index": k,
                "start": plan.start,
                "end": plan.end,
                "length": plan.length,
                **info,
            }
            for k, (plan, info) in enumerate(zip(result.plans, result.segment_infos))
        ],
        "traces": [trace.to_dict() for trace in result.traces],
    }
