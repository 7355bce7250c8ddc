"""Reference decoder: rebuild the dense motion field from the transmitted
trajectories, synthesize interior frames by warping the boundary
keyframes, and render trajectory visualization videos.

Frame synthesis forward-splats the start keyframe along the reconstructed
field; uncovered pixels are filled either from the nearest covered pixel
or from the end keyframe (optionally ramped toward it over time).
Boundary frames are returned exactly as decoded, never resynthesized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._spatial import nearest_occupied
from .bitstream import (
    TAG_EXTERNAL_BLOB,
    ContainerContents,
    keyframe_decode,
    read_container,
)
from .core import Frame, MotionField, TrajectorySet, round_half_away
from .errors import DimensionMismatchError, UsageError, ValidationError
from .gop import forward_splat
from .motion_io import _read_ppm
from .rbf import RbfModel, interpolate_field

HOLE_FILL_MODES = ("nearest", "blend_with_end")


@dataclass(frozen=True)
class ReconstructionConfig:
    """Decoder-side knobs (not transmitted).

    ``blend`` shapes the temporal weight ((t-1)/(T-1))**blend used for
    hole pixels in blend_with_end mode; the default 0 takes holes purely
    from the end keyframe.
    """

    hole_fill: str = "blend_with_end"
    blend: float = 0.0
    rectangle_half_size: int = 2
    external_frames_dir: Optional[str] = None

    def __post_init__(self):
        if self.hole_fill not in HOLE_FILL_MODES:
            raise ValidationError(f"hole_fill must be one of {HOLE_FILL_MODES}")
        if self.blend < 0:
            raise ValidationError("blend exponent must be >= 0")
        if self.rectangle_half_size < 0:
            raise ValidationError("rectangle_half_size must be >= 0")


def reconstruct_field(
    ts: TrajectorySet, sigma: float, width: int, height: int, top_k: Optional[int] = None
) -> MotionField:
    """Decoder-side dense field: same interpolation code the encoder uses."""
    return interpolate_field(RbfModel.from_trajectory_set(ts, sigma, top_k), width, height)


def _quantize_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(img), 0, 255).astype(np.uint8)


def synthesize_segment(
    key_start: Frame, key_end: Frame, field: MotionField, config: ReconstructionConfig
) -> list:
    """Warp key_start along the field for interior frames; boundary frames
    are returned bit-exactly."""
    if key_start.samples.shape != key_end.samples.shape:
        raise DimensionMismatchError("boundary keyframes differ in shape")
    if (field.height, field.width) != (key_start.height, key_start.width):
        raise DimensionMismatchError("field grid does not match the keyframes")
    length = field.length
    frames = [key_start]
    start_f = key_start.samples.astype(np.float64)
    end_f = key_end.samples.astype(np.float64)
    for t in range(2, length):
        splat = forward_splat(key_start, field.data[t - 1])
        img = splat.image
        holes = ~splat.occupancy
        if holes.any():
            if config.hole_fill == "nearest" and splat.occupancy.any():
                sy, sx = nearest_occupied(splat.occupancy)
                img = img[sy, sx]
            else:
                w = ((t - 1) / (length - 1)) ** config.blend
                mix = (1.0 - w) * start_f + w * end_f
                img = np.where(holes[:, :, None], mix, img)
        frames.append(Frame(_quantize_u8(img)))
    if length >= 2:
        frames.append(key_end)
    return frames


def _load_external_frame(dirpath: str, frame_idx: int, width: int, height: int) -> Frame:
    from pathlib import Path

    p = Path(dirpath) / f"{frame_idx:06d}.ppm"
    if not p.exists():
        raise UsageError(f"external keyframe {p} not found")
    frame = _read_ppm(p)
    if (frame.width, frame.height) != (width, height):
        raise DimensionMismatchError(
            f"external keyframe {p} is {frame.width}x{frame.height}, container says {width}x{height}"
        )
    return frame


def decode_keyframes(contents: ContainerContents, config: ReconstructionConfig) -> dict:
    """Decode each distinct keyframe blob once; frame index -> Frame."""
    out = {}
    for f_idx, (tag, blob) in contents.keyframes.items():
        external = None
        if tag == TAG_EXTERNAL_BLOB:
            if config.external_frames_dir is None:
                raise UsageError(
                    "container holds external keyframe blobs; pass the sidecar frames directory"
                )
            external = _load_external_frame(
                config.external_frames_dir, f_idx, contents.width, contents.height
            )
        out[f_idx] = keyframe_decode(blob, tag, external)
    return out


def decode_segments(
    contents: ContainerContents, config: Optional[ReconstructionConfig] = None
) -> list:
    """Synthesize the full video, dropping the duplicated overlap frame
    between consecutive segments."""
    config = config or ReconstructionConfig()
    keyframes = decode_keyframes(contents, config)
    out = []
    for k, seg in enumerate(contents.segments):
        ts = seg.stream.dequantize()
        field = reconstruct_field(ts, seg.sigma, contents.width, contents.height)
        frames = synthesize_segment(
            keyframes[seg.plan.start], keyframes[seg.plan.end], field, config
        )
        out.extend(frames if k == 0 else frames[1:])
    if len(out) != contents.total_frames:
        raise ValidationError(
            f"decoded {len(out)} frames, container header says {contents.total_frames}"
        )
    return out


def decode_container(path, config: Optional[ReconstructionConfig] = None) -> list:
    """read_container + decode_segments in one call."""
    return decode_segments(read_container(path), config)


def _point_color(x: int, y: int) -> np.ndarray:
    from .motion_io import _hash_u32

    h = int(_hash_u32(x, y, 0x636F6C))
    return np.array(
        [64 + h % 191, 64 + (h >> 8) % 191, 64 + (h >> 16) % 191], dtype=np.uint8
    )


def render_trajectory_video(
    ts: TrajectorySet, width: int, height: int, config: Optional[ReconstructionConfig] = None
) -> list:
    """Black-background video with a filled rectangle per tracked point,
    colored by a deterministic hash of its first-frame location; points
    draw in index order, so later points overpaint earlier ones."""
    config = config or ReconstructionConfig()
    hs = config.rectangle_half_size
    colors = [_point_color(int(x), int(y)) for x, y in ts.positions]
    frames = []
    for t in range(ts.length):
        img = np.zeros((height, width, 3), dtype=np.uint8)
        centers = round_half_away(ts.positions.astype(np.float64) + ts.tracks[:, t, :])
        for i in range(ts.size):
            cx, cy = int(centers[i, 0]), int(centers[i, 1])
            x0, x1 = max(0, cx - hs), min(width, cx + hs + 1)
            y0, y1 = max(0, cy - hs), min(height, cy + hs + 1)
            if x0 < x1 and y0 < y1:
                img[y0:y1, x0:x1] = colors[i]
        frames.append(Frame(img))
    return frames
