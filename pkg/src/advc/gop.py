"""Content-adaptive keyframe selection.

A segment keeps growing while its keyframe, forward-splatted along the
tracked displacements, still covers and resembles the target frames.  The
validity score is theta_t = min(occ(t)/theta_occ, sim(t)/theta_perc); a
segment ends at the first frame of the earliest run of L consecutive
frames with theta_t < 1 (L is the hysteresis), or at the horizon cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .core import CodecConfig, Frame, MotionField, SegmentPlan, validate_plan_chain
from .errors import DimensionMismatchError, ValidationError
from .metrics import luma, windowed_ssim

SIM_MIN_WINDOW_COVERAGE = 0.75

TrackingProvider = Callable[[int, int], MotionField]


@dataclass(frozen=True)
class SplatResult:
    """Forward-splat output: accumulated image (zeros where uncovered) and
    the boolean occupancy mask."""

    image: np.ndarray  # (H, W, C) float64
    occupancy: np.ndarray  # (H, W) bool


@dataclass(frozen=True)
class FrameScore:
    t: int  # 1-based frame index within the segment
    occ: float
    sim: float
    theta: float


def forward_splat(keyframe: Frame, displacements: np.ndarray) -> SplatResult:
    """Scatter keyframe pixels to round(p + u), averaging collisions and
    discarding out-of-bounds targets."""
    disp = np.asarray(displacements, dtype=np.float64)
    if disp.shape != (keyframe.height, keyframe.width, 2):
        raise DimensionMismatchError(
            f"displacements {disp.shape} do not match frame {keyframe.width}x{keyframe.height}"
        )
    sums, counts = _kernels.splat(
        keyframe.samples.astype(np.float64), disp[:, :, 0], disp[:, :, 1]
    )
    occupancy = counts > 0
    image = np.where(occupancy[:, :, None], sums / np.maximum(counts, 1)[:, :, None], 0.0)
    return SplatResult(image, occupancy)


def occupancy_fraction(occupancy: np.ndarray) -> float:
    return float(np.asarray(occupancy, dtype=bool).mean())


def perceptual_similarity(splat: SplatResult, target: Frame) -> float:
    """Masked windowed SSIM between the splatted keyframe and the target,
    restricted to windows with at least 75% occupancy; 0 when nothing
    qualifies."""
    if splat.image.shape != target.samples.shape:
        raise DimensionMismatchError("splat and target shapes differ")
    occ = splat.occupancy
    a = luma(splat.image) * occ
    b = luma(target.samples) * occ
    return windowed_ssim(a, b, mask=occ, min_coverage=SIM_MIN_WINDOW_COVERAGE)


def validity_score(occ: float, sim: float, config: CodecConfig) -> float:
    """min(occ/theta_occ, sim/theta_perc); below 1 exactly when occupancy
    or similarity falls below its threshold."""
    return min(occ / config.theta_occ, sim / config.theta_perc)


def score_frame(
    keyframe: Frame, field: MotionField, target: Frame, t: int, config: CodecConfig
) -> FrameScore:
    """Keyframe-validity score for 1-based segment frame t (t >= 2)."""
    if not (2 <= t <= field.length):
        raise ValidationError(f"score index {t} outside [2, {field.length}]")
    splat = forward_splat(keyframe, field.data[t - 1])
    occ = occupancy_fraction(splat.occupancy)
    sim = perceptual_similarity(splat, target)
    return FrameScore(t=t, occ=occ, sim=sim, theta=validity_score(occ, sim, config))


def find_segment_end(
    frames: Sequence[Frame], field: MotionField, start: int, config: CodecConfig
) -> int:
    """Absolute index of the segment's end keyframe.

    The earliest absolute t > start where theta stays below 1 for
    config.hysteresis consecutive frames inside the horizon; otherwise the
    horizon cap min(video end, start + t_max - 1).
    """
    n = len(frames)
    if n - start < 2:
        raise ValidationError("need at least 2 frames from the segment start")
    horizon = min(field.length, config.t_max, n - start)
    if horizon < 2:
        raise ValidationError("field horizon too short for a segment")
    keyframe = frames[start]
    hysteresis = config.hysteresis
    theta_below = {}  # local t -> bool

    def below(t_local: int) -> bool:
        if t_local not in theta_below:
            score = score_frame(keyframe, field, frames[start + t_local - 1], t_local, config)
            theta_below[t_local] = score.theta < 1.0
        return theta_below[t_local]

    for t_local in range(2, horizon + 1):
        if t_local + hysteresis - 1 > horizon:
            break
        if all(below(t_local + off) for off in range(hysteresis)):
            return start + t_local - 1
    return start + horizon - 1


def score_series(
    frames: Sequence[Frame], field: MotionField, start: int, length: int, config: CodecConfig
) -> list:
    """FrameScores for every interior offset of one segment (local t in
    [2, length]); feeds the analyze command's CSV."""
    return [
        score_frame(frames[start], field, frames[start + t - 1], t, config)
        for t in range(2, length + 1)
    ]


def segment_video(
    frames: Sequence[Frame], tracking: TrackingProvider, config: CodecConfig
) -> list:
    """Tile the video into segments with exact one-frame overlaps; the
    tracking provider is re-queried from each new keyframe."""
    n = len(frames)
    if n < 2:
        raise ValidationError("need at least 2 frames to segment")
    plans = []
    start = 0
    while start < n - 1:
        horizon = min(config.t_max, n - start)
        field = tracking(start, horizon)
        end = find_segment_end(frames, field, start, config)
        plans.append(SegmentPlan(start, end))
        start = end
    validate_plan_chain(plans, n)
    return plans
