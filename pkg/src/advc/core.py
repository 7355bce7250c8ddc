"""Domain types shared by all modules: frames, motion fields, trajectory sets,
segment plans and the codec configuration.

Conventions used everywhere:

* displacements are (dx, dy) with +x rightward and +y downward, matching
  row-major raster layout;
* motion is measured from a segment's first frame, so the t=1 slice of any
  motion field and the first entry of any trajectory are exactly (0, 0);
* all types are immutable after construction (arrays are marked read-only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ValidationError

MIN_FRAME_SIDE = 8


class Displacement(NamedTuple):
    dx: float
    dy: float

    def validate(self) -> "Displacement":
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise ValidationError(f"displacement must be finite, got {self!r}")
        return self


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def round_half_away(v):
    """Round to nearest integer, halves away from zero (the system-wide
    rounding rule for splat targets and 8-bit quantization)."""
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


@dataclass(frozen=True)
class Frame:
    """One raster image: uint8 samples of shape (height, width, channels)."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[2] not in (1, 3):
            raise ValidationError(f"frame samples must be (H, W, 1|3), got {s.shape}")
        if s.dtype != np.uint8:
            raise ValidationError(f"frame samples must be uint8, got {s.dtype}")
        if s.shape[0] < MIN_FRAME_SIDE or s.shape[1] < MIN_FRAME_SIDE:
            raise ValidationError(
                f"frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, got {s.shape[1]}x{s.shape[0]}"
            )
        object.__setattr__(self, "samples", _freeze(np.ascontiguousarray(s)))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[2]

    def gray(self) -> np.ndarray:
        """Rec.601 luma in [0, 1], float64, shape (H, W)."""
        s = self.samples.astype(np.float64) / 255.0
        if self.channels == 1:
            return s[:, :, 0]
        return 0.299 * s[:, :, 0] + 0.587 * s[:, :, 1] + 0.114 * s[:, :, 2]

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.samples, other.samples)


@dataclass(frozen=True)
class MotionField:
    """Dense displacement field for one segment.

    ``data`` has shape (T, H, W, 2) with [..., 0] = dx and [..., 1] = dy;
    entry [t-1, y, x] is the displacement of pixel (x, y) from the
    segment's first frame to frame t.  float32 and float64 data are kept
    as given (tracking files store float32; interpolated fields are
    float64).  ``visibility`` is an optional (T, H, W) boolean plane.
    """

    data: np.ndarray
    visibility: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.dtype not in (np.float32, np.float64):
            d = d.astype(np.float64)
        if d.ndim != 4 or d.shape[3] != 2 or 0 in d.shape:
            raise ValidationError(f"motion data must be (T, H, W, 2), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("motion data contains non-finite displacements")
        if np.any(d[0] != 0):
            raise ValidationError("t=1 slice of a motion field must be all zeros")
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(d)))
        if self.visibility is not None:
            v = np.asarray(self.visibility, dtype=bool)
            if v.shape != d.shape[:3]:
                raise ValidationError(
                    f"visibility shape {v.shape} does not match field shape {d.shape[:3]}"
                )
            object.__setattr__(self, "visibility", _freeze(np.ascontiguousarray(v)))

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        if not np.array_equal(self.data, other.data):
            return False
        if (self.visibility is None) != (other.visibility is None):
            return False
        return self.visibility is None or np.array_equal(self.visibility, other.visibility)


@dataclass(frozen=True)
class TrajectorySet:
    """Sparse set of tracked points: initial integer locations plus their
    per-frame displacements (track[0] is always (0, 0))."""

    positions: np.ndarray  # (S, 2) int64, columns (x, y)
    tracks: np.ndarray  # (S, T, 2) float64
    width: int
    height: int

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        trk = np.asarray(self.tracks, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] == 0:
            raise ValidationError(f"positions must be (S, 2) with S >= 1, got {pos.shape}")
        if trk.ndim != 3 or trk.shape[2] != 2 or trk.shape[0] != pos.shape[0]:
            raise ValidationError(
                f"tracks must be (S, T, 2) matching positions, got {trk.shape}"
            )
        if not np.all(np.isfinite(trk)):
            raise ValidationError("tracks contain non-finite displacements")
        if np.any(trk[:, 0, :] != 0):
            raise ValidationError("every track must start at displacement (0, 0)")
        if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] >= self.width) or np.any(
            pos[:, 1] < 0
        ) or np.any(pos[:, 1] >= self.height):
            raise ValidationError("initial coordinates out of bounds")
        seen = set(map(tuple, pos.tolist()))
        if len(seen) != pos.shape[0]:
            raise ValidationError("duplicate initial coordinates")
        object.__setattr__(self, "positions", _freeze(np.ascontiguousarray(pos)))
        object.__setattr__(self, "tracks", _freeze(np.ascontiguousarray(trk)))

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def length(self) -> int:
        return self.tracks.shape[1]


@dataclass(frozen=True)
class SegmentPlan:
    """One GOP: absolute frame indices of its boundary keyframes."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start + 1:
            raise ValidationError(
                f"segment [{self.start}, {self.end}] must span at least 2 frames"
            )

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def validate_plan_chain(plans: Sequence[SegmentPlan], total_frames: Optional[int] = None):
    """Check the one-frame-overlap chaining of a plan list."""
    if not plans:
        raise ValidationError("empty plan list")
    for prev, cur in zip(plans, plans[1:]):
        if cur.start != prev.end:
            raise ValidationError(
                f"plans must overlap by one frame: [{prev.start},{prev.end}] then [{cur.start},{cur.end}]"
            )
    if total_frames is not None:
        if plans[0].start != 0 or plans[-1].end != total_frames - 1:
            raise ValidationError("plans do not cover the whole video")


DEFAULT_SIGMA_CANDIDATES = (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)


@dataclass(frozen=True)
class CodecConfig:
    """Encoder-side knobs.

    ``grid_cells=None`` picks the largest square r x r grid with
    r*r <= budget/2 (cells then have the same aspect ratio as the frame).
    ``nms_radius=None`` derives the spacing from the selected bandwidth as
    max(2, round(sigma/2)).
    """

    theta_occ: float = 0.8
    theta_perc: float = 0.85
    hysteresis: int = 1
    budget: int = 300
    sigma_candidates: tuple = DEFAULT_SIGMA_CANDIDATES
    quant_step: float = 0.5
    grid_cells: Optional[tuple] = None
    t_max: int = 121
    residual_tolerance: float = 1e-4
    points_per_iteration: int = 8
    nms_radius: Optional[float] = None
    rbf_top_k: Optional[int] = None
    exclude_occluded: bool = False

    def __post_init__(self):
        if not (0.0 < self.theta_occ <= 1.0):
            raise ValidationError(f"theta_occ must be in (0, 1], got {self.theta_occ}")
        if not (0.0 < self.theta_perc <= 1.0):
            raise ValidationError(f"theta_perc must be in (0, 1], got {self.theta_perc}")
        if self.hysteresis < 1:
            raise ValidationError("hysteresis must be >= 1 frame")
        if self.budget < 1:
            raise ValidationError("budget must be >= 1 point")
        cands = tuple(float(s) for s in self.sigma_candidates)
        if not cands or any(not math.isfinite(s) or s <= 0 for s in cands):
            raise ValidationError("sigma_candidates must be non-empty and positive")
        object.__setattr__(self, "sigma_candidates", cands)
        if not (self.quant_step > 0 and math.isfinite(self.quant_step)):
            raise ValidationError("quant_step must be > 0")
        if self.grid_cells is not None:
            r, c = self.grid_cells
            if r < 1 or c < 1:
                raise ValidationError("grid_cells must be >= 1x1")
            if r * c > self.budget:
                raise ValidationError(
                    f"grid of {r}x{c} cells exceeds the point budget {self.budget}"
                )
            object.__setattr__(self, "grid_cells", (int(r), int(c)))
        if self.t_max < 2:
            raise ValidationError("t_max must be >= 2 frames")
        if self.residual_tolerance < 0:
            raise ValidationError("residual_tolerance must be >= 0")
        if self.points_per_iteration < 1:
            raise ValidationError("points_per_iteration must be >= 1")
        if self.nms_radius is not None and self.nms_radius < 0:
            raise ValidationError("nms_radius must be >= 0")
        if self.rbf_top_k is not None and self.rbf_top_k < 1:
            raise ValidationError("rbf_top_k must be >= 1")

    def effective_grid(self, width: Optional[int] = None, height: Optional[int] = None) -> tuple:
        """Resolve grid_cells, defaulting to the largest square grid that
        spends at most half the budget on initialization (square grids give
        every cell the frame's aspect ratio).  The auto grid is clamped to
        the frame dimensions when they are supplied."""
        if self.grid_cells is not None:
            return self.grid_cells
        r = max(1, math.isqrt(self.budget // 2))
        rows = r if height is None else min(r, height)
        cols = r if width is None else min(r, width)
        return (rows, cols)
