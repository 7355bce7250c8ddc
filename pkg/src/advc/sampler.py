"""Budget-aware sparse trajectory selection: gradient-based sketch weights,
coarse-grid initialization, and greedy refinement driven by the
sketch-weighted residual map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import CodecConfig, Frame, MotionField, TrajectorySet
from .errors import DimensionMismatchError, ValidationError
from .rbf import RbfModel, dense_squared_error, select_bandwidth

SKETCH_FLOOR = 0.01


@dataclass(frozen=True)
class SketchMap:
    """Per-pixel importance weights in [floor, 1]."""

    weight: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weight, dtype=np.float64))
        if w.ndim != 2 or 0 in w.shape:
            raise ValidationError(f"sketch weights must be 2-D, got {w.shape}")
        if w.min() <= 0 or w.max() > 1.0:
            raise ValidationError("sketch weights must lie in (0, 1]")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @property
    def height(self) -> int:
        return self.weight.shape[0]

    @property
    def width(self) -> int:
        return self.weight.shape[1]


def sketch_weights(frame: Frame) -> SketchMap:
    """Sobel gradient magnitude of the luma image, max-normalized and
    floored at 0.01 so textureless regions stay selectable."""
    g = frame.gray()
    p = np.pad(g, 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    )
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    )
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak == 0.0:
        return SketchMap(np.full_like(mag, SKETCH_FLOOR))
    return SketchMap(np.maximum(mag / peak, SKETCH_FLOOR))


def init_grid(sketch: SketchMap, grid_cells) -> np.ndarray:
    """One point per grid cell: the argmax of sketch weight inside the
    cell, ties to the smallest row-major pixel index.  Returns (N, 2)
    int64 positions (x, y) in cell raster order."""
    rows, cols = int(grid_cells[0]), int(grid_cells[1])
    if rows < 1 or cols < 1:
        raise ValidationError("grid must be at least 1x1")
    if rows > sketch.height or cols > sketch.width:
        raise ValidationError(
            f"{rows}x{cols} grid does not fit a {sketch.width}x{sketch.height} sketch"
        )
    w = sketch.weight
    points = np.empty((rows * cols, 2), dtype=np.int64)
    i = 0
    for r in range(rows):
        y0, y1 = (r * sketch.height) // rows, ((r + 1) * sketch.height) // rows
        for c in range(cols):
            x0, x1 = (c * sketch.width) // cols, ((c + 1) * sketch.width) // cols
            cell = w[y0:y1, x0:x1]
            flat = int(np.argmax(cell))  # first max in row-major order
            dy, dx = divmod(flat, cell.shape[1])
            points[i] = (x0 + dx, y0 + dy)
            i += 1
    return points


def residual_map(field: MotionField, model: RbfModel, sketch: SketchMap) -> np.ndarray:
    """Time-averaged sketch-weighted squared reconstruction error:
    r(p) = w(p)/T * sum_t |M_t(p) - Mhat_t(p)|^2."""
    if (sketch.height, sketch.width) != (field.height, field.width):
        raise DimensionMismatchError(
            f"sketch {sketch.weight.shape} does not match field grid"
        )
    return sketch.weight * dense_squared_error(field, model) / field.length


@dataclass(frozen=True)
class IterationRecord:
    added: tuple  # ((x, y), ...)
    objective: float  # weighted reconstruction error after the addition


@dataclass(frozen=True)
class SelectionTrace:
    """Observability record of one greedy selection run."""

    initial_objective: float
    iterations: tuple = ()
    final_size: int = 0
    termination_reason: str = ""  # budget | tolerance | no_local_maxima
    sigma: float = 0.0

    def to_dict(self) -> dict:
        return {
            "initial_objective": self.initial_objective,
            "iterations": [
                {"added": [list(p) for p in it.added], "objective": it.objective}
                for it in self.iterations
            ],
            "final_size": self.final_size,
            "termination_reason": self.termination_reason,
            "sigma": self.sigma,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _local_maxima(r: np.ndarray) -> np.ndarray:
    """Strict 8-neighborhood maxima; boundary pixels compare against
    existing neighbors only.  Plateaus yield no maxima."""
    p = np.pad(r, 1, constant_values=-np.inf)
    h, w = r.shape
    out = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            out &= r > p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


def greedy_select(field: MotionField, sketch: SketchMap, config: CodecConfig):
    """Select up to config.budget trajectories from the dense field.

    Grid initialization, one bandwidth selection frozen for the run, then
    iterations that add the top residual local maxima under non-maximum
    suppression.  Returns (TrajectorySet, sigma, SelectionTrace); tracks
    hold the dense field's values at the selected points.
    """
    if (sketch.height, sketch.width) != (field.height, field.width):
        raise DimensionMismatchError("sketch does not match field grid")
    budget = config.budget
    grid = config.effective_grid(field.width, field.height)
    if grid[0] * grid[1] > budget:
        raise ValidationError(f"grid {grid} exceeds the point budget {budget}")

    def tracks_at(pos):
        return field.data[:, pos[:, 1], pos[:, 0], :].transpose(1, 0, 2).astype(np.float64)

    positions = init_grid(sketch, grid)
    anchors = TrajectorySet(positions, tracks_at(positions), field.width, field.height)
    sigma = select_bandwidth(field, anchors, sketch.weight, config.sigma_candidates)
    nms_radius = (
        float(config.nms_radius)
        if config.nms_radius is not None
        else max(2.0, float(round(sigma / 2.0)))
    )
    nms_sq = nms_radius * nms_radius

    allowed = None
    if config.exclude_occluded and field.visibility is not None:
        allowed = field.visibility.mean(axis=0) >= 0.5

    weights = sketch.weight
    sq = dense_squared_error(field, RbfModel.from_trajectory_set(anchors, sigma))
    objective = float((weights * sq).sum())
    initial_objective = objective
    trace_iters = []
    reason = None
    while True:
        if anchors.size >= budget:
            reason = "budget"
            break
        resid = weights * sq / field.length
        if float(resid.max()) < config.residual_tolerance:
            reason = "tolerance"
            break
        cand_mask = _local_maxima(resid)
        if allowed is not None:
            cand_mask &= allowed
        cy, cx = np.nonzero(cand_mask)
        if cy.size == 0:
            reason = "no_local_maxima"
            break
        # drop candidates too close to the current anchor set
        dx = cx[:, None] - anchors.positions[None, :, 0]
        dy = cy[:, None] - anchors.positions[None, :, 1]
        d2 = dx * dx + dy * dy
        keep = ~np.any((d2 < nms_sq) | (d2 == 0), axis=1)
        cy, cx = cy[keep], cx[keep]
        if cy.size == 0:
            reason = "no_local_maxima"
            break
        rvals = resid[cy, cx]
        order = np.lexsort((cx, cy, -rvals))
        room = min(config.points_per_iteration, budget - anchors.size)
        accepted = []
        for idx in order:
            x, y = int(cx[idx]), int(cy[idx])
            ok = True
            for ax, ay in accepted:
                dd = (x - ax) ** 2 + (y - ay) ** 2
                if dd < nms_sq or dd == 0:
                    ok = False
                    break
            if ok:
                accepted.append((x, y))
                if len(accepted) >= room:
                    break
        if not accepted:
            reason = "no_local_maxima"
            break
        new_positions = np.vstack([anchors.positions, np.asarray(accepted, dtype=np.int64)])
        anchors = TrajectorySet(new_positions, tracks_at(new_positions), field.width, field.height)
        sq = dense_squared_error(field, RbfModel.from_trajectory_set(anchors, sigma))
        objective = float((weights * sq).sum())
        trace_iters.append(IterationRecord(tuple(accepted), objective))

    trace = SelectionTrace(
        initial_objective=initial_objective,
        iterations=tuple(trace_iters),
        final_size=anchors.size,
        termination_reason=reason,
        sigma=sigma,
    )
    return anchors, sigma, trace
