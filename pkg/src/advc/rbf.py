"""Normalized-Gaussian interpolation of sparse trajectories to a dense
motion field, the weighted reconstruction objective, and bandwidth
selection.

The interpolant at pixel p is sum_q alpha(p, q) * track(q) where
alpha(p, q) = exp(-|p-q|^2 / (2 sigma^2)) normalized over the anchor set.
Weight exponents are max-shifted before exponentiation so tiny bandwidths
cannot underflow to 0/0, and accumulation runs in anchor-index order with
Kahan compensation so repeated runs are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import Displacement, MotionField, TrajectorySet
from .errors import DimensionMismatchError, ValidationError


@dataclass(frozen=True)
class RbfModel:
    """Anchor set plus kernel bandwidth.

    ``top_k`` switches to truncated evaluation over the k nearest anchors
    (renormalized weights, distance ties toward the smaller anchor index);
    None means exact evaluation over all anchors.
    """

    positions: np.ndarray  # (S, 2) anchor coordinates, columns (x, y)
    tracks: np.ndarray  # (S, T, 2) float64
    sigma: float
    top_k: Optional[int] = None

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        trk = np.ascontiguousarray(np.asarray(self.tracks, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] == 0:
            raise ValidationError(f"anchor positions must be (S, 2), S >= 1, got {pos.shape}")
        if trk.ndim != 3 or trk.shape[0] != pos.shape[0] or trk.shape[2] != 2:
            raise ValidationError(f"anchor tracks must be (S, T, 2), got {trk.shape}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValidationError(f"sigma must be finite and positive, got {self.sigma}")
        if self.top_k is not None and self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        pos.setflags(write=False)
        trk.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "tracks", trk)

    @classmethod
    def from_trajectory_set(cls, ts: TrajectorySet, sigma: float, top_k: Optional[int] = None):
        return cls(ts.positions, ts.tracks, sigma, top_k)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def length(self) -> int:
        return self.tracks.shape[1]


def _selected_indices(model: RbfModel, px: float, py: float) -> np.ndarray:
    d2 = (px - model.positions[:, 0]) ** 2 + (py - model.positions[:, 1]) ** 2
    k = model.top_k
    if k is None or k >= model.size:
        return np.arange(model.size)
    return np.sort(np.argsort(d2, kind="stable")[:k])


def interpolation_weights(model: RbfModel, p) -> np.ndarray:
    """Normalized weights alpha(p, q) over the full anchor list (zeros at
    anchors outside the top_k selection).  Exposed for the weight-identity
    tests; interpolate() uses the same arithmetic."""
    px, py = float(p[0]), float(p[1])
    sel = _selected_indices(model, px, py)
    inv2s2 = 1.0 / (2.0 * model.sigma * model.sigma)
    e = -((px - model.positions[sel, 0]) ** 2 + (py - model.positions[sel, 1]) ** 2) * inv2s2
    w = np.exp(e - e.max())
    total = 0.0
    comp = 0.0
    for v in w:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    out = np.zeros(model.size)
    out[sel] = w / total
    return out


def interpolate(model: RbfModel, p, t: int) -> Displacement:
    """Interpolated displacement at pixel p for 1-based frame index t."""
    if not (1 <= t <= model.length):
        raise ValidationError(f"frame index {t} outside [1, {model.length}]")
    px, py = float(p[0]), float(p[1])
    sel = _selected_indices(model, px, py)
    inv2s2 = 1.0 / (2.0 * model.sigma * model.sigma)
    e = -((px - model.positions[sel, 0]) ** 2 + (py - model.positions[sel, 1]) ** 2) * inv2s2
    w = np.exp(e - e.max())
    total = 0.0
    comp = 0.0
    for v in w:
        y = v - comp
        s = total + y
        comp = (s - total) - y
        total = s
    alpha = w / total
    base = model.tracks[sel[0], t - 1]
    out = [0.0, 0.0]
    for c in range(2):
        acc = 0.0
        comp = 0.0
        for j in range(len(sel)):
            term = alpha[j] * (model.tracks[sel[j], t - 1, c] - base[c])
            y = term - comp
            s = acc + y
            comp = (s - acc) - y
            acc = s
        out[c] = base[c] + acc
    return Displacement(out[0], out[1])


def interpolate_field(model: RbfModel, width: int, height: int) -> MotionField:
    """Dense evaluation of the interpolant; identical to calling
    interpolate() per pixel, just batched."""
    data = _kernels.rbf_field(
        model.positions[:, 0],
        model.positions[:, 1],
        model.tracks,
        model.sigma,
        width,
        height,
        model.top_k or 0,
    )
    return MotionField(data)


def dense_squared_error(field: MotionField, model: RbfModel) -> np.ndarray:
    """Per-pixel squared trajectory error sum_t |M_t(p) - Mhat_t(p)|^2,
    shape (H, W).  Shared workhorse for the reconstruction objective and
    the residual map."""
    if model.length != field.length:
        raise DimensionMismatchError(
            f"model length {model.length} != field length {field.length}"
        )
    dense = _kernels.rbf_field(
        model.positions[:, 0],
        model.positions[:, 1],
        model.tracks,
        model.sigma,
        field.width,
        field.height,
        model.top_k or 0,
    )
    diff = field.data.astype(np.float64) - dense
    return np.einsum("thwc,thwc->hw", diff, diff)


def reconstruction_error(field: MotionField, model: RbfModel, weights: np.ndarray) -> float:
    """Weighted reconstruction objective: sum_p w(p) * |M(p) - Mhat(p|S)|^2
    with the norm over the full 2T trajectory vector (summed over time,
    no averaging)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (field.height, field.width):
        raise DimensionMismatchError(
            f"weights shape {weights.shape} != field grid {(field.height, field.width)}"
        )
    if np.any(weights < 0):
        raise ValidationError("weights must be nonnegative")
    return float(np.sum(weights * dense_squared_error(field, model)))


def select_bandwidth(
    field: MotionField,
    anchors: TrajectorySet,
    weights: np.ndarray,
    candidates: Sequence[float],
) -> float:
    """Pick the candidate bandwidth minimizing the weighted reconstruction
    objective for the given anchor set; ties break toward the smaller sigma."""
    cands = sorted(float(s) for s in candidates)
    if not cands or cands[0] <= 0:
        raise ValidationError("bandwidth candidates must be non-empty and positive")
    best_sigma = None
    best_err = math.inf
    for sigma in cands:
        err = reconstruction_error(field, RbfModel.from_trajectory_set(anchors, sigma), weights)
        if err < best_err:
            best_err = err
            best_sigma = sigma
    return best_sigma
