"""Nearest-occupied-pixel lookup shared by hole filling and field re-rooting."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError


def nearest_occupied(mask: np.ndarray):
    """For every pixel, the coordinates of the nearest True pixel by
    Euclidean distance; ties resolved to the smallest row-major (y, x).

    Returns (src_y, src_x) int64 arrays of the mask's shape.  Occupied
    pixels map to themselves.  Distances and ties are decided in exact
    integer arithmetic.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("nearest_occupied needs at least one occupied pixel")
    height, width = mask.shape
    src_y, src_x = np.mgrid[0:height, 0:width]
    src_y = src_y.astype(np.int64)
    src_x = src_x.astype(np.int64)
    if mask.all():
        return src_y, src_x

    occ = np.argwhere(mask)  # row-major order: index order == tie order
    holes = np.argwhere(~mask)
    tree = cKDTree(occ)
    _, first = tree.query(holes, k=1)
    d2_min = ((holes - occ[first]) ** 2).sum(axis=1)  # exact int
    radius = np.sqrt(d2_min.astype(np.float64)) + 1e-6
    groups = tree.query_ball_point(holes, radius)
    for hole, d2, cands in zip(holes, d2_min, groups):
        cands = np.asarray(sorted(cands))
        dd = ((occ[cands] - hole) ** 2).sum(axis=1)
        keep = cands[dd == dd.min()]
        best = occ[keep[0]]
        src_y[hole[0], hole[1]] = best[0]
        src_x[hole[0], hole[1]] = best[1]
    return src_y, src_x
