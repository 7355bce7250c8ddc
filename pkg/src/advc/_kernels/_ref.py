"""Pure-numpy kernel implementations (fallback backend).

Both backends honor the same accumulation contract so results are
reproducible run to run: per output pixel, anchors are visited in index
order and summed with Kahan compensation; weight exponents are shifted by
their per-pixel maximum before exponentiation.  The interpolated value is
accumulated as v0 + sum(alpha_i * (v_i - v0)) with v0 the first selected
anchor's track, which makes constant anchor sets reproduce exactly.
"""

from __future__ import annotations

import numpy as np

# rows per chunk are sized so the per-chunk scratch stays modest
_CHUNK_BUDGET = 4_000_000  # float64 elements


def _kahan_push(s, c, term):
    y = term - c
    t = s + y
    c = (t - s) - y
    return t, c


def rbf_field(pos_x, pos_y, tracks, sigma, width, height, top_k=0):
    """Evaluate the normalized-Gaussian interpolant on the full pixel grid.

    pos_x, pos_y: (S,) float64 anchor coordinates.
    tracks: (S, T, 2) float64 anchor displacement tracks.
    top_k: 0 for exact evaluation, else the sum runs over the k nearest
    anchors (distance ties broken toward the smaller anchor index).
    Returns (T, H, W, 2) float64.
    """
    pos_x = np.asarray(pos_x, dtype=np.float64)
    pos_y = np.asarray(pos_y, dtype=np.float64)
    tracks = np.asarray(tracks, dtype=np.float64)
    n_anchor, n_frame = tracks.shape[0], tracks.shape[1]
    k = int(top_k) if top_k else 0
    if k <= 0 or k >= n_anchor:
        k = 0
    inv2s2 = 1.0 / (2.0 * sigma * sigma)

    out = np.empty((n_frame, height, width, 2), dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    block = max(1, _CHUNK_BUDGET // max(1, n_anchor * width + width * n_frame * 4))
    for y0 in range(0, height, block):
        y1 = min(height, y0 + block)
        py = np.arange(y0, y1, dtype=np.float64)[:, None]  # (rows, 1)
        d2 = (xs[None, None, :] - pos_x[:, None, None]) ** 2 + (
            py[None, :, :] - pos_y[:, None, None]
        ) ** 2  # (S, rows, W)
        if k:
            sel = np.sort(np.argsort(d2, axis=0, kind="stable")[:k], axis=0)
            e = -np.take_along_axis(d2, sel, axis=0) * inv2s2
        else:
            sel = None
            e = -d2 * inv2s2
        w = np.exp(e - e.max(axis=0)[None])
        wsum = np.zeros(w.shape[1:])
        comp = np.zeros_like(wsum)
        for i in range(w.shape[0]):
            wsum, comp = _kahan_push(wsum, comp, w[i])
        alpha = w / wsum[None]

        if sel is None:
            base = tracks[0]  # (T, 2)
            acc = np.zeros((y1 - y0, width, n_frame, 2))
            comp = np.zeros_like(acc)
            for i in range(n_anchor):
                term = alpha[i][:, :, None, None] * (tracks[i] - base)[None, None]
                acc, comp = _kahan_push(acc, comp, term)
            res = base[None, None] + acc
        else:
            base = tracks[sel[0]]  # (rows, W, T, 2)
            acc = np.zeros_like(base)
            comp = np.zeros_like(base)
            for j in range(k):
                term = alpha[j][:, :, None, None] * (tracks[sel[j]] - base)
                acc, comp = _kahan_push(acc, comp, term)
            res = base + acc
        out[:, y0:y1] = np.transpose(res, (2, 0, 1, 3))
    return out


def splat(values, dx, dy):
    """Forward-splat accumulation: scatter each source pixel to
    round(p + u) (halves away from zero), discarding out-of-bounds targets.

    values: (H, W, C) float64; dx, dy: (H, W).
    Returns (sums (H, W, C) float64, counts (H, W) int64); sources are
    visited in raster order, so sums are reproducible bit for bit.
    """
    values = np.asarray(values, dtype=np.float64)
    height, width, channels = values.shape
    xs = np.arange(width, dtype=np.float64)[None, :]
    ys = np.arange(height, dtype=np.float64)[:, None]
    fx = xs + np.asarray(dx, dtype=np.float64)
    fy = ys + np.asarray(dy, dtype=np.float64)
    tx = (np.sign(fx) * np.floor(np.abs(fx) + 0.5)).astype(np.int64)
    ty = (np.sign(fy) * np.floor(np.abs(fy) + 0.5)).astype(np.int64)
    ok = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
    flat = (ty[ok] * width + tx[ok]).ravel()
    counts = np.bincount(flat, minlength=height * width)
    sums = np.empty((height * width, channels), dtype=np.float64)
    for c in range(channels):
        sums[:, c] = np.bincount(flat, weights=values[:, :, c][ok], minlength=height * width)
    return sums.reshape(height, width, channels), counts.reshape(height, width)
