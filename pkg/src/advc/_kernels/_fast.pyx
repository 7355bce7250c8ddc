# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel implementations.

Same accumulation contract as the numpy fallback in _ref.py: anchors are
visited in index order with Kahan compensation, exponents are max-shifted
per pixel, and the interpolant is accumulated as v0 + sum(alpha_i * (v_i - v0)).
"""

import numpy as np

from libc.math cimport exp, fabs, floor


cdef inline double _round_half_away(double v) nogil:
    cdef double r = floor(fabs(v) + 0.5)
    if v > 0:
        return r
    if v < 0:
        return -r
    return 0.0


def rbf_field(pos_x, pos_y, tracks, double sigma, int width, int height, int top_k=0):
    """Evaluate the normalized-Gaussian interpolant on the full pixel grid.

    Same semantics as _ref.rbf_field; returns (T, H, W, 2) float64.
    """
    cdef const double[::1] qx = np.ascontiguousarray(pos_x, dtype=np.float64)
    cdef const double[::1] qy = np.ascontiguousarray(pos_y, dtype=np.float64)
    cdef const double[:, :, ::1] trk = np.ascontiguousarray(tracks, dtype=np.float64)
    cdef Py_ssize_t n_anchor = trk.shape[0]
    cdef Py_ssize_t n_frame = trk.shape[1]
    cdef Py_ssize_t k = top_k
    if k <= 0 or k >= n_anchor:
        k = 0

    out_arr = np.empty((n_frame, height, width, 2), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)

    cdef double[::1] wbuf = np.empty(n_anchor, dtype=np.float64)
    cdef Py_ssize_t[::1] sel = np.empty(n_anchor, dtype=np.intp)
    cdef double[::1] seld2 = np.empty(n_anchor, dtype=np.float64)
    cdef double[:, ::1] acc = np.empty((n_frame, 2), dtype=np.float64)
    cdef double[:, ::1] comp = np.empty((n_frame, 2), dtype=np.float64)

    cdef Py_ssize_t x, y, i, j, t, c, nsel, worst, b
    cdef double ddx, ddy, d2, m, e, w, wsum, csum, yk, tk, alpha, term, base

    with nogil:
        for y in range(height):
            for x in range(width):
                if k == 0:
                    nsel = n_anchor
                    for i in range(n_anchor):
                        sel[i] = i
                else:
                    # keep the k nearest anchors; strict-better replacement
                    # resolves distance ties toward the smaller index
                    nsel = 0
                    worst = 0
                    for i in range(n_anchor):
                        ddx = x - qx[i]
                        ddy = y - qy[i]
                        d2 = ddx * ddx + ddy * ddy
                        if nsel < k:
                            sel[nsel] = i
                            seld2[nsel] = d2
                            if d2 > seld2[worst]:
                                worst = nsel
                            nsel += 1
                        elif d2 < seld2[worst]:
                            sel[worst] = i
                            seld2[worst] = d2
                            worst = 0
                            for j in range(1, k):
                                if seld2[j] > seld2[worst]:
                                    worst = j
                    # insertion sort: ascending anchor index
                    for i in range(1, nsel):
                        b = sel[i]
                        j = i - 1
                        while j >= 0 and sel[j] > b:
                            sel[j + 1] = sel[j]
                            j -= 1
                        sel[j + 1] = b

                m = -1e300
                for j in range(nsel):
                    i = sel[j]
                    ddx = x - qx[i]
                    ddy = y - qy[i]
                    e = -(ddx * ddx + ddy * ddy) * inv2s2
                    wbuf[j] = e
                    if e > m:
                        m = e
                wsum = 0.0
                csum = 0.0
                for j in range(nsel):
                    w = exp(wbuf[j] - m)
                    wbuf[j] = w
                    yk = w - csum
                    tk = wsum + yk
                    csum = (tk - wsum) - yk
                    wsum = tk

                for t in range(n_frame):
                    acc[t, 0] = 0.0
                    acc[t, 1] = 0.0
                    comp[t, 0] = 0.0
                    comp[t, 1] = 0.0
                b = sel[0]
                for j in range(nsel):
                    i = sel[j]
                    alpha = wbuf[j] / wsum
                    for t in range(n_frame):
                        for c in range(2):
                            term = alpha * (trk[i, t, c] - trk[b, t, c])
                            yk = term - comp[t, c]
                            tk = acc[t, c] + yk
                            comp[t, c] = (tk - acc[t, c]) - yk
                            acc[t, c] = tk
                for t in range(n_frame):
                    out[t, y, x, 0] = trk[b, t, 0] + acc[t, 0]
                    out[t, y, x, 1] = trk[b, t, 1] + acc[t, 1]
    return out_arr


def splat(values, dx, dy):
    """Forward-splat accumulation; same semantics as _ref.splat."""
    cdef const double[:, :, ::1] val = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, ::1] ux = np.ascontiguousarray(dx, dtype=np.float64)
    cdef const double[:, ::1] uy = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t height = val.shape[0]
    cdef Py_ssize_t width = val.shape[1]
    cdef Py_ssize_t channels = val.shape[2]

    sums_arr = np.zeros((height, width, channels), dtype=np.float64)
    counts_arr = np.zeros((height, width), dtype=np.int64)
    cdef double[:, :, ::1] sums = sums_arr
    cdef long long[:, ::1] counts = counts_arr

    cdef Py_ssize_t x, y, c, tx, ty
    cdef double fx, fy

    with nogil:
        for y in range(height):
            for x in range(width):
                fx = x + ux[y, x]
                fy = y + uy[y, x]
                tx = <Py_ssize_t>_round_half_away(fx)
                ty = <Py_ssize_t>_round_half_away(fy)
                if 0 <= tx < width and 0 <= ty < height:
                    counts[ty, tx] += 1
                    for c in range(channels):
                        sums[ty, tx, c] += val[y, x, c]
    return sums_arr, counts_arr
