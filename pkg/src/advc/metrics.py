"""Quality metrics (endpoint error, PSNR, windowed SSIM) and report assembly.

The windowed SSIM here is the single implementation used both for quality
reporting and, in its masked variant, for the keyframe-validity similarity
in the segmentation module.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Frame, MotionField
from .errors import DimensionMismatchError

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 8
SSIM_STRIDE = 4
_C1 = (0.01) ** 2
_C2 = (0.03) ** 2


def luma(samples: np.ndarray) -> np.ndarray:
    """Rec.601 luma in [0, 1] from (H, W, C) samples in [0, 255]."""
    s = np.asarray(samples, dtype=np.float64) / 255.0
    if s.shape[2] == 1:
        return s[:, :, 0]
    return 0.299 * s[:, :, 0] + 0.587 * s[:, :, 1] + 0.114 * s[:, :, 2]


def windowed_ssim(
    a: np.ndarray,
    b: np.ndarray,
    mask: Optional[np.ndarray] = None,
    min_coverage: float = 0.75,
) -> float:
    """Mean SSIM over 8x8 windows at stride 4 of two grayscale images in
    [0, 1] (standard constants, dynamic range 1).

    With a mask, only windows whose coverage is at least ``min_coverage``
    count; 0.0 is returned when no window qualifies.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    wa = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))[::SSIM_STRIDE, ::SSIM_STRIDE]
    wb = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))[::SSIM_STRIDE, ::SSIM_STRIDE]
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    ssim_map = ((2.0 * mu_a * mu_b + _C1) * (2.0 * cov + _C2)) / (
        (mu_a * mu_a + mu_b * mu_b + _C1) * (var_a + var_b + _C2)
    )
    if mask is None:
        return float(ssim_map.mean())
    cover = sliding_window_view(np.asarray(mask, dtype=np.float64), (SSIM_WINDOW, SSIM_WINDOW))[
        ::SSIM_STRIDE, ::SSIM_STRIDE
    ].mean(axis=(-2, -1))
    sel = cover >= min_coverage
    if not sel.any():
        return 0.0
    return float(ssim_map[sel].mean())


def psnr(a: Frame, b: Frame) -> float:
    """PSNR in dB over all channels; identical frames report the 99 dB cap."""
    if a.samples.shape != b.samples.shape:
        raise DimensionMismatchError("frame shapes differ")
    diff = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    mse = float((diff * diff).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0 * 255.0 / mse))


def ssim(a: Frame, b: Frame) -> float:
    if a.samples.shape != b.samples.shape:
        raise DimensionMismatchError("frame shapes differ")
    return windowed_ssim(luma(a.samples), luma(b.samples))


def endpoint_error(truth, estimate) -> float:
    """Mean Euclidean displacement error over all (t, pixel) entries.

    Accepts MotionField instances or raw (T, H, W, 2) arrays.
    """
    ta = truth.data if isinstance(truth, MotionField) else np.asarray(truth)
    eb = estimate.data if isinstance(estimate, MotionField) else np.asarray(estimate)
    if ta.shape != eb.shape:
        raise DimensionMismatchError(f"field shapes differ: {ta.shape} vs {eb.shape}")
    diff = ta.astype(np.float64) - eb.astype(np.float64)
    return float(np.sqrt((diff * diff).sum(axis=-1)).mean())


@dataclass(frozen=True)
class SegmentReport:
    index: int
    start: int
    end: int
    length: int
    bits_keyframe: int
    bits_trajectory: int
    bits_codebook: int
    bits_side_info: int
    points: int
    sigma: float
    r_initial: float
    r_final: float
    psnr: float
    ssim: float
    epe: Optional[float] = None


def build_report(
    original: Sequence[Frame],
    decoded: Sequence[Frame],
    plans,
    segment_infos: Sequence[dict],
    bpp_breakdown: dict,
):
    """Assemble per-segment reports plus a global summary.

    ``segment_infos[k]`` supplies the non-metric fields (bits per category,
    points, sigma, r_initial, r_final, and optionally epe) gathered during
    encoding.  The global bpp is taken verbatim from the bitstream
    accounting so there is a single source of truth.
    """
    if len(original) != len(decoded):
        raise DimensionMismatchError(
            f"frame count mismatch: {len(original)} original vs {len(decoded)} decoded"
        )
    reports = []
    for k, (plan, info) in enumerate(zip(plans, segment_infos)):
        seg_psnr = float(
            np.mean([psnr(original[i], decoded[i]) for i in range(plan.start, plan.end + 1)])
        )
        seg_ssim = float(
            np.mean([ssim(original[i], decoded[i]) for i in range(plan.start, plan.end + 1)])
        )
        reports.append(
            SegmentReport(
                index=k,
                start=plan.start,
                end=plan.end,
                length=plan.length,
                bits_keyframe=info["bits_keyframe"],
                bits_trajectory=info["bits_trajectory"],
                bits_codebook=info["bits_codebook"],
                bits_side_info=info["bits_side_info"],
                points=info["points"],
                sigma=info["sigma"],
                r_initial=info["r_initial"],
                r_final=info["r_final"],
                psnr=seg_psnr,
                ssim=seg_ssim,
                epe=info.get("epe"),
            )
        )
    frame_psnr = [psnr(a, b) for a, b in zip(original, decoded)]
    frame_ssim = [ssim(a, b) for a, b in zip(original, decoded)]
    epes = [r.epe for r in reports if r.epe is not None]
    weights = [r.length for r in reports if r.epe is not None]
    summary = {
        "frames": len(original),
        "segments": len(reports),
        "psnr": float(np.mean(frame_psnr)),
        "ssim": float(np.mean(frame_ssim)),
        "epe": float(np.average(epes, weights=weights)) if epes else None,
        "bpp": bpp_breakdown,
    }
    return reports, summary


def write_segment_csv(reports: Sequence[SegmentReport], path) -> None:
    rows = [asdict(r) for r in reports]
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_summary_json(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2) + "\n")
