"""Batch harnesses: threshold-sensitivity grid and point-budget sweep.

Cells are keyed by their parameters, written to CSV sorted by key, and
skipped on rerun when already completed, so sweeps are deterministic and
resumable.  Per-cell failures are recorded as error rows and the sweep
continues.  Quality columns are PSNR/SSIM/EPE: only the directional
trends of the corresponding ablations are reproducible without neural
metrics, and the column names make that explicit.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import CodecConfig
from .errors import UsageError
from .gop import segment_video
from .metrics import psnr as psnr_of, ssim as ssim_of
from .motion_io import (
    SyntheticSceneSpec,
    SyntheticTracker,
    TrackingFieldSource,
    generate_synthetic,
    load_frames,
    load_tracking_field,
)
from .pipeline import encode_video
from .decode import ReconstructionConfig, decode_segments

PAPER_DEFAULT_CELL = (0.8, 0.85)

_CONFIG_KEYS = {
    "theta_occ",
    "theta_perc",
    "hysteresis",
    "budget",
    "sigma_candidates",
    "quant_step",
    "grid_cells",
    "t_max",
    "residual_tolerance",
    "points_per_iteration",
    "nms_radius",
    "rbf_top_k",
    "exclude_occluded",
}


def config_from_overrides(overrides: dict) -> CodecConfig:
    unknown = set(overrides) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(overrides)
    if "sigma_candidates" in kwargs:
        kwargs["sigma_candidates"] = tuple(kwargs["sigma_candidates"])
    if kwargs.get("grid_cells") is not None:
        kwargs["grid_cells"] = tuple(kwargs["grid_cells"])
    return CodecConfig(**kwargs)


@dataclass(frozen=True)
class SweepSpec:
    corpus: tuple  # of (name, source dict)
    theta_occ: tuple = ()
    theta_perc: tuple = ()
    budgets: tuple = ()
    overrides: Optional[dict] = None

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        known = {"corpus", "theta_occ", "theta_perc", "budgets", "overrides"}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown sweep keys: {sorted(unknown)}")
        corpus = []
        for entry in doc.get("corpus", []):
            name = entry.get("name")
            if not name:
                raise UsageError("every corpus entry needs a name")
            corpus.append((name, entry))
        if not corpus:
            raise UsageError("sweep corpus is empty")
        return cls(
            corpus=tuple(corpus),
            theta_occ=tuple(doc.get("theta_occ", ())),
            theta_perc=tuple(doc.get("theta_perc", ())),
            budgets=tuple(int(b) for b in doc.get("budgets", ())),
            overrides=doc.get("overrides"),
        )

    def base_config(self) -> CodecConfig:
        return config_from_overrides(self.overrides or {})


def _resolve_corpus_entry(entry: dict):
    """Returns (frames, tracking provider)."""
    if "synthetic" in entry:
        scene = SyntheticSceneSpec.from_dict(entry["synthetic"])
        frames, _ = generate_synthetic(scene)
        return frames, SyntheticTracker(scene)
    if "frames" in entry:
        frames = load_frames(entry["frames"])
        if "tracking" not in entry:
            raise UsageError(f"corpus entry {entry.get('name')} needs a tracking file")
        return frames, TrackingFieldSource(load_tracking_field(entry["tracking"]))
    raise UsageError(f"corpus entry {entry.get('name')} needs 'synthetic' or 'frames'")


def _worker_count() -> int:
    env = os.environ.get("ADVC_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _evaluate_cell(frames, tracking, config, out_path, plans=None) -> dict:
    result = encode_video(
        frames, tracking, config, out_path, plans=plans, truth_epe=True
    )
    decoded = decode_segments(result.contents, ReconstructionConfig())
    acc = result.bpp
    epes = [info["epe"] for info in result.segment_infos]
    weights = [plan.length for plan in result.plans]
    return {
        "status": "ok",
        "bpp": acc["bpp"],
        "psnr": float(np.mean([psnr_of(a, b) for a, b in zip(frames, decoded)])),
        "ssim": float(np.mean([ssim_of(a, b) for a, b in zip(frames, decoded)])),
        "epe": float(np.average(epes, weights=weights)),
        "segments": len(result.plans),
        "points_total": int(sum(i["points"] for i in result.segment_infos)),
        "file_bytes": result.file_bytes,
        "error": "",
    }


_ERROR_CELL = {
    "bpp": "",
    "psnr": "",
    "ssim": "",
    "epe": "",
    "segments": "",
    "points_total": "",
    "file_bytes": "",
}


def _load_done(path: Path, key_fields) -> dict:
    done = {}
    if path.exists():
        with path.open() as fh:
            for row in csv.DictReader(fh):
                if row.get("status") == "ok":
                    done[tuple(row[k] for k in key_fields)] = row
    return done


def _write_rows(path: Path, fieldnames, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def run_threshold_sweep(spec: SweepSpec, out_dir) -> list:
    """Grid over (theta_occ, theta_perc) x corpus; one CSV row per cell.

    The paper-default cell (0.8, 0.85) is flagged in the default_cell
    column when present.  Also emits gnuplot-compatible heatmap files.
    """
    if not spec.theta_occ or not spec.theta_perc:
        raise UsageError("threshold sweep needs non-empty theta_occ and theta_perc axes")
    out_dir = Path(out_dir)
    (out_dir / "cells").mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "threshold.csv"
    key_fields = ("video", "theta_occ", "theta_perc")
    done = _load_done(csv_path, key_fields)
    base = spec.base_config()

    jobs = []
    for name, entry in spec.corpus:
        for t_occ in spec.theta_occ:
            for t_perc in spec.theta_perc:
                key = (name, str(float(t_occ)), str(float(t_perc)))
                if key not in done:
                    jobs.append((name, entry, float(t_occ), float(t_perc)))

    def run(job):
        name, entry, t_occ, t_perc = job
        row = {
            "video": name,
            "theta_occ": str(t_occ),
            "theta_perc": str(t_perc),
            "default_cell": int((t_occ, t_perc) == PAPER_DEFAULT_CELL),
        }
        try:
            frames, tracking = _resolve_corpus_entry(entry)
            config = replace(base, theta_occ=t_occ, theta_perc=t_perc)
            cell = out_dir / "cells" / f"{name}_occ{t_occ:g}_perc{t_perc:g}.advc"
            row.update(_evaluate_cell(frames, tracking, config, cell))
        except Exception as exc:  # per-cell failures recorded, sweep continues
            row.update(status="error", error=f"{type(exc).__name__}: {exc}", **_ERROR_CELL)
        return row

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        new_rows = list(pool.map(run, jobs))

    rows = list(done.values()) + new_rows
    for row in rows:
        row.setdefault(
            "default_cell",
            int((float(row["theta_occ"]), float(row["theta_perc"])) == PAPER_DEFAULT_CELL),
        )
    rows.sort(key=lambda r: (r["video"], float(r["theta_occ"]), float(r["theta_perc"])))
    fields = [
        "video", "theta_occ", "theta_perc", "default_cell", "status",
        "bpp", "psnr", "ssim", "epe", "segments", "points_total", "file_bytes", "error",
    ]
    _write_rows(csv_path, fields, rows)
    _write_heatmaps(rows, spec, out_dir)
    return rows


def _write_heatmaps(rows, spec: SweepSpec, out_dir: Path) -> None:
    """gnuplot splot triplets: theta_occ theta_perc mean(metric)."""
    ok = [r for r in rows if r["status"] == "ok"]
    for metric in ("bpp", "psnr", "ssim", "epe"):
        lines = []
        for t_occ in sorted(set(float(v) for v in spec.theta_occ)):
            for t_perc in sorted(set(float(v) for v in spec.theta_perc)):
                vals = [
                    float(r[metric])
                    for r in ok
                    if float(r["theta_occ"]) == t_occ and float(r["theta_perc"]) == t_perc
                ]
                if vals:
                    lines.append(f"{t_occ:g} {t_perc:g} {np.mean(vals):.8g}")
            lines.append("")
        (out_dir / f"heatmap_{metric}.dat").write_text("\n".join(lines) + "\n")


def run_budget_sweep(spec: SweepSpec, out_dir) -> list:
    """One row per (budget, video); segmentation is computed once per
    video and reused across budgets (the budget does not affect it)."""
    if not spec.budgets:
        raise UsageError("budget sweep needs a non-empty budgets axis")
    out_dir = Path(out_dir)
    (out_dir / "cells").mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "budget.csv"
    key_fields = ("video", "budget")
    done = _load_done(csv_path, key_fields)
    base = spec.base_config()

    new_rows = []
    for name, entry in spec.corpus:
        pending = [b for b in spec.budgets if (name, str(b)) not in done]
        if not pending:
            continue
        try:
            frames, tracking = _resolve_corpus_entry(entry)
            plans = segment_video(frames, tracking, base)
        except Exception as exc:
            for b in pending:
                new_rows.append(
                    {
                        "video": name,
                        "budget": str(b),
                        "status": "error",
                        "error": f"{type(exc).__name__}: {exc}",
                        **_ERROR_CELL,
                    }
                )
            continue

        def run(budget):
            row = {"video": name, "budget": str(budget)}
            try:
                config = replace(base, budget=budget)
                cell = out_dir / "cells" / f"{name}_b{budget}.advc"
                row.update(_evaluate_cell(frames, tracking, config, cell, plans=plans))
            except Exception as exc:
                row.update(status="error", error=f"{type(exc).__name__}: {exc}", **_ERROR_CELL)
            return row

        with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
            new_rows.extend(pool.map(run, pending))

    rows = list(done.values()) + new_rows
    rows.sort(key=lambda r: (r["video"], int(r["budget"])))
    fields = [
        "video", "budget", "status",
        "bpp", "psnr", "ssim", "epe", "segments", "points_total", "file_bytes", "error",
    ]
    _write_rows(csv_path, fields, rows)
    return rows
