"""Tracking-field and frame-sequence I/O plus synthetic scene generation.

File formats (all integers little-endian):

* TRKF tracking field: magic ``TRKF``, version u16 = 1, flags u16 (bit 0 =
  visibility plane present), T u32, H u32, W u32, then T*H*W*2 float32
  displacements in (t, y, x, [dx, dy]) order, then (if flagged) T*H*W
  visibility bytes in {0, 1}.
* Frame sequences: a directory of binary PPM files named ``%06d.ppm``
  starting at 000000 (P6 for RGB, P5 for grayscale) plus ``index.json``
  with keys width/height/frames/fps.

Synthetic scenes are layered: each layer owns a region of the first frame
(rectangle, half-plane, or the full-frame background, which must come
last) and moves by a translation, a per-frame affine map, or not at all.
The returned motion field is the exact displacement of each layer's
motion model, so tests can compare against closed forms.
"""

from __future__ import annotations

import json
import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Frame, MotionField
from .errors import (
    BadMagicError,
    CorruptDataError,
    DimensionMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
    UsageError,
    ValidationError,
)

TRKF_MAGIC = b"TRKF"
TRKF_VERSION = 1
_TRKF_HEADER = struct.Struct("<4sHHIII")


def save_tracking_field(field: MotionField, path) -> None:
    """Write a TRKF file; bit-deterministic for a given field."""
    flags = 1 if field.visibility is not None else 0
    data = np.ascontiguousarray(field.data, dtype="<f4")
    blob = bytearray()
    blob += _TRKF_HEADER.pack(
        TRKF_MAGIC, TRKF_VERSION, flags, field.length, field.height, field.width
    )
    blob += data.tobytes()
    if field.visibility is not None:
        blob += field.visibility.astype(np.uint8).tobytes()
    Path(path).write_bytes(bytes(blob))


def load_tracking_field(path) -> MotionField:
    """Read a TRKF file.  The t=1 slice is forced to zero on load."""
    raw = Path(path).read_bytes()
    if len(raw) < _TRKF_HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than the TRKF header")
    magic, version, flags, length, height, width = _TRKF_HEADER.unpack_from(raw)
    if magic != TRKF_MAGIC:
        raise BadMagicError(f"{path}: expected magic {TRKF_MAGIC!r}, got {magic!r}")
    if version != TRKF_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported TRKF version {version}")
    n = length * height * width
    need = _TRKF_HEADER.size + n * 8 + (n if flags & 1 else 0)
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: expected {need} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", count=n * 2, offset=_TRKF_HEADER.size)
    data = data.reshape(length, height, width, 2).copy()
    if not np.all(np.isfinite(data)):
        raise CorruptDataError(f"{path}: non-finite displacement in payload")
    data[0] = 0.0
    visibility = None
    if flags & 1:
        vis = np.frombuffer(raw, dtype=np.uint8, count=n, offset=_TRKF_HEADER.size + n * 8)
        visibility = vis.reshape(length, height, width).astype(bool)
    return MotionField(data, visibility)


# ---------------------------------------------------------------------------
# PPM frame sequences

_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _write_ppm(frame: Frame, path: Path) -> None:
    magic = b"P6" if frame.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, frame.width, frame.height)
    path.write_bytes(header + frame.samples.tobytes())


def _read_ppm(path: Path) -> Frame:
    raw = path.read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PPM_TOKEN.match(raw, pos)
        if not m:
            raise CorruptDataError(f"{path}: malformed PPM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P6", b"P5"):
        raise BadMagicError(f"{path}: not a binary PPM/PGM file (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise CorruptDataError(f"{path}: non-numeric PPM header field")
    if maxval != 255:
        raise CorruptDataError(f"{path}: only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    if len(raw) - pos < need:
        raise TruncatedFileError(f"{path}: expected {need} payload bytes")
    samples = np.frombuffer(raw, dtype=np.uint8, count=need, offset=pos)
    return Frame(samples.reshape(height, width, channels))


def save_frames(frames: Sequence[Frame], dirpath, fps: float = 30.0) -> None:
    """Write a PPM sequence plus index.json; load_frames inverts it exactly."""
    if not frames:
        raise ValidationError("no frames to save")
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    first = frames[0]
    for i, frame in enumerate(frames):
        if (frame.width, frame.height, frame.channels) != (
            first.width,
            first.height,
            first.channels,
        ):
            raise DimensionMismatchError(f"frame {i} does not match frame 0 dimensions")
        _write_ppm(frame, d / f"{i:06d}.ppm")
    index = {"width": first.width, "height": first.height, "frames": len(frames), "fps": fps}
    (d / "index.json").write_text(json.dumps(index, indent=2) + "\n")


def load_frames(dirpath) -> list:
    """Read a PPM sequence back in index order."""
    d = Path(dirpath)
    paths = sorted(d.glob("*.ppm"))
    if not paths:
        raise UsageError(f"{dirpath}: no .ppm frames found")
    frames = [_read_ppm(p) for p in paths]
    first = frames[0]
    for i, frame in enumerate(frames):
        if (frame.width, frame.height, frame.channels) != (
            first.width,
            first.height,
            first.channels,
        ):
            raise DimensionMismatchError(f"{paths[i].name} does not match frame 0 dimensions")
    return frames


def load_index(dirpath) -> dict:
    p = Path(dirpath) / "index.json"
    if not p.exists():
        return {}
    return json.loads(p.read_text())


# ---------------------------------------------------------------------------
# Synthetic scenes


@dataclass(frozen=True)
class Region:
    kind: str  # rect | halfplane | full
    params: tuple = ()

    def __post_init__(self):
        if self.kind == "rect":
            if len(self.params) != 4:
                raise ValidationError("rect region needs (x0, y0, x1, y1)")
        elif self.kind == "halfplane":
            if len(self.params) != 3:
                raise ValidationError("halfplane region needs (a, b, c) for ax+by<=c")
        elif self.kind != "full":
            raise ValidationError(f"unknown region kind {self.kind!r}")
        if any(not math.isfinite(v) for v in self.params):
            raise ValidationError("region parameters must be finite")

    def contains(self, xs, ys):
        if self.kind == "full":
            return np.ones(np.broadcast(xs, ys).shape, dtype=bool)
        if self.kind == "rect":
            x0, y0, x1, y1 = self.params
            return (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
        a, b, c = self.params
        return a * xs + b * ys <= c


@dataclass(frozen=True)
class Motion:
    kind: str  # static | translation | affine
    velocity: tuple = (0.0, 0.0)
    matrices: Optional[tuple] = None  # per-frame 2x3, frame 0 = identity

    def __post_init__(self):
        if self.kind == "static":
            return
        if self.kind == "translation":
            vx, vy = self.velocity
            if not (math.isfinite(vx) and math.isfinite(vy)):
                raise ValidationError("translation velocity must be finite")
            return
        if self.kind != "affine":
            raise ValidationError(f"unknown motion kind {self.kind!r}")
        if not self.matrices:
            raise ValidationError("affine motion needs per-frame matrices")
        mats = tuple(np.asarray(m, dtype=np.float64) for m in self.matrices)
        for i, m in enumerate(mats):
            if m.shape != (2, 3) or not np.all(np.isfinite(m)):
                raise ValidationError(f"affine matrix {i} must be finite 2x3")
            if abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) < 1e-12:
                raise ValidationError(f"affine matrix {i} is singular")
        if not np.allclose(mats[0], [[1, 0, 0], [0, 1, 0]]):
            raise ValidationError("first affine matrix must be the identity")
        object.__setattr__(self, "matrices", mats)

    def apply(self, frame_idx: int, xs, ys):
        """Position at 0-based frame_idx of particles at (xs, ys) in frame 0."""
        if self.kind == "static":
            return xs, ys
        if self.kind == "translation":
            vx, vy = self.velocity
            return xs + vx * frame_idx, ys + vy * frame_idx
        m = self.matrices[frame_idx]
        return (
            m[0, 0] * xs + m[0, 1] * ys + m[0, 2],
            m[1, 0] * xs + m[1, 1] * ys + m[1, 2],
        )

    def invert(self, frame_idx: int, xs, ys):
        """Frame-0 position of particles seen at (xs, ys) in frame_idx."""
        if self.kind == "static":
            return xs, ys
        if self.kind == "translation":
            vx, vy = self.velocity
            return xs - vx * frame_idx, ys - vy * frame_idx
        m = self.matrices[frame_idx]
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        ia, ib = m[1, 1] / det, -m[0, 1] / det
        ic, id_ = -m[1, 0] / det, m[0, 0] / det
        tx, ty = xs - m[0, 2], ys - m[1, 2]
        return ia * tx + ib * ty, ic * tx + id_ * ty


@dataclass(frozen=True)
class Layer:
    region: Region
    motion: Motion


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Layered scene with analytically known motion.

    ``cut_frame`` is a 1-based frame index: frames >= cut_frame show a new
    static scene and the ground-truth field is marked non-visible there.
    Layers are checked in order; the last one must be the full-frame
    background so the layers cover the whole image.
    """

    width: int
    height: int
    length: int
    layers: tuple
    cut_frame: Optional[int] = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValidationError("scene must be at least 8x8")
        if self.length < 1:
            raise ValidationError("scene length must be >= 1 frame")
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("scene needs at least one layer")
        if layers[-1].region.kind != "full":
            raise ValidationError("last layer must be the full-frame background")
        for layer in layers:
            if layer.motion.kind == "affine" and len(layer.motion.matrices) != self.length:
                raise ValidationError("affine motion needs one matrix per frame")
        object.__setattr__(self, "layers", layers)
        if self.cut_frame is not None and not (2 <= self.cut_frame <= self.length):
            raise ValidationError(f"cut_frame must be in [2, {self.length}]")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")

    # -- JSON round trip (used by the CLI's --synthetic-spec)

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            region = {"kind": layer.region.kind}
            if layer.region.kind == "rect":
                region.update(zip(("x0", "y0", "x1", "y1"), layer.region.params))
            elif layer.region.kind == "halfplane":
                region.update(zip(("a", "b", "c"), layer.region.params))
            motion = {"kind": layer.motion.kind}
            if layer.motion.kind == "translation":
                motion["vx"], motion["vy"] = layer.motion.velocity
            elif layer.motion.kind == "affine":
                motion["matrices"] = [m.tolist() for m in layer.motion.matrices]
            layers.append({"region": region, "motion": motion})
        return {
            "width": self.width,
            "height": self.height,
            "length": self.length,
            "cut_frame": self.cut_frame,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSceneSpec":
        known = {"width", "height", "length", "cut_frame", "noise_sigma", "seed", "layers"}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown scene keys: {sorted(unknown)}")
        layers = []
        for entry in doc.get("layers", []):
            rdoc = dict(entry["region"])
            kind = rdoc.pop("kind")
            if kind == "rect":
                region = Region("rect", tuple(rdoc.pop(k) for k in ("x0", "y0", "x1", "y1")))
            elif kind == "halfplane":
                region = Region("halfplane", tuple(rdoc.pop(k) for k in ("a", "b", "c")))
            else:
                region = Region(kind)
            if rdoc:
                raise UsageError(f"unknown region keys: {sorted(rdoc)}")
            mdoc = dict(entry["motion"])
            mkind = mdoc.pop("kind")
            if mkind == "translation":
                motion = Motion("translation", (mdoc.pop("vx"), mdoc.pop("vy")))
            elif mkind == "affine":
                motion = Motion("affine", matrices=tuple(mdoc.pop("matrices")))
            else:
                motion = Motion(mkind)
            if mdoc:
                raise UsageError(f"unknown motion keys: {sorted(mdoc)}")
            layers.append(Layer(region, motion))
        return cls(
            width=doc["width"],
            height=doc["height"],
            length=doc["length"],
            layers=tuple(layers),
            cut_frame=doc.get("cut_frame"),
            noise_sigma=doc.get("noise_sigma", 0.0),
            seed=doc.get("seed", 0),
        )


def _hash_u32(*parts) -> np.ndarray:
    """Deterministic 32-bit mix of integer arrays/scalars (wrapping math)."""
    with np.errstate(over="ignore"):
        h = np.uint64(0x9E3779B97F4A7C15)
        for part in parts:
            v = np.asarray(part, dtype=np.int64).astype(np.uint64)
            h = h ^ (v + np.uint64(0x9E3779B97F4A7C15) + (h << np.uint64(6)) + (h >> np.uint64(2)))
            h = h * np.uint64(0xBF58476D1CE4E5B9)
            h = h ^ (h >> np.uint64(31))
        return (h & np.uint64(0xFFFFFFFF)).astype(np.uint32)


def _texture(xs, ys, layer_idx: int, seed: int, salt: int = 0) -> np.ndarray:
    """Per-layer procedural texture: smooth gradient plus hash speckle,
    nonzero image gradient everywhere.  Returns float64 RGB in [0, 255]."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xi = np.floor(xs).astype(np.int64)
    yi = np.floor(ys).astype(np.int64)
    out = np.empty(xs.shape + (3,), dtype=np.float64)
    speckle = _hash_u32(xi, yi, layer_idx * 7 + 1, seed, salt).astype(np.float64)
    speckle = (speckle % 61).astype(np.float64) - 30.0
    for ch in range(3):
        coeff = _hash_u32(layer_idx, ch, seed, salt, 12345)
        base = 60.0 + float(coeff % 130)
        gx = 0.35 + float((coeff >> 8) % 160) / 100.0
        gy = 0.35 + float((coeff >> 16) % 160) / 100.0
        if (coeff >> 24) % 2:
            gx = -gx
        out[..., ch] = base + gx * xs + gy * ys + speckle
    return np.clip(out, 0.0, 255.0)


class SyntheticTracker:
    """Ground-truth tracking provider: fields re-rooted at any start frame.

    Calling the instance with (start, length) returns the exact motion
    field from 0-based frame ``start`` over ``length`` frames, mirroring a
    tracker that is re-run from each new keyframe.
    """

    def __init__(self, spec: SyntheticSceneSpec):
        self.spec = spec
        self._xs, self._ys = np.meshgrid(
            np.arange(spec.width, dtype=np.float64),
            np.arange(spec.height, dtype=np.float64),
        )

    def _cut0(self) -> Optional[int]:
        return None if self.spec.cut_frame is None else self.spec.cut_frame - 1

    def _ownership(self, frame_idx: int) -> list:
        """Per-layer boolean masks of pixels owned at a given frame."""
        spec = self.spec
        masks = []
        assigned = np.zeros((spec.height, spec.width), dtype=bool)
        for layer in spec.layers:
            ox, oy = layer.motion.invert(frame_idx, self._xs, self._ys)
            mine = layer.region.contains(ox, oy) & ~assigned
            assigned |= mine
            masks.append(mine)
        return masks

    def __call__(self, start: int, length: int) -> MotionField:
        spec = self.spec
        if start < 0 or length < 1 or start + length > spec.length:
            raise ValidationError(
                f"field request [{start}, {start + length}) outside video of {spec.length} frames"
            )
        cut0 = self._cut0()
        data = np.zeros((length, spec.height, spec.width, 2), dtype=np.float64)
        if cut0 is None or start < cut0:
            masks = self._ownership(start)
            for li, layer in enumerate(spec.layers):
                mask = masks[li]
                if not mask.any():
                    continue
                px, py = self._xs[mask], self._ys[mask]
                ox, oy = layer.motion.invert(start, px, py)
                for t in range(1, length):
                    nx, ny = layer.motion.apply(start + t, ox, oy)
                    data[t, mask, 0] = nx - px
                    data[t, mask, 1] = ny - py
        # start >= cut0: new static scene, field stays zero
        if spec.noise_sigma > 0 and length > 1:
            rng = np.random.default_rng([spec.seed, 0x7261636B, start])
            data[1:] += rng.normal(0.0, spec.noise_sigma, data[1:].shape)
        visibility = None
        if cut0 is not None:
            visibility = np.ones((length, spec.height, spec.width), dtype=bool)
            if start < cut0:
                first_bad = cut0 - start
                if first_bad < length:
                    visibility[first_bad:] = False
        return MotionField(data.astype(np.float32), visibility)

    def render(self, frame_idx: int) -> Frame:
        spec = self.spec
        cut0 = self._cut0()
        if cut0 is not None and frame_idx >= cut0:
            rgb = _texture(self._xs, self._ys, 0, spec.seed, salt=spec.cut_frame)
            return Frame(np.asarray(np.rint(rgb), dtype=np.uint8))
        out = np.zeros((spec.height, spec.width, 3), dtype=np.float64)
        for li, mask in enumerate(self._ownership(frame_idx)):
            if not mask.any():
                continue
            layer = spec.layers[li]
            ox, oy = layer.motion.invert(frame_idx, self._xs[mask], self._ys[mask])
            out[mask] = _texture(ox, oy, li, spec.seed)
        return Frame(np.asarray(np.rint(out), dtype=np.uint8))


def generate_synthetic(spec: SyntheticSceneSpec):
    """Render all frames and the ground-truth field rooted at frame 0.

    Deterministic given (spec, seed), byte for byte.
    """
    tracker = SyntheticTracker(spec)
    frames = [tracker.render(i) for i in range(spec.length)]
    return frames, tracker(0, spec.length)


class TrackingFieldSource:
    """Per-segment fields derived from one tracking file rooted at frame 0.

    Segments starting at frame 0 are direct slices.  Later starts are
    re-rooted by inverting the 0->start map (each target pixel takes the
    source whose landing point is closest, ties to the smaller raster
    index) and composing displacement differences; this is exact for
    global translation and an approximation otherwise.  Pixels nobody
    lands on inherit the nearest landed pixel's source and are marked
    non-visible.
    """

    def __init__(self, field: MotionField):
        self.field = field

    def __call__(self, start: int, length: int) -> MotionField:
        field = self.field
        if start < 0 or length < 1 or start + length > field.length:
            raise ValidationError(
                f"field request [{start}, {start + length}) outside tracking of {field.length} frames"
            )
        if start == 0:
            vis = None if field.visibility is None else field.visibility[:length]
            return MotionField(field.data[:length], vis)

        height, width = field.height, field.width
        base = field.data[start].astype(np.float64)
        xs = np.arange(width, dtype=np.float64)[None, :]
        ys = np.arange(height, dtype=np.float64)[:, None]
        fx = xs + base[:, :, 0]
        fy = ys + base[:, :, 1]
        tx = np.asarray(np.sign(fx) * np.floor(np.abs(fx) + 0.5), dtype=np.int64)
        ty = np.asarray(np.sign(fy) * np.floor(np.abs(fy) + 0.5), dtype=np.int64)
        ok = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
        flat = (ty[ok] * width + tx[ok]).ravel()
        d2 = ((fx[ok] - tx[ok]) ** 2 + (fy[ok] - ty[ok]) ** 2).ravel()
        src_idx = np.flatnonzero(ok.ravel())

        best_d2 = np.full(height * width, np.inf)
        np.minimum.at(best_d2, flat, d2)
        is_best = d2 == best_d2[flat]
        winner = np.full(height * width, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(winner, flat[is_best], src_idx[is_best])
        covered = winner != np.iinfo(np.int64).max

        from ._spatial import nearest_occupied

        cov2d = covered.reshape(height, width)
        src_y, src_x = nearest_occupied(cov2d)
        source = winner.reshape(height, width)[src_y, src_x]
        sy, sx = source // width, source % width

        data = np.empty((length, height, width, 2), dtype=np.float64)
        for t in range(length):
            later = field.data[start + t].astype(np.float64)
            data[t, :, :, 0] = later[sy, sx, 0] - base[sy, sx, 0]
            data[t, :, :, 1] = later[sy, sx, 1] - base[sy, sx, 1]
        data[0] = 0.0
        visibility = np.ones((length, height, width), dtype=bool)
        visibility &= cov2d[None, :, :]
        if field.visibility is not None:
            for t in range(length):
                visibility[t] &= field.visibility[start + t][sy, sx]
        return MotionField(data.astype(np.float32), visibility)
