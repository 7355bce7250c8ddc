"""Trajectory quantization, canonical Huffman entropy coding, keyframe
codecs, and the ADVC container format.

Coding pipeline per segment: each selected point is stored as its fixed
16-bit initial coordinates plus frame-to-frame quantized displacement
deltas (quantize-in-the-loop, so the dequantized track never drifts more
than quant_step/2 per component).  Delta symbols of both components share
one canonical Huffman code per segment; symbols outside [-127, 127] are
sent as an escape code followed by 16 raw bits.  The codebook travels as
256 4-bit code lengths, so codes are limited to 15 bits (the length-
limited construction equals plain Huffman whenever that is deep enough).

Container layout (little-endian, bit-packed payloads MSB-first, padded to
byte boundaries per record):

* global header: magic ``ADVC``, version u16, width u16, height u16,
  channels u8, pad, total frames u32, fps f32, quant_step f32, config echo
  (theta_occ f32, theta_perc f32, hysteresis u16, budget u32, t_max u16),
  segment count u32;
* per segment: T_k varint, sigma f32, two keyframe references (inline:
  kind 0 + codec tag u8 + length u32 + payload; back-reference: kind 1 +
  ordinal u32 of a previously inlined blob), point count varint, point
  coordinates (u16 x, u16 y each), codebook (128 bytes, present when the
  segment has symbols), payload bit length u32, payload bytes, CRC32 of
  the record.

Interior keyframes are inlined once and back-referenced by the following
segment.  Every byte of the file belongs to exactly one accounting
category (header / keyframe / codebook / trajectory / side_info), so the
bpp breakdown sums to the file size.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Frame, SegmentPlan, TrajectorySet, validate_plan_chain
from .errors import (
    BadMagicError,
    CorruptDataError,
    DimensionMismatchError,
    TruncatedFileError,
    UnsupportedVersionError,
    UsageError,
    ValidationError,
)

SYMBOL_MIN = -127
SYMBOL_MAX = 127
ESC = 128  # escape marker, sorts after the largest inline symbol
MAX_CODE_LEN = 15
_RAW_BITS = 16

MAGIC = b"ADVC"
CONTAINER_VERSION = 1

TAG_LOSSLESS_PRED = 1
TAG_EXTERNAL_BLOB = 2
CODEC_TAGS = {"lossless_pred": TAG_LOSSLESS_PRED, "external_blob": TAG_EXTERNAL_BLOB}


# ---------------------------------------------------------------------------
# Bit packing (MSB first)


class BitWriter:
    def __init__(self):
        self._out = bytearray()
        self._acc = 0
        self._nbits = 0
        self.bit_length = 0

    def write(self, code: int, nbits: int) -> None:
        self._acc = (self._acc << nbits) | (code & ((1 << nbits) - 1))
        self._nbits += nbits
        self.bit_length += nbits
        while self._nbits >= 8:
            self._nbits -= 8
            self._out.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def getvalue(self) -> bytes:
        if self._nbits:
            return bytes(self._out) + bytes([(self._acc << (8 - self._nbits)) & 0xFF])
        return bytes(self._out)


class BitReader:
    def __init__(self, data: bytes, bit_length: Optional[int] = None):
        self._data = data
        self._pos = 0
        self.bit_length = len(data) * 8 if bit_length is None else bit_length
        if self.bit_length > len(data) * 8:
            raise TruncatedFileError(
                f"bitstream holds {len(data) * 8} bits, {self.bit_length} declared"
            )

    def read_bit(self) -> int:
        if self._pos >= self.bit_length:
            raise TruncatedFileError("bitstream exhausted")
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read(self, nbits: int) -> int:
        v = 0
        for _ in range(nbits):
            v = (v << 1) | self.read_bit()
        return v


# ---------------------------------------------------------------------------
# Canonical Huffman


def _limited_code_lengths(counts: dict, limit: int) -> dict:
    """Optimal code lengths under a maximum length (package-merge); equals
    unconstrained Huffman whenever that stays within the limit."""
    syms = sorted(counts)
    n = len(syms)
    if n == 1:
        return {syms[0]: 1}
    if n > (1 << limit):
        raise ValidationError(f"{n} symbols cannot fit {limit}-bit codes")
    items = sorted(((counts[s], (s,)) for s in syms), key=lambda it: (it[0], it[1]))
    row = list(items)
    for _ in range(limit - 1):
        packages = [
            (row[i][0] + row[i + 1][0], row[i][1] + row[i + 1][1])
            for i in range(0, len(row) - 1, 2)
        ]
        row = sorted(items + packages, key=lambda it: (it[0], it[1]))
    lengths = dict.fromkeys(syms, 0)
    for _, members in row[: 2 * (n - 1)]:
        for s in members:
            lengths[s] += 1
    return lengths


@dataclass(frozen=True)
class HuffmanCodebook:
    """Canonical prefix code over delta symbols [-127, 127] plus ESC.

    Fully determined by its code-length table: codes are assigned in
    (length, symbol) order, so the 256-nibble serialization reconstructs
    the exact code.
    """

    lengths: dict  # symbol -> bits, 1..15

    def __post_init__(self):
        if not self.lengths:
            raise ValidationError("empty codebook")
        kraft = 0.0
        for s, l in self.lengths.items():
            if not (SYMBOL_MIN <= s <= SYMBOL_MAX or s == ESC):
                raise ValidationError(f"symbol {s} outside the codebook alphabet")
            if not (1 <= l <= MAX_CODE_LEN):
                raise ValidationError(f"code length {l} for symbol {s} outside [1, {MAX_CODE_LEN}]")
            kraft += 2.0 ** (-l)
        if kraft > 1.0 + 1e-12:
            raise CorruptDataError(f"code lengths violate the Kraft inequality (sum {kraft})")
        object.__setattr__(self, "lengths", dict(self.lengths))
        # canonical assignment in (length, symbol) order
        order = sorted(self.lengths, key=lambda s: (self.lengths[s], s))
        codes = {}
        code = 0
        prev_len = self.lengths[order[0]]
        for s in order:
            l = self.lengths[s]
            code <<= l - prev_len
            if code >= (1 << l):
                raise CorruptDataError("canonical code overflow (invalid length table)")
            codes[s] = (code, l)
            code += 1
            prev_len = l
        object.__setattr__(self, "_codes", codes)
        # per-length decode tables
        by_len = {}
        for s in order:
            by_len.setdefault(self.lengths[s], []).append(s)
        first_code = {}
        running = 0
        prev_len = 0
        table = {}
        for l in sorted(by_len):
            running <<= l - prev_len
            first_code[l] = running
            table[l] = by_len[l]
            running += len(by_len[l])
            prev_len = l
        object.__setattr__(self, "_first_code", first_code)
        object.__setattr__(self, "_by_len", table)

    @classmethod
    def from_symbols(cls, symbols) -> "HuffmanCodebook":
        """Build from an iterable of delta values (escaped values count as ESC)."""
        counts = {}
        n = 0
        for s in symbols:
            s = int(s)
            key = s if SYMBOL_MIN <= s <= SYMBOL_MAX else ESC
            counts[key] = counts.get(key, 0) + 1
            n += 1
        if n == 0:
            raise ValidationError("cannot build a codebook from an empty symbol stream")
        return cls(_limited_code_lengths(counts, MAX_CODE_LEN))

    @property
    def kraft_sum(self) -> float:
        return sum(2.0 ** (-l) for l in self.lengths.values())

    def code_for(self, symbol: int):
        return self._codes[symbol]

    def serialize(self) -> bytes:
        """256 4-bit lengths: symbols -127..127 in order, then ESC."""
        nibbles = []
        for s in range(SYMBOL_MIN, SYMBOL_MAX + 1):
            nibbles.append(self.lengths.get(s, 0))
        nibbles.append(self.lengths.get(ESC, 0))
        out = bytearray()
        for i in range(0, 256, 2):
            out.append((nibbles[i] << 4) | nibbles[i + 1])
        return bytes(out)

    @classmethod
    def deserialize(cls, blob: bytes) -> "HuffmanCodebook":
        if len(blob) != 128:
            raise TruncatedFileError(f"codebook must be 128 bytes, got {len(blob)}")
        nibbles = []
        for b in blob:
            nibbles.append(b >> 4)
            nibbles.append(b & 0xF)
        lengths = {}
        for i, l in enumerate(nibbles):
            if l:
                sym = SYMBOL_MIN + i if i < 255 else ESC
                lengths[sym] = l
        if not lengths:
            raise CorruptDataError("codebook has no symbols")
        return cls(lengths)

    def decode_one(self, reader: BitReader) -> int:
        code = 0
        length = 0
        while True:
            code = (code << 1) | reader.read_bit()
            length += 1
            if length > MAX_CODE_LEN:
                raise CorruptDataError("invalid Huffman code in payload")
            row = self._by_len.get(length)
            if row is not None:
                offset = code - self._first_code[length]
                if 0 <= offset < len(row):
                    return row[offset]


def build_codebook(symbols) -> HuffmanCodebook:
    return HuffmanCodebook.from_symbols(symbols)


def entropy_encode(symbols, codebook: HuffmanCodebook):
    """Encode delta values; returns (payload bytes, bit length)."""
    w = BitWriter()
    for s in symbols:
        s = int(s)
        if SYMBOL_MIN <= s <= SYMBOL_MAX:
            try:
                code, l = codebook.code_for(s)
            except KeyError:
                raise ValidationError(f"symbol {s} missing from the codebook")
            w.write(code, l)
        else:
            if not (-(1 << (_RAW_BITS - 1)) <= s < (1 << (_RAW_BITS - 1))):
                raise ValidationError(f"delta {s} exceeds the {_RAW_BITS}-bit escape range")
            code, l = codebook.code_for(ESC)
            w.write(code, l)
            w.write(s & ((1 << _RAW_BITS) - 1), _RAW_BITS)
    return w.getvalue(), w.bit_length


def entropy_decode(data: bytes, bit_length: int, codebook: HuffmanCodebook, count: int):
    """Decode exactly ``count`` delta values (escapes resolved)."""
    r = BitReader(data, bit_length)
    out = []
    for _ in range(count):
        sym = codebook.decode_one(r)
        if sym == ESC:
            raw = r.read(_RAW_BITS)
            if raw >= 1 << (_RAW_BITS - 1):
                raw -= 1 << _RAW_BITS
            out.append(raw)
        else:
            out.append(sym)
    return out


# ---------------------------------------------------------------------------
# Trajectory quantization


@dataclass(frozen=True)
class DeltaSymbolStream:
    """Quantized trajectory deltas for one segment.

    ``symbols[i]`` holds point i's values interleaved per frame as
    (dx_2, dy_2, dx_3, dy_3, ...); shape (S, 2*(T-1)) int32.
    """

    positions: np.ndarray  # (S, 2) int64
    symbols: np.ndarray
    quant_step: float
    length: int
    width: int
    height: int

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.int64))
        sym = np.ascontiguousarray(np.asarray(self.symbols, dtype=np.int32))
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValidationError("positions must be (S, 2)")
        if sym.shape != (pos.shape[0], 2 * (self.length - 1)):
            raise ValidationError(
                f"symbols must be (S, 2*(T-1)) = ({pos.shape[0]}, {2 * (self.length - 1)}), got {sym.shape}"
            )
        pos.setflags(write=False)
        sym.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "symbols", sym)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def all_symbols(self) -> np.ndarray:
        """Segment-wide symbol sequence in point order."""
        return self.symbols.reshape(-1)

    def dequantize(self) -> TrajectorySet:
        """Rebuild tracks by accumulating step * symbol; matches the
        encoder's in-loop reference values exactly."""
        s = self.size
        tracks = np.zeros((s, self.length, 2), dtype=np.float64)
        prev = np.zeros((s, 2), dtype=np.float64)
        deltas = self.symbols.reshape(s, self.length - 1, 2).astype(np.float64)
        for t in range(1, self.length):
            prev = prev + deltas[:, t - 1] * self.quant_step
            tracks[:, t] = prev
        return TrajectorySet(self.positions, tracks, self.width, self.height)


def quantize_trajectories(ts: TrajectorySet, quant_step: float) -> DeltaSymbolStream:
    """Quantize frame-to-frame displacement differences with the running
    dequantized value as the reference, so errors never accumulate."""
    if not (quant_step > 0):
        raise ValidationError("quant_step must be positive")
    s, length = ts.size, ts.length
    symbols = np.empty((s, max(0, length - 1), 2), dtype=np.int64)
    prev = np.zeros((s, 2), dtype=np.float64)
    for t in range(1, length):
        raw = (ts.tracks[:, t, :] - prev) / quant_step
        step = np.rint(raw)
        symbols[:, t - 1] = step.astype(np.int64)
        prev = prev + step * quant_step
    if symbols.size and np.abs(symbols).max() >= (1 << (_RAW_BITS - 1)):
        raise ValidationError("quantized delta exceeds the escape range; increase quant_step")
    return DeltaSymbolStream(
        positions=ts.positions,
        symbols=symbols.reshape(s, -1).astype(np.int32),
        quant_step=float(quant_step),
        length=length,
        width=ts.width,
        height=ts.height,
    )


# ---------------------------------------------------------------------------
# Keyframe codecs


def _paeth_predict(v: np.ndarray) -> np.ndarray:
    """Paeth predictor over the original image, vectorized; neighbors
    outside the image are 0 (PNG convention)."""
    a = np.zeros_like(v, dtype=np.int32)  # left
    b = np.zeros_like(a)  # up
    c = np.zeros_like(a)  # up-left
    a[:, 1:] = v[:, :-1]
    b[1:, :] = v[:-1, :]
    c[1:, 1:] = v[:-1, :-1]
    p = a + b - c
    pa = np.abs(p - a)
    pb = np.abs(p - b)
    pc = np.abs(p - c)
    pred = np.where((pa <= pb) & (pa <= pc), a, np.where(pb <= pc, b, c))
    return pred.astype(np.int32)


_KF_HEADER = struct.Struct("<HHBx")


def keyframe_encode(frame: Frame, codec_tag: int, external_bytes: Optional[bytes] = None) -> bytes:
    if codec_tag == TAG_EXTERNAL_BLOB:
        if external_bytes is None:
            raise UsageError("external_blob encoding needs caller-supplied bytes")
        return bytes(external_bytes)
    if codec_tag != TAG_LOSSLESS_PRED:
        raise UsageError(f"unknown keyframe codec tag {codec_tag}")
    residuals = []
    for ch in range(frame.channels):
        v = frame.samples[:, :, ch].astype(np.int32)
        res = (v - _paeth_predict(v)) & 0xFF
        residuals.append(res.reshape(-1))
    syms = ((np.concatenate(residuals) + 128) & 0xFF).astype(np.int32) - 128
    codebook = HuffmanCodebook.from_symbols(syms)
    payload, bits = entropy_encode(syms, codebook)
    head = _KF_HEADER.pack(frame.width, frame.height, frame.channels)
    return head + codebook.serialize() + struct.pack("<II", len(syms), bits) + payload


def keyframe_decode(
    blob: bytes, codec_tag: int, external_frame: Optional[Frame] = None
) -> Frame:
    if codec_tag == TAG_EXTERNAL_BLOB:
        if external_frame is None:
            raise UsageError(
                "external_blob keyframes need a sidecar decoded frame directory"
            )
        return external_frame
    if codec_tag != TAG_LOSSLESS_PRED:
        raise UsageError(f"unknown keyframe codec tag {codec_tag}")
    if len(blob) < _KF_HEADER.size + 128 + 8:
        raise TruncatedFileError("keyframe blob shorter than its header")
    width, height, channels = _KF_HEADER.unpack_from(blob)
    off = _KF_HEADER.size
    codebook = HuffmanCodebook.deserialize(blob[off : off + 128])
    off += 128
    count, bits = struct.unpack_from("<II", blob, off)
    off += 8
    if count != width * height * channels:
        raise CorruptDataError("keyframe symbol count does not match dimensions")
    if len(blob) - off < (bits + 7) // 8:
        raise TruncatedFileError("keyframe payload truncated")
    syms = entropy_decode(blob[off:], bits, codebook, count)
    res = (np.asarray(syms, dtype=np.int32) & 0xFF).reshape(channels, height, width)
    out = np.empty((height, width, channels), dtype=np.uint8)
    for ch in range(channels):
        plane = np.zeros((height, width), dtype=np.int32)
        r = res[ch]
        for y in range(height):
            row = plane[y]
            up = plane[y - 1] if y else None
            for x in range(width):
                a = int(row[x - 1]) if x else 0
                b = int(up[x]) if y else 0
                c = int(up[x - 1]) if (x and y) else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                row[x] = (int(r[y, x]) + pred) & 0xFF
        out[:, :, ch] = plane.astype(np.uint8)
    return Frame(out)


# ---------------------------------------------------------------------------
# Container


def _write_varint(buf: bytearray, value: int) -> None:
    if value < 0:
        raise ValidationError("varint values must be nonnegative")
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            buf.append(b | 0x80)
        else:
            buf.append(b)
            return


class _Cursor:
    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.pos = offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError("container truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def varint(self) -> int:
        shift = 0
        value = 0
        while True:
            (b,) = self.take(1)
            value |= (b & 0x7F) << shift
            if not (b & 0x80):
                return value
            shift += 7
            if shift > 63:
                raise CorruptDataError("varint too long")


_GLOBAL_HEADER = struct.Struct("<4sHHHBxIffffHIHI")


@dataclass(frozen=True)
class SegmentPayload:
    """Per-segment data handed to the container writer."""

    sigma: float
    stream: DeltaSymbolStream


@dataclass(frozen=True)
class SegmentRecord:
    plan: SegmentPlan
    sigma: float
    stream: DeltaSymbolStream
    bits: dict  # per-category bit counts for this record


@dataclass(frozen=True)
class ContainerContents:
    width: int
    height: int
    channels: int
    total_frames: int
    fps: float
    quant_step: float
    config_echo: dict
    segments: tuple
    keyframes: dict  # frame index -> (codec_tag, bytes)
    accounting: dict  # category -> bits (file level)
    file_bytes: int

    @property
    def plans(self) -> list:
        return [seg.plan for seg in self.segments]

    def echo_config(self):
        """Header config echo as an object write_container accepts, so a
        parsed container can be rewritten without the original config."""
        from types import SimpleNamespace

        return SimpleNamespace(quant_step=self.quant_step, **self.config_echo)


def write_container(
    plans: Sequence[SegmentPlan],
    keyframes: dict,
    payloads: Sequence[SegmentPayload],
    config,
    path,
    fps: float = 30.0,
    channels: int = 3,
) -> int:
    """Serialize segments + keyframe blobs; returns the byte count.

    ``keyframes`` maps absolute frame indices to (codec_tag, blob); every
    plan boundary must be present.  Blobs shared by adjacent segments are
    written once and back-referenced.
    """
    validate_plan_chain(plans)
    if len(plans) != len(payloads):
        raise DimensionMismatchError("one payload per plan required")
    first = payloads[0].stream
    total_frames = plans[-1].end + 1
    header = _GLOBAL_HEADER.pack(
        MAGIC,
        CONTAINER_VERSION,
        first.width,
        first.height,
        channels,
        total_frames,
        float(fps),
        float(config.quant_step),
        float(config.theta_occ),
        float(config.theta_perc),
        config.hysteresis,
        config.budget,
        config.t_max,
        len(plans),
    )
    out = bytearray(header)
    written = {}  # frame index -> inline ordinal
    ordinal = 0

    for plan, payload in zip(plans, payloads):
        stream = payload.stream
        if stream.length != plan.length:
            raise DimensionMismatchError(
                f"stream length {stream.length} != plan length {plan.length}"
            )
        if (stream.width, stream.height) != (first.width, first.height):
            raise DimensionMismatchError("all segments must share the frame dimensions")
        rec = bytearray()
        _write_varint(rec, plan.length)
        rec += struct.pack("<f", float(payload.sigma))
        for f_idx in (plan.start, plan.end):
            if f_idx in written:
                rec += struct.pack("<BI", 1, written[f_idx])
            else:
                try:
                    tag, blob = keyframes[f_idx]
                except KeyError:
                    raise UsageError(f"missing keyframe blob for frame {f_idx}")
                rec += struct.pack("<BBI", 0, tag, len(blob))
                rec += blob
                written[f_idx] = ordinal
                ordinal += 1
        _write_varint(rec, stream.size)
        coords = stream.positions
        if np.any(coords >= (1 << 16)):
            raise ValidationError("coordinates exceed 16 bits")
        rec += coords.astype("<u2").tobytes()
        n_syms = stream.symbols.size
        if n_syms:
            codebook = HuffmanCodebook.from_symbols(stream.all_symbols())
            payload_bytes, bits = entropy_encode(stream.all_symbols(), codebook)
            rec += codebook.serialize()
            rec += struct.pack("<I", bits)
            rec += payload_bytes
        else:
            rec += struct.pack("<I", 0)
        rec += struct.pack("<I", zlib.crc32(bytes(rec)))
        out += rec
    Path(path).write_bytes(bytes(out))
    return len(out)


def read_container(path) -> ContainerContents:
    raw = Path(path).read_bytes()
    if len(raw) < _GLOBAL_HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the container header")
    (
        magic,
        version,
        width,
        height,
        channels,
        total_frames,
        fps,
        quant_step,
        theta_occ,
        theta_perc,
        hysteresis,
        budget,
        t_max,
        n_segments,
    ) = _GLOBAL_HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
    if version != CONTAINER_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported container version {version}")

    cur = _Cursor(raw, _GLOBAL_HEADER.size)
    accounting = {
        "header": _GLOBAL_HEADER.size * 8,
        "keyframe": 0,
        "codebook": 0,
        "trajectory": 0,
        "side_info": 0,
    }
    segments = []
    keyframes = {}
    inline_frames = []  # ordinal -> frame index
    start = 0
    for seg_idx in range(n_segments):
        rec_begin = cur.pos
        try:
            length = cur.varint()
            (sigma,) = cur.unpack("<f")
            kf_bits = 0
            boundary = []
            for _ in range(2):
                (kind,) = cur.unpack("<B")
                if kind == 0:
                    tag, blob_len = cur.unpack("<BI")
                    blob = cur.take(blob_len)
                    kf_bits += blob_len * 8
                    boundary.append(("inline", tag, blob))
                elif kind == 1:
                    (ref,) = cur.unpack("<I")
                    boundary.append(("ref", ref, None))
                else:
                    raise CorruptDataError(f"segment {seg_idx}: unknown keyframe ref kind {kind}")
            n_points = cur.varint()
            coords = np.frombuffer(cur.take(n_points * 4), dtype="<u2").reshape(n_points, 2)
            n_syms = n_points * 2 * (length - 1)
            cb_bits = 0
            if n_syms:
                codebook = HuffmanCodebook.deserialize(cur.take(128))
                cb_bits = 128 * 8
            (payload_bits,) = cur.unpack("<I")
            payload = cur.take((payload_bits + 7) // 8)
            crc_calc = zlib.crc32(raw[rec_begin : cur.pos])
            (crc_stored,) = cur.unpack("<I")
        except TruncatedFileError:
            raise TruncatedFileError(f"{path}: segment record {seg_idx} truncated")
        except CorruptDataError as exc:
            raise CorruptDataError(f"{path}: segment record {seg_idx}: {exc}")
        if crc_calc != crc_stored:
            raise CorruptDataError(f"{path}: CRC mismatch in segment record {seg_idx}")

        end = start + length - 1
        plan = SegmentPlan(start, end)
        for f_idx, (kind, a, b) in zip((plan.start, plan.end), boundary):
            if kind == "inline":
                keyframes[f_idx] = (a, bytes(b))
                inline_frames.append(f_idx)
            else:
                if a >= len(inline_frames):
                    raise CorruptDataError(
                        f"{path}: segment {seg_idx} references unknown keyframe ordinal {a}"
                    )
                src = inline_frames[a]
                keyframes[f_idx] = keyframes[src]

        if n_syms:
            symbols = np.asarray(
                entropy_decode(payload, payload_bits, codebook, n_syms), dtype=np.int32
            ).reshape(n_points, -1)
        else:
            symbols = np.zeros((n_points, 0), dtype=np.int32)
        stream = DeltaSymbolStream(
            positions=coords.astype(np.int64),
            symbols=symbols,
            quant_step=quant_step,
            length=length,
            width=width,
            height=height,
        )
        rec_bits = (cur.pos - rec_begin) * 8
        traj_bits = ((payload_bits + 7) // 8) * 8
        bits = {
            "keyframe": kf_bits,
            "codebook": cb_bits,
            "trajectory": traj_bits,
            "side_info": rec_bits - kf_bits - cb_bits - traj_bits,
        }
        for k, v in bits.items():
            accounting[k] += v
        segments.append(SegmentRecord(plan=plan, sigma=sigma, stream=stream, bits=bits))
        start = end

    if cur.pos != len(raw):
        raise CorruptDataError(f"{path}: {len(raw) - cur.pos} trailing bytes after last record")
    if segments and segments[-1].plan.end != total_frames - 1:
        raise CorruptDataError(f"{path}: segments cover {segments[-1].plan.end + 1} frames, header says {total_frames}")
    return ContainerContents(
        width=width,
        height=height,
        channels=channels,
        total_frames=total_frames,
        fps=fps,
        quant_step=quant_step,
        config_echo={
            "theta_occ": theta_occ,
            "theta_perc": theta_perc,
            "hysteresis": hysteresis,
            "budget": budget,
            "t_max": t_max,
        },
        segments=tuple(segments),
        keyframes=keyframes,
        accounting=accounting,
        file_bytes=len(raw),
    )


def bpp_accounting(contents: ContainerContents) -> dict:
    """Bits-per-pixel breakdown; categories sum exactly to the file size."""
    total_bits = contents.file_bytes * 8
    cats = dict(contents.accounting)
    if sum(cats.values()) != total_bits:
        raise CorruptDataError("accounting categories do not sum to the file size")
    denom = contents.total_frames * contents.width * contents.height
    return {
        "total_bits": total_bits,
        "pixels": denom,
        "bpp": total_bits / denom,
        **{f"{k}_bits": v for k, v in cats.items()},
        **{f"{k}_bpp": v / denom for k, v in cats.items()},
    }
