import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advc.bitstream import (
    CODEC_TAGS,
    ESC,
    MAX_CODE_LEN,
    HuffmanCodebook,
    SegmentPayload,
    TAG_EXTERNAL_BLOB,
    TAG_LOSSLESS_PRED,
    bpp_accounting,
    build_codebook,
    entropy_decode,
    entropy_encode,
    keyframe_decode,
    keyframe_encode,
    quantize_trajectories,
    read_container,
    write_container,
)
from advc.core import CodecConfig, Frame, SegmentPlan, TrajectorySet
from advc.errors import (
    BadMagicError,
    CorruptDataError,
    TruncatedFileError,
    UnsupportedVersionError,
    UsageError,
    ValidationError,
)
from conftest import mk_frame, textured_frame


def make_set(tracks, width=16, height=16, positions=None):
    tracks = np.asarray(tracks, dtype=np.float64)
    n = tracks.shape[0]
    if positions is None:
        positions = np.stack([np.arange(n), np.zeros(n, dtype=np.int64)], axis=1)
    return TrajectorySet(positions, tracks, width, height)


class TestQuantize:
    def test_constant_velocity_symbols(self):
        tracks = np.zeros((1, 4, 2))
        tracks[0, :, 0] = [0, 1, 2, 3]
        stream = quantize_trajectories(make_set(tracks), 0.5)
        assert stream.symbols.reshape(3, 2).tolist() == [[2, 0], [2, 0], [2, 0]]

    def test_zero_motion_all_zero_symbols(self):
        stream = quantize_trajectories(make_set(np.zeros((3, 5, 2))), 0.5)
        assert not stream.symbols.any()

    def test_dequantize_matches_encoder_reference(self):
        rng = np.random.default_rng(1)
        tracks = np.cumsum(rng.normal(0, 1.5, (4, 6, 2)), axis=1)
        tracks[:, 0] = 0
        stream = quantize_trajectories(make_set(tracks), 0.5)
        rebuilt = stream.dequantize()
        assert np.abs(rebuilt.tracks - make_set(tracks).tracks).max() <= 0.25 + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_error_bound_every_frame(self, data):
        rng = np.random.default_rng(data.draw(st.integers(0, 10**6)))
        step = data.draw(st.sampled_from([0.1, 0.25, 0.5, 1.0]))
        n, t = int(rng.integers(1, 5)), int(rng.integers(2, 8))
        tracks = np.cumsum(rng.normal(0, 2, (n, t, 2)), axis=1)
        tracks[:, 0] = 0
        ts = make_set(tracks)
        rebuilt = quantize_trajectories(ts, step).dequantize()
        assert np.abs(rebuilt.tracks - ts.tracks).max() <= step / 2 + 1e-12


class TestHuffman:
    def test_textbook_lengths(self):
        cb = HuffmanCodebook(
            {0: 1, 1: 2, 2: 2}
        )  # canonical form of counts {0: 2, 1: 1, 2: 1}
        built = build_codebook([0, 0, 1, 2])
        assert built.lengths == cb.lengths

    def test_equiprobable_four(self):
        cb = build_codebook([1, 2, 3, 4])
        assert sorted(cb.lengths.values()) == [2, 2, 2, 2]

    def test_single_symbol_gets_length_one(self):
        cb = build_codebook([7, 7, 7])
        assert cb.lengths == {7: 1}

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            build_codebook([])

    def test_kraft_inequality(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            syms = rng.integers(-40, 40, rng.integers(1, 400))
            assert build_codebook(syms).kraft_sum <= 1.0 + 1e-12

    def test_average_length_within_entropy_plus_one(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            syms = rng.integers(-20, 20, 3000) + rng.integers(-5, 5, 3000)
            cb = build_codebook(syms)
            vals, counts = np.unique(syms, return_counts=True)
            p = counts / counts.sum()
            entropy = -(p * np.log2(p)).sum()
            avg = sum(cb.lengths[int(v)] * c for v, c in zip(vals, counts)) / counts.sum()
            assert avg <= entropy + 1.0 + 1e-12

    def test_canonical_reconstruction_from_lengths(self):
        rng = np.random.default_rng(4)
        syms = np.concatenate([rng.integers(-30, 30, 500), [4000, -9000]])
        cb = build_codebook(syms)
        rebuilt = HuffmanCodebook.deserialize(cb.serialize())
        assert rebuilt.lengths == cb.lengths
        for s in cb.lengths:
            assert rebuilt.code_for(s) == cb.code_for(s)

    def test_length_limit_respected_on_skewed_counts(self):
        # Fibonacci-like counts drive plain Huffman past 15 bits
        counts = {}
        a, b = 1, 1
        for s in range(25):
            counts[s] = a
            a, b = b, a + b
        stream = [s for s, c in counts.items() for _ in range(c)]
        cb = build_codebook(stream)
        assert max(cb.lengths.values()) <= MAX_CODE_LEN
        assert cb.kraft_sum <= 1.0 + 1e-12
        # still decodable end to end
        data, bits = entropy_encode(stream, cb)
        assert entropy_decode(data, bits, cb, len(stream)) == stream


class TestEntropyCoding:
    def test_degenerate_two_zero_symbols(self):
        cb = build_codebook([0, 0])
        data, bits = entropy_encode([0, 0], cb)
        assert bits == 2
        assert entropy_decode(data, bits, cb, 2) == [0, 0]

    def test_escape_roundtrip(self):
        syms = [500, -3, 500, 17, -30000]
        cb = build_codebook(syms)
        assert ESC in cb.lengths
        data, bits = entropy_encode(syms, cb)
        assert entropy_decode(data, bits, cb, len(syms)) == syms

    def test_random_roundtrip(self):
        rng = np.random.default_rng(5)
        syms = rng.integers(-200, 200, 20000).tolist()
        cb = build_codebook(syms)
        data, bits = entropy_encode(syms, cb)
        assert entropy_decode(data, bits, cb, len(syms)) == syms

    def test_truncated_bitstream(self):
        syms = list(range(-5, 6)) * 10
        cb = build_codebook(syms)
        data, bits = entropy_encode(syms, cb)
        with pytest.raises(TruncatedFileError):
            entropy_decode(data[: len(data) // 2], bits // 2, cb, len(syms))

    def test_invalid_code(self):
        cb = build_codebook([0, 0, 0])  # single symbol, code '0'
        with pytest.raises(CorruptDataError):
            entropy_decode(b"\xff\xff", 16, cb, 1)

    def test_symbol_missing_from_codebook(self):
        cb = build_codebook([1, 2])
        with pytest.raises(ValidationError):
            entropy_encode([3], cb)


class TestKeyframeCodec:
    def test_lossless_roundtrip_random(self):
        rng = np.random.default_rng(6)
        for channels in (1, 3):
            frame = Frame(rng.integers(0, 256, (12, 10, channels), dtype=np.uint8))
            blob = keyframe_encode(frame, TAG_LOSSLESS_PRED)
            out = keyframe_decode(blob, TAG_LOSSLESS_PRED)
            assert np.array_equal(out.samples, frame.samples)

    def test_lossless_roundtrip_textured(self):
        frame = textured_frame(32, 24, seed=9)
        blob = keyframe_encode(frame, TAG_LOSSLESS_PRED)
        assert np.array_equal(keyframe_decode(blob, TAG_LOSSLESS_PRED).samples, frame.samples)

    def test_gradient_compresses_below_half(self):
        ramp = np.tile(np.arange(64, dtype=np.uint8) * 2, (64, 1))
        frame = Frame(np.stack([ramp, ramp, ramp], axis=2))
        blob = keyframe_encode(frame, TAG_LOSSLESS_PRED)
        assert len(blob) < 0.5 * frame.samples.size

    def test_external_blob_passthrough(self):
        payload = b"opaque keyframe bytes"
        blob = keyframe_encode(textured_frame(8, 8), TAG_EXTERNAL_BLOB, external_bytes=payload)
        assert blob == payload
        frame = textured_frame(8, 8)
        assert keyframe_decode(blob, TAG_EXTERNAL_BLOB, external_frame=frame) is frame

    def test_external_blob_requires_sidecar(self):
        with pytest.raises(UsageError):
            keyframe_decode(b"xx", TAG_EXTERNAL_BLOB)
        with pytest.raises(UsageError):
            keyframe_encode(textured_frame(8, 8), TAG_EXTERNAL_BLOB)

    def test_unknown_tag(self):
        with pytest.raises(UsageError):
            keyframe_encode(textured_frame(8, 8), 99)


class _ContainerFixture:
    def build(self, tmp_path, n_points=3, quant_step=0.5, name="c.advc", plans=None):
        width = height = 16
        plans = plans or [SegmentPlan(0, 3), SegmentPlan(3, 6)]
        config = CodecConfig(quant_step=quant_step, budget=32)
        rng = np.random.default_rng(8)
        payloads = []
        keyframes = {}
        for plan in plans:
            tracks = np.cumsum(rng.normal(0, 1, (n_points, plan.length, 2)), axis=1)
            tracks[:, 0] = 0
            pos = np.stack(
                [rng.permutation(width)[:n_points], rng.permutation(height)[:n_points]], axis=1
            )
            ts = TrajectorySet(pos, tracks, width, height)
            payloads.append(SegmentPayload(4.0, quantize_trajectories(ts, quant_step)))
            for f in (plan.start, plan.end):
                if f not in keyframes:
                    keyframes[f] = (
                        TAG_LOSSLESS_PRED,
                        keyframe_encode(textured_frame(width, height, seed=f), TAG_LOSSLESS_PRED),
                    )
        path = tmp_path / name
        n = write_container(plans, keyframes, payloads, config, path)
        return path, n, plans, keyframes, payloads, config


class TestContainer(_ContainerFixture):
    def test_roundtrip_fields(self, tmp_path):
        path, n, plans, keyframes, payloads, _ = self.build(tmp_path)
        contents = read_container(path)
        assert contents.file_bytes == n
        assert contents.plans == plans
        assert contents.total_frames == plans[-1].end + 1
        for seg, payload in zip(contents.segments, payloads):
            assert seg.sigma == 4.0
            assert np.array_equal(seg.stream.positions, payload.stream.positions)
            assert np.array_equal(seg.stream.symbols, payload.stream.symbols)
            assert np.array_equal(
                seg.stream.dequantize().tracks, payload.stream.dequantize().tracks
            )
        for f, (tag, blob) in keyframes.items():
            assert contents.keyframes[f] == (tag, blob)

    def test_write_read_write_byte_identity(self, tmp_path):
        path, _, _, _, _, _ = self.build(tmp_path)
        contents = read_container(path)
        path2 = tmp_path / "again.advc"
        write_container(
            contents.plans,
            contents.keyframes,
            [SegmentPayload(s.sigma, s.stream) for s in contents.segments],
            contents.echo_config(),
            path2,
            fps=contents.fps,
            channels=contents.channels,
        )
        assert path.read_bytes() == path2.read_bytes()

    def test_interior_keyframes_stored_once(self, tmp_path):
        path, _, plans, keyframes, _, _ = self.build(tmp_path)
        contents = read_container(path)
        unique_blob_bits = sum(len(blob) * 8 for _, blob in keyframes.values())
        duplicated_blob_bits = sum(
            len(keyframes[f][1]) * 8 for p in plans for f in (p.start, p.end)
        )
        assert contents.accounting["keyframe"] == unique_blob_bits
        assert duplicated_blob_bits > unique_blob_bits
        # shared boundary decodes identically for both segments
        assert contents.keyframes[plans[0].end] == contents.keyframes[plans[1].start]

    def test_extra_point_grows_file_by_coordinate_width(self, tmp_path):
        p3, n3, *_ = self.build(tmp_path, n_points=3, name="p3.advc")
        p4, n4, *_ = self.build(tmp_path, n_points=4, name="p4.advc")
        assert n4 - n3 >= 2 * 4  # two segments, 32 bits of coordinates each

    def test_crc_corruption_reports_record(self, tmp_path):
        path, *_ = self.build(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[-20] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptDataError, match="record 1"):
            read_container(path)

    def test_bad_magic_and_version(self, tmp_path):
        path, *_ = self.build(tmp_path)
        raw = bytearray(path.read_bytes())
        good = bytes(raw)
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            read_container(path)
        raw = bytearray(good)
        raw[4] = 77
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            read_container(path)

    def test_truncation(self, tmp_path):
        path, *_ = self.build(tmp_path)
        path.write_bytes(path.read_bytes()[:-9])
        with pytest.raises((TruncatedFileError, CorruptDataError)):
            read_container(path)

    def test_bpp_accounting_sums_exactly(self, tmp_path):
        path, n, plans, *_ = self.build(tmp_path)
        contents = read_container(path)
        acc = bpp_accounting(contents)
        cats = ["header", "keyframe", "codebook", "trajectory", "side_info"]
        assert sum(acc[f"{c}_bits"] for c in cats) == n * 8 == acc["total_bits"]
        assert acc["bpp"] == pytest.approx(n * 8 / (contents.total_frames * 16 * 16))

    def test_zero_motion_symbols_all_zero(self, tmp_path):
        width = height = 16
        plan = [SegmentPlan(0, 2)]
        ts = TrajectorySet(np.array([[2, 2], [9, 9]]), np.zeros((2, 3, 2)), width, height)
        payloads = [SegmentPayload(2.0, quantize_trajectories(ts, 0.5))]
        kf = {
            0: (TAG_LOSSLESS_PRED, keyframe_encode(textured_frame(16, 16, seed=0), TAG_LOSSLESS_PRED)),
            2: (TAG_LOSSLESS_PRED, keyframe_encode(textured_frame(16, 16, seed=1), TAG_LOSSLESS_PRED)),
        }
        path = tmp_path / "static.advc"
        write_container(plan, kf, payloads, CodecConfig(), path)
        contents = read_container(path)
        assert len(contents.keyframes) == 2
        assert not contents.segments[0].stream.symbols.any()

    def test_external_blob_accounting(self, tmp_path):
        width = height = 16
        plan = [SegmentPlan(0, 2)]
        ts = TrajectorySet(np.array([[1, 1]]), np.zeros((1, 3, 2)), width, height)
        payloads = [SegmentPayload(2.0, quantize_trajectories(ts, 0.5))]
        blob_a, blob_b = b"A" * 321, b"B" * 123
        kf = {0: (TAG_EXTERNAL_BLOB, blob_a), 2: (TAG_EXTERNAL_BLOB, blob_b)}
        path = tmp_path / "ext.advc"
        write_container(plan, kf, payloads, CodecConfig(), path)
        contents = read_container(path)
        assert contents.accounting["keyframe"] == 8 * (321 + 123)
        assert contents.keyframes[0] == (TAG_EXTERNAL_BLOB, blob_a)
