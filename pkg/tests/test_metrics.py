import numpy as np
import pytest

from advc.core import Frame, MotionField, SegmentPlan
from advc.errors import DimensionMismatchError
from advc.metrics import (
    PSNR_CAP_DB,
    build_report,
    endpoint_error,
    psnr,
    ssim,
    windowed_ssim,
)
from conftest import mk_frame, textured_frame


class TestEndpointError:
    def test_identical_fields(self):
        f = MotionField(np.zeros((3, 8, 8, 2)))
        assert endpoint_error(f, f) == 0.0

    def test_uniform_offset_is_345(self):
        truth = np.zeros((2, 4, 4, 2))
        est = truth + [3.0, 4.0]
        assert endpoint_error(truth, est) == pytest.approx(5.0)

    def test_matches_pointwise_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0, 2, (3, 8, 8, 2))
        b = rng.normal(0, 2, (3, 8, 8, 2))
        total = 0.0
        for t in range(3):
            for y in range(8):
                for x in range(8):
                    dx = a[t, y, x, 0] - b[t, y, x, 0]
                    dy = a[t, y, x, 1] - b[t, y, x, 1]
                    total += np.sqrt(dx * dx + dy * dy)
        assert abs(endpoint_error(a, b) - total / (3 * 8 * 8)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            endpoint_error(np.zeros((2, 4, 4, 2)), np.zeros((3, 4, 4, 2)))


class TestPsnr:
    def test_identical_capped(self):
        f = textured_frame(16, 16)
        assert psnr(f, f) == PSNR_CAP_DB

    def test_uniform_offset_closed_form(self):
        base = np.full((8, 8, 3), 100, dtype=np.uint8)
        shifted = (base + 16).astype(np.uint8)  # no clipping at 116
        val = psnr(mk_frame(base), mk_frame(shifted))
        assert val == pytest.approx(10.0 * np.log10(255.0 ** 2 / 256.0), abs=1e-9)
        assert val == pytest.approx(24.05, abs=0.01)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            psnr(textured_frame(16, 16), textured_frame(16, 8))


class TestSsim:
    def test_identical_is_exactly_one(self):
        f = textured_frame(24, 16)
        assert ssim(f, f) == 1.0

    def test_symmetric_bitwise(self):
        a = textured_frame(24, 16, seed=1)
        b = textured_frame(24, 16, seed=2)
        assert ssim(a, b) == ssim(b, a)

    def test_windowed_mask_fallback(self):
        a = np.zeros((16, 16))
        assert windowed_ssim(a, a, mask=np.zeros((16, 16), bool)) == 0.0


class TestBuildReport:
    def test_static_end_to_end_totals(self):
        frames = [textured_frame(16, 16) for _ in range(5)]
        plans = [SegmentPlan(0, 4)]
        infos = [
            {
                "bits_keyframe": 800,
                "bits_trajectory": 100,
                "bits_codebook": 1024,
                "bits_side_info": 76,
                "points": 4,
                "sigma": 2.0,
                "r_initial": 0.0,
                "r_final": 0.0,
                "epe": 0.0,
            }
        ]
        bpp = {"bpp": 0.1, "total_bits": 2000}
        reports, summary = build_report(frames, frames, plans, infos, bpp)
        assert reports[0].psnr == PSNR_CAP_DB
        assert reports[0].ssim == 1.0
        assert reports[0].epe == 0.0
        assert summary["psnr"] == PSNR_CAP_DB
        assert summary["epe"] == 0.0
        assert summary["bpp"] is bpp
        assert summary["frames"] == 5 and summary["segments"] == 1

    def test_frame_count_mismatch(self):
        frames = [textured_frame(16, 16)] * 3
        with pytest.raises(DimensionMismatchError):
            build_report(frames, frames[:2], [SegmentPlan(0, 2)], [{}], {})
