import numpy as np
import pytest

from advc.core import (
    CodecConfig,
    Displacement,
    Frame,
    MotionField,
    SegmentPlan,
    TrajectorySet,
    round_half_away,
    validate_plan_chain,
)
from advc.errors import ValidationError


class TestFrame:
    def test_rejects_small_frames(self):
        with pytest.raises(ValidationError):
            Frame(np.zeros((4, 12, 3), dtype=np.uint8))
        with pytest.raises(ValidationError):
            Frame(np.zeros((12, 3, 3), dtype=np.uint8))

    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValidationError):
            Frame(np.zeros((8, 8, 2), dtype=np.uint8))

    def test_requires_uint8(self):
        with pytest.raises(ValidationError):
            Frame(np.zeros((8, 8, 3), dtype=np.float32))

    def test_grayscale_promotes_to_3d(self):
        f = Frame(np.zeros((8, 8), dtype=np.uint8))
        assert f.channels == 1

    def test_immutable(self):
        f = Frame(np.zeros((8, 8, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            f.samples[0, 0, 0] = 1


class TestDisplacement:
    def test_finite_ok(self):
        assert Displacement(1.5, -2.0).validate() == (1.5, -2.0)

    def test_nan_rejected(self):
        with pytest.raises(ValidationError):
            Displacement(float("nan"), 0.0).validate()


class TestMotionField:
    def test_nonzero_first_slice_rejected(self):
        data = np.zeros((3, 4, 4, 2), dtype=np.float32)
        data[0, 1, 1, 0] = 0.25
        with pytest.raises(ValidationError):
            MotionField(data)

    def test_nan_rejected(self):
        data = np.zeros((2, 4, 4, 2), dtype=np.float32)
        data[1, 0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            MotionField(data)

    def test_visibility_shape_checked(self):
        data = np.zeros((2, 4, 4, 2), dtype=np.float32)
        with pytest.raises(ValidationError):
            MotionField(data, visibility=np.ones((2, 4, 3), dtype=bool))

    def test_dtype_preserved(self):
        f32 = MotionField(np.zeros((2, 4, 4, 2), dtype=np.float32))
        f64 = MotionField(np.zeros((2, 4, 4, 2), dtype=np.float64))
        assert f32.data.dtype == np.float32
        assert f64.data.dtype == np.float64


class TestTrajectorySet:
    def _tracks(self, n, t=3):
        tr = np.zeros((n, t, 2))
        tr[:, 1:] = 1.0
        return tr

    def test_duplicate_positions_rejected(self):
        pos = np.array([[1, 2], [1, 2]])
        with pytest.raises(ValidationError):
            TrajectorySet(pos, self._tracks(2), 8, 8)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValidationError):
            TrajectorySet(np.array([[8, 0]]), self._tracks(1), 8, 8)
        with pytest.raises(ValidationError):
            TrajectorySet(np.array([[-1, 0]]), self._tracks(1), 8, 8)

    def test_track_must_start_at_zero(self):
        tr = self._tracks(1)
        tr[0, 0, 0] = 0.5
        with pytest.raises(ValidationError):
            TrajectorySet(np.array([[1, 1]]), tr, 8, 8)

    def test_valid_set(self):
        ts = TrajectorySet(np.array([[0, 0], [7, 7]]), self._tracks(2), 8, 8)
        assert ts.size == 2 and ts.length == 3


class TestSegmentPlan:
    def test_minimum_length(self):
        with pytest.raises(ValidationError):
            SegmentPlan(3, 3)
        assert SegmentPlan(3, 4).length == 2

    def test_chain_overlap(self):
        plans = [SegmentPlan(0, 4), SegmentPlan(4, 9), SegmentPlan(9, 11)]
        validate_plan_chain(plans, 12)
        broken = [SegmentPlan(0, 4), SegmentPlan(5, 9)]
        with pytest.raises(ValidationError):
            validate_plan_chain(broken)


class TestCodecConfig:
    def test_paper_defaults(self):
        cfg = CodecConfig()
        assert cfg.theta_occ == 0.8
        assert cfg.theta_perc == 0.85
        assert cfg.budget == 300
        assert cfg.hysteresis == 1

    def test_ranges(self):
        with pytest.raises(ValidationError):
            CodecConfig(theta_occ=0.0)
        with pytest.raises(ValidationError):
            CodecConfig(theta_perc=1.5)
        with pytest.raises(ValidationError):
            CodecConfig(budget=0)
        with pytest.raises(ValidationError):
            CodecConfig(quant_step=0.0)
        with pytest.raises(ValidationError):
            CodecConfig(sigma_candidates=())
        with pytest.raises(ValidationError):
            CodecConfig(t_max=1)

    def test_grid_within_budget(self):
        with pytest.raises(ValidationError):
            CodecConfig(budget=8, grid_cells=(3, 3))

    def test_auto_grid_spends_half_budget(self):
        cfg = CodecConfig(budget=300)
        rows, cols = cfg.effective_grid()
        assert rows == cols == 12  # 12*12=144 <= 150
        assert cfg.effective_grid(width=8, height=8) == (8, 8)


def test_round_half_away():
    vals = np.array([0.5, 1.5, -0.5, -1.5, 2.4, -2.4, 0.0])
    expect = np.array([1.0, 2.0, -1.0, -2.0, 2.0, -2.0, 0.0])
    assert np.array_equal(round_half_away(vals), expect)
