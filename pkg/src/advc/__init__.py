"""Sparse-trajectory video compression toolkit.

Encoder-side active sampling (content-adaptive GOP segmentation and
budget-aware trajectory selection), entropy-coded ADVC containers, and a
deterministic warp-based reference decoder with metrics and sweep
harnesses.
"""

from ._kernels import BACKEND
from .core import (
    CodecConfig,
    Displacement,
    Frame,
    MotionField,
    SegmentPlan,
    TrajectorySet,
)
from .pipeline import EncodeResult, encode_video
from .decode import ReconstructionConfig, decode_container, render_trajectory_video
from .bitstream import bpp_accounting, read_container

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CodecConfig",
    "Displacement",
    "EncodeResult",
    "Frame",
    "MotionField",
    "ReconstructionConfig",
    "SegmentPlan",
    "TrajectorySet",
    "bpp_accounting",
    "decode_container",
    "encode_video",
    "read_container",
    "render_trajectory_video",
    "__version__",
]
