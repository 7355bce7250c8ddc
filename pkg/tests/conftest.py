import numpy as np
import pytest

from advc import core
from advc.motion_io import Layer, Motion, Region, SyntheticSceneSpec, SyntheticTracker, generate_synthetic


def mk_frame(arr) -> core.Frame:
    return core.Frame(np.asarray(arr, dtype=np.uint8))


def textured_frame(width=32, height=32, seed=7) -> core.Frame:
    spec = static_scene(width=width, height=height, length=1, seed=seed)
    return SyntheticTracker(spec).render(0)


def static_scene(width=24, height=16, length=6, seed=1) -> SyntheticSceneSpec:
    return SyntheticSceneSpec(
        width=width,
        height=height,
        length=length,
        layers=(Layer(Region("full"), Motion("static")),),
        seed=seed,
    )


def translation_scene(vx=4.0, vy=0.0, width=64, height=32, length=24, seed=2) -> SyntheticSceneSpec:
    return SyntheticSceneSpec(
        width=width,
        height=height,
        length=length,
        layers=(Layer(Region("full"), Motion("translation", (vx, vy))),),
        seed=seed,
    )


def two_region_scene(width=64, height=64, length=8, seed=3) -> SyntheticSceneSpec:
    """Left half moves right, right half moves left: a piecewise-constant
    field an isotropic kernel cannot represent exactly near the seam."""
    return SyntheticSceneSpec(
        width=width,
        height=height,
        length=length,
        layers=(
            Layer(Region("halfplane", (1.0, 0.0, width / 2 - 0.5)), Motion("translation", (1.0, 0.0))),
            Layer(Region("full"), Motion("translation", (-1.0, 0.0))),
        ),
        seed=seed,
    )


def cut_scene(cut_frame=6, width=48, height=32, length=12, seed=4) -> SyntheticSceneSpec:
    return SyntheticSceneSpec(
        width=width,
        height=height,
        length=length,
        layers=(Layer(Region("full"), Motion("static")),),
        cut_frame=cut_frame,
        seed=seed,
    )


@pytest.fixture
def two_region():
    spec = two_region_scene()
    frames, field = generate_synthetic(spec)
    return spec, frames, field
