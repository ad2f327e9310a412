import numpy as np
import pytest
from PIL import Image

from flameforge import maskgen
from flameforge.maskgen import MaskFamily, MaskSpec, ShapeKind, ShapeSpec


@pytest.fixture
def circle_mask():
    spec = MaskSpec(
        canvas_w=256,
        canvas_h=256,
        regions=(ShapeSpec(ShapeKind.CIRCLE, center=(128, 128), extents=(128, 128)),),
        family=MaskFamily.BINARY,
        rng_seed=1,
    )
    return maskgen.gen_binary_mask(spec)


@pytest.fixture
def two_rect_mask():
    spec = MaskSpec(
        canvas_w=256,
        canvas_h=256,
        regions=(
            ShapeSpec(ShapeKind.RECTANGLE, center=(48, 48), extents=(48, 40)),
            ShapeSpec(ShapeKind.RECTANGLE, center=(180, 180), extents=(64, 48)),
        ),
        family=MaskFamily.BINARY,
        rng_seed=1,
    )
    return maskgen.gen_binary_mask(spec)


def write_image(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)


@pytest.fixture
def style_dir(tmp_path):
    d = tmp_path / "styles"
    d.mkdir()
    rng = np.random.default_rng(7)
    for i in range(4):
        write_image(d / f"s{i}.png", rng.integers(0, 256, size=(300, 400, 3), dtype=np.uint8))
    return d
