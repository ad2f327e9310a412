import numpy as np
import pytest
from PIL import Image

from flameforge.composer import CompositeImage, StyleImage, fuse, neutral_canvas, prepare_style
from flameforge.maskgen import AugmentedMask, FirePalette, colorize

from conftest import write_image


def black_mask(base):
    """Occupancy present but rgb all zero: the additive identity."""
    pal = FirePalette(colors=np.array([[0, 0, 0]], dtype=np.uint8), source_count=1)
    return colorize(base, pal, seed=0, jitter=False)


def solid_style(value, size=256):
    rgb = np.full((size, size, 3), value, dtype=np.uint8)
    return StyleImage(rgb=rgb, source_id="solid")


class TestFuse:
    def test_zero_mask_is_identity(self, circle_mask):
        style = solid_style((90, 120, 200))
        out = fuse(style, black_mask(circle_mask), alpha=1.0)
        assert np.array_equal(out.rgb, style.rgb)

    def test_alpha_zero_is_identity(self, circle_mask):
        style = solid_style((90, 120, 200))
        out = fuse(style, circle_mask, alpha=0.0)
        assert np.array_equal(out.rgb, style.rgb)

    def test_saturating_add_spot_value(self, circle_mask):
        mask = AugmentedMask(
            rgb=np.where(circle_mask.occupancy[..., None], (100, 40, 10), 0).astype(np.uint8),
            occupancy=circle_mask.occupancy,
            regions=circle_mask.regions,
            family=circle_mask.family,
        )
        out = fuse(solid_style((200, 200, 200)), mask, alpha=1.0)
        assert tuple(out.rgb[128, 128]) == (255, 240, 210)

    def test_half_alpha_spot_value(self, circle_mask):
        mask = AugmentedMask(
            rgb=np.where(circle_mask.occupancy[..., None], (100, 40, 10), 0).astype(np.uint8),
            occupancy=circle_mask.occupancy,
            regions=circle_mask.regions,
            family=circle_mask.family,
        )
        out = fuse(solid_style((100, 100, 100)), mask, alpha=0.5)
        assert tuple(out.rgb[128, 128]) == (150, 120, 105)

    def test_off_occupancy_equals_style_exactly(self, two_rect_mask, style_dir):
        style = prepare_style(sorted(style_dir.iterdir())[0], (256, 256))
        out = fuse(style, two_rect_mask)
        off = ~two_rect_mask.occupancy
        assert np.array_equal(out.rgb[off], style.rgb[off])

    def test_alpha_monotonicity(self, circle_mask):
        rng = np.random.default_rng(0)
        style = StyleImage(
            rgb=rng.integers(0, 256, (256, 256, 3), dtype=np.uint8), source_id="rand"
        )
        colored = colorize(circle_mask, FirePalette(
            colors=np.array([[240, 120, 30]], dtype=np.uint8), source_count=1
        ), seed=1)
        prev = fuse(style, colored, alpha=0.0).rgb.astype(int)
        idx = np.argwhere(colored.occupancy)
        sel = idx[rng.choice(len(idx), size=1000, replace=False)]
        for alpha in (0.25, 0.5, 0.75, 1.0):
            cur = fuse(style, colored, alpha=alpha).rgb.astype(int)
            assert (cur[sel[:, 0], sel[:, 1]] >= prev[sel[:, 0], sel[:, 1]]).all()
            prev = cur

    def test_dimension_mismatch_rejected(self, circle_mask):
        with pytest.raises(ValueError, match="mismatch"):
            fuse(solid_style(100, size=128), circle_mask)


class TestPrepareStyle:
    def test_already_target_sized_is_identity(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.integers(0, 256, (128, 128, 3), dtype=np.uint8)
        write_image(tmp_path / "a.png", arr)
        out = prepare_style(tmp_path / "a.png", (128, 128))
        assert np.array_equal(out.rgb, arr)

    def test_wide_input_center_cropped(self, tmp_path):
        arr = np.zeros((512, 1024, 3), dtype=np.uint8)
        arr[:, 256:768] = 255  # central square
        write_image(tmp_path / "wide.png", arr)
        out = prepare_style(tmp_path / "wide.png", (512, 512))
        assert (out.rgb == 255).all()

    def test_batch_outputs_exact_target_dims(self, style_dir):
        for p in sorted(style_dir.iterdir()):
            out = prepare_style(p, (512, 512))
            assert out.dims == (512, 512)
            assert out.source_id == str(p)

    def test_undecodable_file_rejected(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not a png")
        with pytest.raises(OSError):
            prepare_style(bad, (64, 64))

    def test_zero_dim_target_rejected(self, tmp_path):
        write_image(tmp_path / "a.png", np.zeros((8, 8, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            prepare_style(tmp_path / "a.png", (0, 64))


def test_neutral_canvas_is_uniform_gray():
    c = neutral_canvas(64, 32)
    assert c.rgb.shape == (32, 64, 3)
    assert (c.rgb == 128).all()
