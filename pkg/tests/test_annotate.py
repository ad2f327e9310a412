import numpy as np
import pytest

from flameforge import annotate, maskgen
from flameforge.annotate import (
    DatasetItem,
    DatasetRecord,
    boxes_from_mask,
    crop_regions,
    read_manifest,
    write_dataset,
)
from flameforge.maskgen import MaskFamily, MaskSpec, ShapeKind, ShapeSpec, gen_binary_mask


def full_canvas_mask(size=64):
    occ = np.ones((size, size), dtype=bool)
    rgb = np.full((size, size, 3), 255, dtype=np.uint8)
    return maskgen.AugmentedMask(
        rgb=rgb, occupancy=occ, regions=[(0, 0, size, size)], family=MaskFamily.BINARY
    )


def make_record(i=0, boxes=None):
    return DatasetRecord(
        image_path=f"images/{i:06d}.png",
        mask_path=f"masks/{i:06d}.png",
        boxes=boxes if boxes is not None else [[0.0, 0.5, 0.5, 0.25, 0.25]],
        family="perlin",
        arm="perlin",
        seeds={"item": 12345, "generation": 678},
        prompt="wildfire with flame and smoke",
        style_source="styles/s0.png",
    )


class TestBoxesFromMask:
    def test_full_canvas_row(self):
        assert boxes_from_mask(full_canvas_mask()) == [[0.0, 0.5, 0.5, 1.0, 1.0]]

    def test_corner_box_arithmetic(self):
        spec = MaskSpec(
            256, 256,
            (ShapeSpec(ShapeKind.RECTANGLE, center=(32, 32), extents=(64, 64)),),
            MaskFamily.BINARY, rng_seed=0,
        )
        rows = boxes_from_mask(gen_binary_mask(spec))
        assert rows == [[0.0, 0.125, 0.125, 0.25, 0.25]]

    def test_round_trip_within_one_pixel(self):
        for seed in range(100):
            spec = maskgen.random_mask_spec(256, 256, MaskFamily.BINARY, seed=seed)
            mask = gen_binary_mask(spec)
            rows = boxes_from_mask(mask)
            assert len(rows) == len(mask.regions)
            for row, (x0, y0, x1, y1) in zip(rows, mask.regions):
                _, cx, cy, w, h = row
                assert abs(cx * 256 - (x0 + x1) / 2) <= 1
                assert abs(cy * 256 - (y0 + y1) / 2) <= 1
                assert abs(w * 256 - (x1 - x0)) <= 1
                assert abs(h * 256 - (y1 - y0)) <= 1


class TestCropRegions:
    def test_zero_pad_full_region_is_whole_image(self):
        mask = full_canvas_mask()
        image = np.arange(64 * 64 * 3, dtype=np.uint8).reshape(64, 64, 3)
        patches = crop_regions(image, mask, pad=0.0)
        assert len(patches) == 1 and np.array_equal(patches[0], image)

    def test_corner_region_clipped_to_canvas(self):
        spec = MaskSpec(
            128, 128,
            (ShapeSpec(ShapeKind.RECTANGLE, center=(24, 24), extents=(48, 48)),),
            MaskFamily.BINARY, rng_seed=0,
        )
        mask = gen_binary_mask(spec)
        image = np.zeros((128, 128, 3), dtype=np.uint8)
        patches = crop_regions(image, mask, pad=0.5)
        # pad of 24px would reach (-24, -24); clipped to origin
        assert patches[0].shape == (72, 72, 3)

    def test_patch_equals_direct_slice_oracle(self):
        rng = np.random.default_rng(0)
        for seed in range(100):
            spec = maskgen.random_mask_spec(128, 128, MaskFamily.BINARY, seed=seed)
            mask = gen_binary_mask(spec)
            image = rng.integers(0, 256, (128, 128, 3), dtype=np.uint8)
            for patch, (x0, y0, x1, y1) in zip(crop_regions(image, mask, pad=0.1), mask.regions):
                px = int(round((x1 - x0) * 0.1))
                py = int(round((y1 - y0) * 0.1))
                expect = image[max(0, y0 - py):min(128, y1 + py), max(0, x0 - px):min(128, x1 + px)]
                assert np.array_equal(patch, expect)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            crop_regions(np.zeros((32, 32, 3), dtype=np.uint8), full_canvas_mask(64))


class TestManifest:
    def test_empty_record_list(self, tmp_path):
        manifest = write_dataset([], tmp_path / "ds")
        assert manifest.read_text() == ""
        assert not list((tmp_path / "ds").glob("**/*.png"))

    def test_round_trip_equality(self, tmp_path):
        rng = np.random.default_rng(1)
        items = [
            DatasetItem(
                record=make_record(i),
                image=rng.integers(0, 256, (32, 32, 3), dtype=np.uint8),
                mask_rgb=rng.integers(0, 256, (32, 32, 3), dtype=np.uint8),
            )
            for i in range(10)
        ]
        manifest = write_dataset(items, tmp_path / "ds")
        assert read_manifest(manifest) == [it.record for it in items]

    def test_byte_identical_for_identical_records(self, tmp_path):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        items = [DatasetItem(record=make_record(0), image=img, mask_rgb=img)]
        m1 = write_dataset(items, tmp_path / "a")
        m2 = write_dataset(items, tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()

    def test_files_exist_and_yolo_text_written(self, tmp_path):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        rec = make_record(3)
        write_dataset([DatasetItem(record=rec, image=img, mask_rgb=img)], tmp_path / "ds")
        root = tmp_path / "ds"
        assert (root / rec.image_path).exists()
        assert (root / rec.mask_path).exists()
        label = (root / rec.image_path).with_suffix(".txt")
        assert label.read_text() == "0 0.500000 0.500000 0.250000 0.250000\n"

    def test_invalid_box_rejected(self):
        with pytest.raises(ValueError):
            make_record(boxes=[[0.0, 1.5, 0.5, 0.1, 0.1]])

    def test_schema_version_serialized(self):
        assert '"schema_version": 1' in annotate.record_to_json(make_record())


def test_empty_occupancy_rejected_for_boxes():
    mask = full_canvas_mask()
    mask.occupancy = mask.occupancy.copy()
    with pytest.raises(ValueError):
        mask_empty = object.__new__(maskgen.AugmentedMask)
        mask_empty.rgb = np.zeros((8, 8, 3), dtype=np.uint8)
        mask_empty.occupancy = np.zeros((8, 8), dtype=bool)
        mask_empty.regions = []
        mask_empty.family = MaskFamily.BINARY
        boxes_from_mask(mask_empty)
