import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artharmony.imagecore import (
    BBox,
    ImageError,
    ManifestError,
    ManifestEntry,
    composite_paste,
    patch_grid,
    read_manifest,
    resample_mask,
    split_counts,
    write_manifest,
)


class TestCompositePaste:
    def test_identity_paste(self, rng):
        bg = rng.uniform(0, 1, (8, 8, 3))
        obj = rng.uniform(0, 1, (8, 8, 3))
        comp, mask = composite_paste(bg, obj, np.ones((8, 8)), BBox(0, 0, 8, 8))
        assert np.allclose(comp, obj)
        assert np.all(mask == 1.0)

    def test_small_object_into_black(self):
        bg = np.zeros((4, 4, 3))
        obj = np.zeros((2, 2, 3))
        obj[..., 0] = 1.0
        comp, mask = composite_paste(bg, obj, np.ones((2, 2)), BBox(1, 1, 3, 3))
        red = (comp[..., 0] == 1.0) & (comp[..., 1] == 0.0)
        assert red.sum() == 4
        assert np.all(red[1:3, 1:3])
        assert mask.sum() == 4

    def test_aspect_fit_centers_vertically(self):
        # 2x4 object into a 4x4 box: scale 1, rows 1-2 of the box
        bg = np.zeros((4, 4, 3))
        obj = np.full((2, 4, 3), 0.5)
        comp, mask = composite_paste(bg, obj, np.ones((2, 4)), BBox(0, 0, 4, 4))
        assert np.all(mask[1:3, :] == 1.0)
        assert mask.sum() == 8
        assert np.all(comp[1:3, :] == 0.5)
        assert np.all(comp[0] == 0.0) and np.all(comp[3] == 0.0)

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(ImageError):
            BBox(2, 2, 2, 4)

    def test_empty_foreground_rejected(self, rng):
        bg = rng.uniform(0, 1, (8, 8, 3))
        obj = rng.uniform(0, 1, (4, 4, 3))
        with pytest.raises(ImageError, match="empty foreground"):
            composite_paste(bg, obj, np.zeros((4, 4)), BBox(0, 0, 4, 4))

    def test_bbox_out_of_bounds_rejected(self, rng):
        bg = rng.uniform(0, 1, (8, 8, 3))
        obj = rng.uniform(0, 1, (4, 4, 3))
        with pytest.raises(ImageError, match="bbox"):
            composite_paste(bg, obj, np.ones((4, 4)), BBox(5, 5, 10, 10))

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_background_identity_outside_mask(self, seed):
        r = np.random.default_rng(seed)
        bg = r.uniform(0, 1, (12, 12, 3))
        obj = r.uniform(0, 1, (5, 7, 3))
        obj_mask = np.clip(r.uniform(-0.2, 1, (5, 7)), 0, 1)
        obj_mask[2, 3] = 1.0
        comp, mask = composite_paste(bg, obj, obj_mask, BBox(2, 1, 10, 9))
        outside = mask == 0
        assert np.array_equal(comp[outside], bg[outside])


class TestResampleMask:
    def test_all_ones(self):
        out = resample_mask(np.ones((8, 8)), 4, 4)
        assert np.all(out == 1.0)

    def test_half_mask_to_single_pixel(self):
        out = resample_mask(np.array([[1.0, 1.0], [0.0, 0.0]]), 1, 1)
        assert out.shape == (1, 1)
        assert out[0, 0] == pytest.approx(0.5)

    def test_checkerboard(self):
        cb = np.indices((4, 4)).sum(axis=0) % 2
        out = resample_mask(cb.astype(float), 2, 2)
        assert np.allclose(out, 0.5)

    def test_upsample_rejected(self):
        with pytest.raises(ImageError):
            resample_mask(np.ones((4, 4)), 8, 8)

    @given(factor=st.integers(1, 4), seed=st.integers(0, 100))
    @settings(max_examples=20, deadline=None)
    def test_mass_preserved_for_integer_factors(self, factor, seed):
        r = np.random.default_rng(seed)
        size = 4 * factor
        m = np.clip(r.uniform(0, 1, (size, size)), 0, 1)
        out = resample_mask(m, 4, 4)
        assert out.sum() * factor ** 2 == pytest.approx(m.sum(), abs=1e-6)


class TestPatchGrid:
    def test_single_patch(self, rng):
        img = rng.uniform(0, 1, (6, 6, 3))
        patches = patch_grid(img, 1)
        assert len(patches) == 1
        assert np.array_equal(patches[0], img)

    def test_tiles_reassemble(self, rng):
        img = rng.uniform(0, 1, (4, 4, 3))
        tiles = patch_grid(img, 2)
        top = np.concatenate(tiles[:2], axis=1)
        bottom = np.concatenate(tiles[2:], axis=1)
        assert np.array_equal(np.concatenate([top, bottom], axis=0), img)

    def test_sixteen_patches_at_256(self, rng):
        img = rng.uniform(0, 1, (256, 256, 3))
        tiles = patch_grid(img, 4)
        assert len(tiles) == 16
        assert all(t.shape == (64, 64, 3) for t in tiles)

    def test_invalid_n(self, rng):
        with pytest.raises(ImageError):
            patch_grid(rng.uniform(0, 1, (8, 8, 3)), 0)

    def test_center_crop_when_indivisible(self, rng):
        img = rng.uniform(0, 1, (7, 9, 3))
        tiles = patch_grid(img, 3)
        assert len(tiles) == 9
        assert all(t.shape == (2, 3, 3) for t in tiles)


class TestManifest:
    def _entries(self, n=3, split="train"):
        return [
            ManifestEntry(
                painting_path=f"p{i}.png",
                reference_bbox=BBox(0, 0, 4, 4),
                reference_mask_path=f"rm{i}.png",
                object_image_path=f"o{i}.png",
                object_mask_path=f"om{i}.png",
                category_label=i % 3,
                split=split,
            )
            for i in range(n)
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.jsonl"
        entries = self._entries(3)
        write_manifest(path, entries)
        assert read_manifest(path) == entries

    def test_invalid_bbox_names_field(self):
        with pytest.raises(ImageError, match="bbox"):
            ManifestEntry(
                painting_path="p.png",
                reference_bbox=[4, 0, 4, 4],
                reference_mask_path="rm.png",
                object_image_path="o.png",
                object_mask_path="om.png",
                category_label=0,
            )

    def test_malformed_entry_reports_index(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest(path, self._entries(2))
        with open(path, "a") as f:
            f.write('{"painting_path": "x.png"}\n')
        with pytest.raises(ManifestError, match="entry 2"):
            read_manifest(path)

    def test_split_counts(self, tmp_path):
        entries = self._entries(8) + self._entries(2, split="test")
        path = tmp_path / "m.jsonl"
        write_manifest(path, entries)
        assert split_counts(read_manifest(path)) == {"train": 8, "test": 2}

    def test_bad_split_rejected(self):
        with pytest.raises(ManifestError, match="split"):
            ManifestEntry(
                painting_path="p.png",
                reference_bbox=BBox(0, 0, 4, 4),
                reference_mask_path="rm.png",
                object_image_path="o.png",
                object_mask_path="om.png",
                category_label=0,
                split="validation",
            )
