"""Frame/patch handling, the hand-crafted descriptor's invariances, and PGM
round-trips."""

import numpy as np
import pytest

from splt.geometry import BBox
from splt.media import (DEFAULT_FEATURES, FeatureConfig, Frame,
                        OutsideFrameError, Patch, crop_resize,
                        extract_features, ncc_map, read_pgm, resize_patch,
                        resize_to, write_pgm)


def _noise_frame(seed, h=64, w=64):
    rng = np.random.default_rng(seed)
    return Frame(rng.integers(0, 256, (h, w), dtype=np.uint8))


class TestFrame:
    def test_dimensions(self):
        f = _noise_frame(0, h=48, w=72)
        assert f.height == 48 and f.width == 72

    def test_rejects_wrong_dtype(self):
        with pytest.raises(ValueError):
            Frame(np.zeros((32, 32), dtype=np.float64))

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            Frame(np.zeros((32, 32, 3), dtype=np.uint8))

    def test_rejects_tiny_frames(self):
        with pytest.raises(ValueError):
            Frame(np.zeros((8, 64), dtype=np.uint8))


class TestPatch:
    def test_side(self):
        assert Patch(np.zeros((17, 17))).side == 17

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            Patch(np.zeros((16, 17)))


class TestCropResize:
    def test_aligned_integer_crop_is_exact(self):
        f = _noise_frame(1)
        p = crop_resize(f, BBox(8, 8, 16, 16), 16)
        assert np.array_equal(p.pixels, f.pixels[8:24, 8:24] / 255.0)

    def test_output_side_and_range(self):
        f = _noise_frame(2)
        p = crop_resize(f, BBox(5.3, 7.9, 20.4, 13.2), 32)
        assert p.side == 32
        assert p.pixels.min() >= 0.0 and p.pixels.max() <= 1.0

    def test_box_clipped_at_frame_edges(self):
        f = _noise_frame(3)
        # Box hangs off the top-left corner; the visible part is resampled.
        p = crop_resize(f, BBox(-10, -10, 20, 20), 16)
        q = crop_resize(f, BBox(0, 0, 10, 10), 16)
        assert np.array_equal(p.pixels, q.pixels)

    def test_fully_outside_box_raises(self):
        f = _noise_frame(4)
        with pytest.raises(OutsideFrameError):
            crop_resize(f, BBox(100, 100, 10, 10), 16)
        with pytest.raises(OutsideFrameError):
            crop_resize(f, BBox(-30, 5, 20, 10), 16)

    def test_side_below_minimum_raises(self):
        f = _noise_frame(5)
        with pytest.raises(ValueError):
            crop_resize(f, BBox(0, 0, 16, 16), 7)

    def test_resize_patch_same_side_is_near_identity(self):
        f = _noise_frame(6)
        p = crop_resize(f, BBox(4, 4, 24, 24), 24)
        q = resize_patch(p, 24)
        np.testing.assert_allclose(q.pixels, p.pixels, rtol=1e-14, atol=0)

    def test_resize_to_rectangular(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0, 1, (20, 30))
        out = resize_to(a, 10, 45)
        assert out.shape == (10, 45)


class TestFeatures:
    def test_default_dimension(self):
        cfg = DEFAULT_FEATURES
        assert cfg.dim == 8 ** 2 * 2 ** 2 + 4 ** 2 * 8 == 384
        f = _noise_frame(8)
        p = crop_resize(f, BBox(0, 0, 64, 64), 64)
        assert extract_features(p).shape == (384,)

    def test_custom_config_dimension(self):
        cfg = FeatureConfig(grid=4, subcells=2, hist_grid=2, bins=4)
        f = _noise_frame(9)
        p = crop_resize(f, BBox(0, 0, 64, 64), 32)
        assert extract_features(p, cfg).shape == (cfg.dim,) == (80,)

    def test_deterministic(self):
        f = _noise_frame(10)
        p = crop_resize(f, BBox(0, 0, 64, 64), 48)
        assert np.array_equal(extract_features(p), extract_features(p))

    def test_affine_intensity_invariance(self):
        rng = np.random.default_rng(11)
        base = rng.uniform(0.1, 0.9, (48, 48))
        a = extract_features(Patch(base))
        b = extract_features(Patch(0.5 * base + 0.05))
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_flat_patch_maps_to_zeros(self):
        feats = extract_features(Patch(np.full((32, 32), 0.5)))
        assert np.all(feats == 0.0)

    def test_vertical_step_edge_hits_one_orientation_bin(self):
        # Left half dark, right half bright: gradients point along +x
        # (angle 0), which lands in bin 4 of 8; all other bins stay empty.
        img = np.zeros((32, 32))
        img[:, 16:] = 1.0
        feats = extract_features(Patch(img))
        hist = feats[256:].reshape(16, 8)
        nonzero_cols = set(np.nonzero(hist)[1].tolist())
        assert nonzero_cols == {4}
        # Cells away from the edge have no gradient at all.
        assert np.any(hist.sum(axis=1) == 0.0)

    def test_patch_too_small_raises(self):
        with pytest.raises(ValueError):
            extract_features(Patch(np.zeros((12, 12))))


class TestNccMapWrapper:
    def test_accepts_patches_and_arrays(self):
        rng = np.random.default_rng(12)
        region = rng.uniform(0, 1, (30, 30))
        template = region[5:15, 5:15].copy()
        a = ncc_map(Patch(region), Patch(template))
        b = ncc_map(region, template)
        assert np.array_equal(a, b)
        assert a[5, 5] == pytest.approx(1.0, abs=1e-12)

    def test_rectangular_template(self):
        rng = np.random.default_rng(13)
        resp = ncc_map(rng.uniform(0, 1, (20, 25)), rng.uniform(0, 1, (4, 9)))
        assert resp.shape == (17, 17)


class TestPgm:
    def test_round_trip_bit_exact(self, tmp_path):
        f = _noise_frame(14, h=33, w=41)
        path = tmp_path / "x.pgm"
        write_pgm(path, f)
        g = read_pgm(path)
        assert np.array_equal(f.pixels, g.pixels)

    def test_written_header(self, tmp_path):
        f = _noise_frame(15, h=16, w=20)
        path = tmp_path / "x.pgm"
        write_pgm(path, f)
        data = path.read_bytes()
        assert data.startswith(b"P5\n20 16\n255\n")
        assert len(data) == len(b"P5\n20 16\n255\n") + 16 * 20

    def test_reads_comments_and_odd_whitespace(self, tmp_path):
        pixels = np.arange(256, dtype=np.uint8).reshape(16, 16)
        raw = b"P5 # magic comment\n# full line\n 16\t16 # dims\n255\n" + pixels.tobytes()
        path = tmp_path / "c.pgm"
        path.write_bytes(raw)
        g = read_pgm(path)
        assert np.array_equal(g.pixels, pixels)

    def test_bad_magic_raises(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n4 4\n255\n" + b"0" * 16)
        with pytest.raises(ValueError):
            read_pgm(path)

    def test_wide_maxval_raises(self, tmp_path):
        path = tmp_path / "wide.pgm"
        path.write_bytes(b"P5\n16 16\n65535\n" + b"\0" * 512)
        with pytest.raises(ValueError):
            read_pgm(path)

    def test_truncated_raises(self, tmp_path):
        path = tmp_path / "trunc.pgm"
        path.write_bytes(b"P5\n16 16\n255\n" + b"\0" * 100)
        with pytest.raises(ValueError):
            read_pgm(path)
