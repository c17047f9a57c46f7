"""Patch grid, overlap accumulation, noise synthesis, PSNR, PGM files."""

import numpy as np
import pytest

from patchprior import (
    PSNR_CAP,
    ImageBuffer,
    PgmError,
    accumulate_patches,
    add_gaussian_noise,
    extract_patches,
    psnr,
    read_pgm,
    write_pgm,
)


def reconstruct(patches, width, height):
    sums, counts = accumulate_patches(patches, width, height)
    return sums.pixels / counts.pixels


class TestExtraction:
    def test_grid_counts_with_flush_origin(self):
        img = ImageBuffer(np.arange(100, dtype=np.float64).reshape(10, 10))
        ps = extract_patches(img, 8, stride=8)
        # origins 0 and the forced final 2, per axis
        assert ps.n == 4
        assert list(ps.row_starts) == [0, 2]
        assert list(ps.col_starts) == [0, 2]

    def test_stride_one_dense_grid(self):
        img = ImageBuffer(np.zeros((64, 64)))
        ps = extract_patches(img, 8, stride=1)
        assert ps.n == 57 * 57
        assert ps.d == 64

    def test_patch_rows_are_row_major_pixels(self):
        img = ImageBuffer(np.arange(25, dtype=np.float64).reshape(5, 5))
        ps = extract_patches(img, 2, stride=3)
        # top-left patch covers pixels (0,0),(0,1),(1,0),(1,1)
        assert list(ps.data[0]) == [0.0, 1.0, 5.0, 6.0]
        # final flush origin is 3 on both axes
        assert list(ps.data[-1]) == [18.0, 19.0, 23.0, 24.0]

    def test_rejects_patch_larger_than_image(self):
        img = ImageBuffer(np.zeros((5, 5)))
        with pytest.raises(ValueError):
            extract_patches(img, 8, stride=1)


class TestAccumulation:
    @pytest.mark.parametrize("size,stride", [(10, 1), (10, 3), (17, 8), (24, 5)])
    def test_round_trip_average_recovers_image(self, size, stride):
        rng = np.random.default_rng(size * 100 + stride)
        img = ImageBuffer(rng.uniform(0.0, 255.0, (size, size)))
        ps = extract_patches(img, min(8, size), stride=stride)
        back = reconstruct(ps, size, size)
        assert np.max(np.abs(back - img.pixels)) <= 1e-12

    def test_round_trip_rectangular(self):
        rng = np.random.default_rng(0)
        img = ImageBuffer(rng.uniform(0.0, 255.0, (13, 21)))
        ps = extract_patches(img, 4, stride=3)
        back = reconstruct(ps, 21, 13)
        assert np.max(np.abs(back - img.pixels)) <= 1e-12

    def test_interior_coverage_at_stride_one(self):
        img = ImageBuffer(np.zeros((20, 20)))
        ps = extract_patches(img, 4, stride=1)
        _, counts = accumulate_patches(ps, 20, 20)
        # every pixel at least patch_size away from each border sits in s^2 patches
        assert np.all(counts.pixels[4:-4, 4:-4] == 16.0)
        assert counts.pixels[0, 0] == 1.0

    def test_counts_positive_everywhere(self):
        img = ImageBuffer(np.zeros((11, 23)))
        ps = extract_patches(img, 5, stride=4)
        _, counts = accumulate_patches(ps, 23, 11)
        assert counts.pixels.min() >= 1.0


class TestNoise:
    def test_sigma_zero_is_bitwise_copy(self):
        rng = np.random.default_rng(1)
        img = ImageBuffer(rng.uniform(0.0, 255.0, (16, 16)))
        out = add_gaussian_noise(img, 0.0, seed=7)
        assert np.array_equal(out.pixels, img.pixels)

    def test_seeded_and_deterministic(self):
        img = ImageBuffer(np.full((32, 32), 128.0))
        a = add_gaussian_noise(img, 20.0, seed=3)
        b = add_gaussian_noise(img, 20.0, seed=3)
        c = add_gaussian_noise(img, 20.0, seed=4)
        assert np.array_equal(a.pixels, b.pixels)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_moments_match_large_sample(self):
        img = ImageBuffer(np.full((400, 400), 100.0))
        out = add_gaussian_noise(img, 20.0, seed=5)
        w = out.pixels - 100.0
        assert abs(w.mean()) < 0.5
        assert abs(w.std() - 20.0) < 0.5


class TestPsnr:
    def test_cap_for_identical_images(self):
        img = ImageBuffer(np.full((8, 8), 42.0))
        assert psnr(img, img) == PSNR_CAP == 99.0

    def test_known_value_at_unit_mse(self):
        a = ImageBuffer(np.zeros((10, 10)))
        b = ImageBuffer(np.ones((10, 10)))
        assert psnr(a, b) == pytest.approx(48.1308, abs=1e-4)

    def test_peak_scale_value(self):
        a = ImageBuffer(np.zeros((4, 4)))
        b = ImageBuffer(np.full((4, 4), 255.0))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            psnr(ImageBuffer(np.zeros((4, 4))), ImageBuffer(np.zeros((4, 5))))


class TestImageBuffer:
    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros(5))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.array([[np.nan, 0.0]]))

    def test_pixels_frozen(self):
        img = ImageBuffer(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1.0


class TestPgm:
    def test_binary_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = ImageBuffer(np.round(rng.uniform(0.0, 255.0, (9, 14))))
        path = tmp_path / "img.pgm"
        write_pgm(img, path)
        back = read_pgm(path)
        assert np.array_equal(back.pixels, img.pixels)

    def test_write_clamps_and_rounds(self, tmp_path):
        img = ImageBuffer(np.array([[-3.2, 0.4], [254.6, 300.0]]))
        path = tmp_path / "img.pgm"
        write_pgm(img, path)
        back = read_pgm(path)
        assert np.array_equal(back.pixels, [[0.0, 0.0], [255.0, 300.0 - 45.0]])

    def test_reads_ascii_variant(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P2\n# comment line\n3 2\n255\n0 10 20\n30 40 255\n")
        img = read_pgm(path)
        assert img.pixels.shape == (2, 3)
        assert img.pixels[1, 2] == 255.0

    def test_binary_header_comments(self, tmp_path):
        payload = bytes(range(6))
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# one\n# two\n3 2\n255\n" + payload)
        img = read_pgm(path)
        assert img.pixels.shape == (2, 3)
        assert img.pixels[0, 0] == 0.0 and img.pixels[1, 2] == 5.0

    def test_rejects_wrong_maxval(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(PgmError):
            read_pgm(path)

    def test_rejects_truncated_raster(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
        with pytest.raises(PgmError):
            read_pgm(path)

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "b.pgm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(PgmError):
            read_pgm(path)

    def test_rejects_out_of_range_ascii(self, tmp_path):
        path = tmp_path / "r.pgm"
        path.write_bytes(b"P2\n2 1\n255\n12 999\n")
        with pytest.raises(PgmError):
            read_pgm(path)
