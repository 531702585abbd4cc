import json
import math

import numpy as np
import pytest

from waveletformer.data import (T_MIN, AugmentSpec, HazeParams, ImageFormatError, ImagePair, apply_asm, augment,
                                hflip, invert_asm, load_image, load_pairs, make_pair, rotate90, save_image,
                                synth_clean, synth_depth, to_bytes, transmission_map, write_synthetic_set)
from waveletformer.verify import asm_roundtrip_error


def haze(beta=1.0, depth=None, a=0.8, shape=(8, 8)):
    return HazeParams(a, beta, np.zeros(shape) if depth is None else depth)


class TestTransmission:
    def test_zero_beta(self):
        np.testing.assert_array_equal(transmission_map(np.full((4, 4), 3.0), 0.0), 1.0)

    def test_zero_depth(self):
        np.testing.assert_array_equal(transmission_map(np.zeros((4, 4)), 2.5), 1.0)

    def test_half(self):
        assert transmission_map(np.array([math.log(2.0)]), 1.0)[0] == pytest.approx(0.5, abs=1e-16)

    def test_floor(self):
        assert transmission_map(np.array([100.0]), 1.0, T_MIN)[0] == T_MIN

    @pytest.mark.parametrize("depth,beta", [(-1.0, 1.0), (1.0, -0.5)])
    def test_negative_inputs(self, depth, beta):
        with pytest.raises(ValueError):
            transmission_map(np.array([depth]), beta)


class TestScatteringModel:
    def test_unit_transmission_is_identity(self, rng):
        j = rng.uniform(size=(3, 8, 8))
        np.testing.assert_array_equal(apply_asm(j, haze(0.0)), j)

    def test_zero_transmission_gives_airlight(self, rng):
        params = HazeParams([0.7, 0.8, 0.9], 1.0, np.full((8, 8), 1e6))
        out = apply_asm(rng.uniform(size=(3, 8, 8)), params)
        np.testing.assert_array_equal(out, np.broadcast_to(np.array([0.7, 0.8, 0.9])[:, None, None], out.shape))

    def test_arithmetic_example(self):
        params = HazeParams(0.8, 1.0, np.full((2, 2), math.log(2.0)))
        out = apply_asm(np.full((3, 2, 2), 0.2), params)
        np.testing.assert_allclose(out, 0.5, atol=1e-15)

    def test_output_in_unit_range(self, rng):
        params = HazeParams(rng.uniform(0.6, 1.0, 3), 2.0, rng.uniform(0, 3, (8, 8)))
        out = apply_asm(rng.uniform(size=(3, 8, 8)), params)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_monotone_toward_clean(self, rng):
        j = rng.uniform(size=(3, 8, 8))
        gaps = [np.abs(apply_asm(j, haze(b, np.ones((8, 8)))) - j) for b in (2.0, 1.0, 0.5, 0.1)]
        for far, near in zip(gaps, gaps[1:]):
            assert np.all(near <= far)

    @pytest.mark.parametrize("seed", range(10))
    def test_round_trip(self, seed):
        assert asm_roundtrip_error(seed) < 1e-10

    def test_round_trip_is_tight_on_unit_transmission(self, rng):
        j = rng.uniform(size=(3, 8, 8))
        np.testing.assert_array_equal(invert_asm(apply_asm(j, haze(0.0)), haze(0.0)), j)

    def test_strict_inversion_rejects_low_transmission(self):
        params = haze(10.0, np.ones((4, 4)))
        with pytest.raises(ValueError, match="floor"):
            invert_asm(np.zeros((3, 4, 4)), params)

    @pytest.mark.parametrize("a", [0.5, 1.1])
    def test_airlight_range(self, a):
        with pytest.raises(ValueError):
            HazeParams(a, 1.0, np.zeros((2, 2)))


class TestDepth:
    def test_ramp(self):
        d = synth_depth(5, 3, "ramp")
        np.testing.assert_array_equal(d[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
        assert np.all(d == d[:, :1])

    def test_radial_centre(self):
        d = synth_depth(9, 9, "radial")
        assert d[4, 4] == 0.0 and d.max() == 1.0

    def test_blocks_are_piecewise_constant_and_seeded(self):
        a, b, c = synth_depth(32, 32, "blocks", 3), synth_depth(32, 32, "blocks", 3), synth_depth(32, 32, "blocks", 4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert 4 <= np.unique(a).size <= 25
        assert a.min() >= 0

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown depth"):
            synth_depth(4, 4, "fractal")


class TestAugment:
    def test_rotate_four_times_is_identity(self, rng):
        x = rng.uniform(size=(3, 6, 10))
        y = x
        for _ in range(4):
            y = rotate90(y)
        np.testing.assert_array_equal(y, x)

    def test_flip_twice_is_identity(self, rng):
        x = rng.uniform(size=(3, 5, 7))
        np.testing.assert_array_equal(hflip(hflip(x)), x)

    def test_same_transform_on_both_images(self, rng):
        clean = rng.uniform(size=(3, 24, 24))
        pair = ImagePair(clean.copy(), clean, "x")
        for s in range(20):
            out = augment(pair, AugmentSpec(16), s)
            np.testing.assert_array_equal(out.hazy, out.clean)

    def test_pixels_are_permuted_not_interpolated(self, rng):
        img = rng.uniform(size=(3, 16, 16))
        pair = ImagePair(img, img.copy())
        for s in range(20):
            out = augment(pair, AugmentSpec(16), s)
            np.testing.assert_array_equal(np.sort(out.hazy.ravel()), np.sort(img.ravel()))

    def test_all_orientations_reachable(self):
        img = np.arange(3 * 4 * 4, dtype=np.float64).reshape(3, 4, 4) / 48.0
        seen = {augment(ImagePair(img, img), AugmentSpec(4), s).hazy.tobytes() for s in range(200)}
        assert len(seen) == 8

    def test_crop_window(self, rng):
        img = rng.uniform(size=(3, 40, 30))
        out = augment(ImagePair(img, img), AugmentSpec(8, rotations=(), flip_prob=0.0), 5).hazy
        hits = [(i, j) for i in range(33) for j in range(23) if np.array_equal(img[:, i:i + 8, j:j + 8], out)]
        assert len(hits) == 1

    def test_crop_too_large(self):
        img = np.zeros((3, 8, 8))
        with pytest.raises(ValueError, match="does not fit"):
            augment(ImagePair(img, img), AugmentSpec(16))

    def test_large_source_crop_fits(self):
        img = np.zeros((3, 2833, 4657), dtype=np.float64)
        assert augment(ImagePair(img, img), AugmentSpec(512), 0).hazy.shape == (3, 512, 512)

    def test_bad_rotation(self):
        with pytest.raises(ValueError):
            AugmentSpec(8, rotations=(45,))


class TestPair:
    def test_shapes_must_match(self):
        with pytest.raises(ValueError):
            ImagePair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    def test_values_clamped(self):
        p = ImagePair(np.full((3, 2, 2), 1.5), np.full((3, 2, 2), -0.5))
        assert p.hazy.max() == 1.0 and p.clean.min() == 0.0


class TestImageIO:
    def test_byte_scaling(self, tmp_path):
        img = np.zeros((3, 1, 2))
        img[:, 0, 1] = 1.0
        save_image(img, tmp_path / "a.ppm")
        back = load_image(tmp_path / "a.ppm")
        assert back[0, 0, 0] == 0.0 and back[0, 0, 1] == 1.0

    def test_header_and_payload(self, tmp_path):
        save_image(np.full((3, 2, 3), 128 / 255), tmp_path / "a.ppm")
        raw = (tmp_path / "a.ppm").read_bytes()
        assert raw == b"P6\n3 2\n255\n" + bytes([128]) * 18

    def test_round_half_up(self):
        assert to_bytes(np.full((3, 1, 1), 0.5 / 255))[0, 0, 0] == 1
        assert to_bytes(np.full((3, 1, 1), 2.0))[0, 0, 0] == 255

    def test_eight_bit_round_trip_bit_exact(self, tmp_path, rng):
        raw = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        (tmp_path / "a.ppm").write_bytes(b"P6\n# comment\n7 5\n255\n" + raw.tobytes())
        first = load_image(tmp_path / "a.ppm")
        np.testing.assert_array_equal(first, raw.transpose(2, 0, 1) / 255.0)
        save_image(first, tmp_path / "b.ppm")
        np.testing.assert_array_equal(load_image(tmp_path / "b.ppm"), first)

    @pytest.mark.parametrize("content,match", [
        (b"P6\n4 4\n255\n" + b"\0" * 10, "truncated PPM payload"),
        (b"P6\n4", "truncated PPM header"),
        (b"P3\n1 1\n255\n0 0 0", "P6"),
        (b"P6\n1 1\n65535\n" + b"\0" * 6, "8-bit"),
        (b"P6\nx 1\n255\n", "header field"),
    ])
    def test_malformed(self, tmp_path, content, match):
        (tmp_path / "bad.ppm").write_bytes(content)
        with pytest.raises(ImageFormatError, match=match):
            load_image(tmp_path / "bad.ppm")

    def test_png_round_trip(self, tmp_path, rng):
        pytest.importorskip("PIL")
        img = np.floor(rng.uniform(size=(3, 6, 5)) * 255) / 255
        save_image(img, tmp_path / "a.png")
        np.testing.assert_array_equal(load_image(tmp_path / "a.png"), img)


class TestSyntheticSet:
    def test_files_and_manifest(self, tmp_path):
        manifest = write_synthetic_set(tmp_path, 3, 16, 24, seed=2)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == sorted([f"000{i}_{k}.ppm" for i in range(3) for k in ("hazy", "gt")] + ["manifest.json"])
        assert json.loads((tmp_path / "manifest.json").read_text()) == manifest
        assert all(0.5 <= m["beta"] <= 1.5 and 0.6 <= m["A"][0] <= 1.0 for m in manifest)

    def test_deterministic(self, tmp_path):
        write_synthetic_set(tmp_path / "a", 2, 16, 16, seed=7)
        write_synthetic_set(tmp_path / "b", 2, 16, 16, seed=7)
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_zero_beta_gives_clean_images(self, tmp_path):
        write_synthetic_set(tmp_path, 2, 16, 16, beta_range=(0.0, 0.0))
        for p in load_pairs(tmp_path):
            np.testing.assert_array_equal(p.hazy, p.clean)

    def test_load_pairs_sorted_with_ids(self, tmp_path):
        write_synthetic_set(tmp_path, 3, 8, 8)
        assert [p.id for p in load_pairs(tmp_path)] == ["0000", "0001", "0002"]

    def test_missing_ground_truth(self, tmp_path):
        write_synthetic_set(tmp_path, 1, 8, 8)
        (tmp_path / "0000_gt.ppm").unlink()
        with pytest.raises(FileNotFoundError, match="0000_gt"):
            load_pairs(tmp_path)

    @pytest.mark.parametrize("h,w", [(15, 16), (16, 1)])
    def test_bad_size(self, tmp_path, h, w):
        with pytest.raises(ValueError):
            write_synthetic_set(tmp_path, 1, h, w)

    def test_synth_clean_in_range_and_seeded(self):
        a = synth_clean(16, 16, 1)
        assert a.shape == (3, 16, 16) and 0.0 <= a.min() and a.max() <= 1.0
        np.testing.assert_array_equal(a, synth_clean(16, 16, 1))

    def test_make_pair_keeps_clean(self, rng):
        clean = rng.uniform(size=(3, 8, 8))
        pair = make_pair(clean, haze(1.0, np.ones((8, 8))), "z")
        np.testing.assert_array_equal(pair.clean, clean)
        assert pair.id == "z"
