import numpy as np
import pytest

from rics.imagecore import CYCLIC, REALISTIC, CropWindow, LumaPlane, cyclic_shift, extract_crop, translate_view, ImageBuf, Translation
from rics.scoring import (
    DEFAULT_MODULUS,
    MexicanHatSpec,
    RandHashSpec,
    compute_score_map,
    make_mexican_hat_kernel,
    make_randhash_filter,
    score_mexican_hat,
    score_randhash,
    scoremap_to_csv,
    scoremap_to_text,
)

# PCG64 stream guard: regenerating this exact filter protects every frozen
# hash-score value in the suite from silent PRNG drift.
GOLDEN_FILTER_SEED42_K4 = [
    [39, -132, 95, 119],
    [-248, -165, 16, -40],
    [-2, -108, 112, 99],
    [8, 143, 59, -109],
]


def noise_luma(h, w, seed):
    return LumaPlane(np.random.default_rng(seed).integers(0, 256, (h, w), dtype=np.uint8))


class TestRandHashFilter:
    def test_deterministic(self):
        a = make_randhash_filter(123, 8)
        b = make_randhash_filter(123, 8)
        assert np.array_equal(a.weights, b.weights)
        assert a.weights.dtype == np.int32

    def test_golden_values(self):
        assert make_randhash_filter(42, 4).weights.tolist() == GOLDEN_FILTER_SEED42_K4

    def test_distinct_seeds_differ(self):
        for s in range(100):
            a = make_randhash_filter(s, 5)
            b = make_randhash_filter(s + 1000, 5)
            assert not np.array_equal(a.weights, b.weights)

    def test_single_weight(self):
        assert make_randhash_filter(0, 1).weights.shape == (1, 1)

    def test_clamped(self):
        w = make_randhash_filter(9, 64).weights
        assert w.min() >= -508 and w.max() <= 508


class TestScoreRandHash:
    def test_zero_crop(self):
        f = make_randhash_filter(1, 4)
        assert score_randhash(np.zeros((4, 4), dtype=np.uint8), f) == 0

    def test_single_pixel_linearity(self):
        rng = np.random.default_rng(2)
        f = make_randhash_filter(3, 5)
        a = rng.integers(0, 200, (5, 5), dtype=np.uint8)
        b = a.copy()
        b[2, 3] += 17
        sa, sb = score_randhash(a, f), score_randhash(b, f)
        assert (sb - sa) % DEFAULT_MODULUS == (int(f.weights[2, 3]) * 17) % DEFAULT_MODULUS

    def test_frozen_exact_value(self):
        # independent big-integer oracle, evaluated by hand over the 3x3 pair
        crop = np.array([[250, 3, 17], [128, 255, 0], [9, 77, 41]], dtype=np.uint8)
        f = make_randhash_filter(7, 3)
        assert score_randhash(crop, f) == 2147464491  # (-19156) mod (2^31 - 1)

    def test_always_non_negative(self):
        rng = np.random.default_rng(4)
        f = make_randhash_filter(11, 6)
        for _ in range(200):
            s = score_randhash(rng.integers(0, 256, (6, 6), dtype=np.uint8), f, 97)
            assert 0 <= s < 97

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            score_randhash(np.zeros((3, 3), dtype=np.uint8), make_randhash_filter(0, 4))


class TestMexicanHatKernel:
    def test_center_value_before_mean_subtraction(self):
        k, sigma = 9, 3.0
        w = make_mexican_hat_kernel(sigma, k).weights
        ax = np.arange(k) - (k - 1) / 2
        r2 = ax[:, None] ** 2 + ax[None, :] ** 2
        raw = (1 - r2 / (2 * sigma**2)) * np.exp(-r2 / (2 * sigma**2))
        assert raw[4, 4] == 1.0
        assert np.allclose(w, raw - raw.mean())

    def test_zero_sum(self):
        for sigma, k in [(50.0, 140), (9.0, 15), (2.0, 4)]:
            assert abs(make_mexican_hat_kernel(sigma, k).weights.sum()) < 1e-12

    def test_fourfold_symmetry_odd_k(self):
        w = make_mexican_hat_kernel(4.0, 11).weights
        assert np.array_equal(w, w[::-1, :])
        assert np.array_equal(w, w[:, ::-1])
        assert np.array_equal(w, w.T)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_mexican_hat_kernel(0.0, 5)
        with pytest.raises(ValueError):
            MexicanHatSpec(())
        with pytest.raises(ValueError):
            MexicanHatSpec((9.0, 20.0))  # must be strictly decreasing


class TestScoreMapEngines:
    def test_constant_image_mexican_hat(self):
        luma = LumaPlane(np.full((4, 4), 77, dtype=np.uint8))
        m = compute_score_map(luma, MexicanHatSpec((2.0,)), 3, REALISTIC, "naive")
        assert m.scores.shape == (2, 2)
        assert np.allclose(m.scores, 0.0, atol=1e-9)
        assert np.all(m.scores == m.scores[0, 0])

    def test_randhash_integral_bit_identical(self):
        spec = RandHashSpec(seed=21)
        for mode in (REALISTIC, CYCLIC):
            for h, w, k in [(8, 8, 4), (9, 13, 5), (6, 6, 6), (5, 7, 1)]:
                if k > min(h, w):
                    continue
                luma = noise_luma(h, w, 100 + h + w + k)
                a = compute_score_map(luma, spec, k, mode, "naive")
                b = compute_score_map(luma, spec, k, mode, "integral")
                assert a.scores.dtype == b.scores.dtype == np.int64
                assert np.array_equal(a.scores, b.scores), (mode, h, w, k)

    def test_mexican_hat_fft_vs_naive_cyclic(self):
        luma = noise_luma(32, 32, 0)
        spec = MexicanHatSpec((16.0,))
        nv = compute_score_map(luma, spec, 16, CYCLIC, "naive").scores
        ff = compute_score_map(luma, spec, 16, CYCLIC, "fft").scores
        assert np.abs(ff - nv).max() <= 1e-6 * np.abs(nv).max()

    @pytest.mark.parametrize("mode", [REALISTIC, CYCLIC])
    @pytest.mark.parametrize("engine", ["separable", "fft"])
    def test_mexican_hat_fast_engines(self, mode, engine):
        luma = noise_luma(24, 20, 7)
        spec = MexicanHatSpec((8.0, 3.0))
        for scale in (0, 1):
            nv = compute_score_map(luma, spec, 9, mode, "naive", scale_index=scale).scores
            fast = compute_score_map(luma, spec, 9, mode, engine, scale_index=scale).scores
            assert np.abs(fast - nv).max() <= 1e-6 * max(1.0, np.abs(nv).max())

    def test_map_entries_match_single_crop_scores(self):
        luma = noise_luma(10, 11, 8)
        spec = RandHashSpec(seed=5)
        f = make_randhash_filter(5, 4)
        for mode in (REALISTIC, CYCLIC):
            m = compute_score_map(luma, spec, 4, mode, "integral")
            for i, j in [(0, 0), (2, 5), (m.rows - 1, m.cols - 1)]:
                crop = extract_crop(luma, CropWindow(i, j, 4, mode))
                assert m.scores[i, j] == score_randhash(crop, f)

        mh = MexicanHatSpec((3.0,))
        kern = make_mexican_hat_kernel(3.0, 4)
        m = compute_score_map(luma, mh, 4, REALISTIC, "naive")
        for i, j in [(0, 0), (3, 6)]:
            crop = extract_crop(luma, CropWindow(i, j, 4))
            assert m.scores[i, j] == pytest.approx(score_mexican_hat(crop, kern), rel=1e-12)


class TestEquivariance:
    def test_cyclic_equivariance_randhash_exact(self):
        n, k = 8, 3
        luma = noise_luma(n, n, 31)
        spec = RandHashSpec(seed=2)
        base = compute_score_map(luma, spec, k, CYCLIC, "integral").scores
        for dy in range(n):
            for dx in range(n):
                shifted = compute_score_map(cyclic_shift(luma, dy, dx), spec, k, CYCLIC, "integral").scores
                assert np.array_equal(shifted, np.roll(np.roll(base, -dy, 0), -dx, 1))

    def test_cyclic_equivariance_mh_naive(self):
        n, k = 12, 4
        luma = noise_luma(n, n, 32)
        spec = MexicanHatSpec((4.0,))
        base = compute_score_map(luma, spec, k, CYCLIC, "naive").scores
        scale = np.abs(base).max()
        for dy, dx in [(1, 0), (0, 1), (5, 9), (11, 11)]:
            shifted = compute_score_map(cyclic_shift(luma, dy, dx), spec, k, CYCLIC, "naive").scores
            assert np.abs(shifted - np.roll(np.roll(base, -dy, 0), -dx, 1)).max() <= 1e-9 * scale

    def test_cyclic_equivariance_mh_separable_bit_exact(self):
        # the production engine is content-pure: equal window contents give
        # bit-identical entries, so rolled inputs give exactly rolled maps
        n, k = 16, 5
        luma = noise_luma(n, n, 33)
        spec = MexicanHatSpec((6.0,))
        base = compute_score_map(luma, spec, k, CYCLIC, "separable").scores
        for dy in range(n):
            for dx in range(n):
                shifted = compute_score_map(cyclic_shift(luma, dy, dx), spec, k, CYCLIC, "separable").scores
                assert np.array_equal(shifted, np.roll(np.roll(base, -dy, 0), -dx, 1))

    def test_realistic_view_map_is_source_submap(self):
        src_pixels = np.random.default_rng(40).integers(0, 256, (20, 20, 1), dtype=np.uint8)
        src = ImageBuf(src_pixels)
        src_luma = LumaPlane(src_pixels[:, :, 0])
        m, k = 14, 6
        rh = RandHashSpec(seed=1)
        mh = MexicanHatSpec((5.0,))
        full_rh = compute_score_map(src_luma, rh, k, REALISTIC, "integral").scores
        full_mh = compute_score_map(src_luma, mh, k, REALISTIC, "separable").scores
        rows = m - k + 1
        for dy, dx in [(0, 0), (1, 0), (-3, 2), (3, 3)]:
            view = translate_view(src, m, Translation(dx, dy))
            vl = LumaPlane(view.pixels[:, :, 0])
            vy, vx = (20 - m) // 2 + dy, (20 - m) // 2 + dx
            got_rh = compute_score_map(vl, rh, k, REALISTIC, "integral").scores
            assert np.array_equal(got_rh, full_rh[vy:vy + rows, vx:vx + rows])
            got_mh = compute_score_map(vl, mh, k, REALISTIC, "separable").scores
            assert np.array_equal(got_mh, full_mh[vy:vy + rows, vx:vx + rows])

    def test_score_depends_only_on_crop_pixels(self):
        luma = noise_luma(12, 12, 41)
        spec = RandHashSpec(seed=3)
        before = compute_score_map(luma, spec, 5, REALISTIC, "integral").scores[3, 4]
        mutated = luma.values.copy()
        mutated[0, 0] ^= 0xFF  # outside the (3,4) 5x5 window
        mutated[11, 11] ^= 0xFF
        after = compute_score_map(LumaPlane(mutated), spec, 5, REALISTIC, "integral").scores[3, 4]
        assert before == after


class TestEngineSelectionAndErrors:
    def test_fft_rejected_for_randhash(self):
        luma = noise_luma(8, 8, 0)
        with pytest.raises(ValueError, match="not supported for randhash"):
            compute_score_map(luma, RandHashSpec(), 4, REALISTIC, "fft")

    def test_unknown_engine(self):
        luma = noise_luma(8, 8, 0)
        with pytest.raises(ValueError):
            compute_score_map(luma, MexicanHatSpec((2.0,)), 4, REALISTIC, "warp")

    def test_crop_too_large(self):
        luma = noise_luma(8, 8, 0)
        with pytest.raises(ValueError, match="invalid"):
            compute_score_map(luma, RandHashSpec(), 9, REALISTIC)

    def test_scale_index_range(self):
        luma = noise_luma(8, 8, 0)
        with pytest.raises(ValueError, match="scale_index"):
            compute_score_map(luma, MexicanHatSpec((2.0,)), 4, REALISTIC, "naive", scale_index=1)

    def test_repeat_calls_identical(self):
        luma = noise_luma(16, 16, 77)
        for engine, spec in [("integral", RandHashSpec(5)), ("separable", MexicanHatSpec((6.0,)))]:
            a = compute_score_map(luma, spec, 7, REALISTIC, engine).scores
            b = compute_score_map(luma, spec, 7, REALISTIC, engine).scores
            assert np.array_equal(a, b)


class TestExports:
    def test_text_dump_roundtrip(self):
        luma = noise_luma(6, 6, 1)
        m = compute_score_map(luma, MexicanHatSpec((2.0,)), 3, REALISTIC, "naive")
        text = scoremap_to_text(m)
        lines = text.strip().split("\n")
        assert lines[0] == f"SCOREMAP {m.rows} {m.cols} realistic 0"
        parsed = np.array([[float(x) for x in row.split()] for row in lines[1:]])
        assert np.array_equal(parsed, m.scores)

    def test_csv_dump(self):
        luma = noise_luma(5, 5, 2)
        m = compute_score_map(luma, RandHashSpec(1), 3, REALISTIC, "integral")
        lines = scoremap_to_csv(m).strip().split("\n")
        assert lines[0] == "row,col,score"
        assert len(lines) == 1 + m.rows * m.cols
        r, c, v = lines[1 + 2 * m.cols + 1].split(",")  # row-major: entry (2, 1)
        assert (int(r), int(c), int(v)) == (2, 1, m.scores[2, 1])
