from __future__ import annotations

import numpy as np
import pytest

from chromaflow.correspondence import (
    attend_chroma,
    build_affinity,
    pick_level,
    pool_chroma,
    resample_chroma,
)
from chromaflow.features import extract_pyramid

from conftest import smooth_chroma, textured_luminance


def unit_rows(arr: np.ndarray) -> np.ndarray:
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


class TestBuildAffinity:
    def test_self_similarity_diagonal(self, rng):
        d = unit_rows(rng.normal(size=(20, 10)))
        aff = build_affinity(d, d)
        assert np.allclose(np.diag(aff), 1.0, atol=1e-6)
        assert np.all(np.argmax(aff, axis=1) == np.arange(20))

    def test_orthogonal_descriptors(self):
        aff = build_affinity(np.eye(4), np.eye(4))
        off = aff - np.diag(np.diag(aff))
        assert np.abs(off).max() < 1e-6

    def test_hand_computed_small_instance(self):
        q = np.array([[1.0, 0.0], [0.6, 0.8]])
        r = np.array([[0.0, 1.0], [1.0, 0.0]])
        aff = build_affinity(q, r)
        expected = np.array([[0.0, 1.0], [0.8, 0.6]])
        assert np.allclose(aff, expected, atol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            build_affinity(np.zeros((3, 4)), np.zeros((3, 5)))


class TestAttendChroma:
    def test_one_hot_row_copies_reference(self):
        aff = np.array([[1.0, -1.0, -1.0]])
        ref = np.array([[5.0, -3.0], [80.0, 80.0], [-60.0, 10.0]])
        chroma, field = attend_chroma(aff, ref, temperature=0.05, k=1)
        assert np.allclose(chroma[0, 0], ref[0])
        assert field.indices[0, 0] == 0
        assert field.weights[0, 0] == 1.0

    def test_equal_affinities_average(self):
        aff = np.array([[0.5, 0.5, 0.5, 0.5]])
        ref = np.array([[0.0, 0.0], [10.0, 2.0], [20.0, 4.0], [30.0, 6.0]])
        chroma, field = attend_chroma(aff, ref, temperature=0.2, k=4)
        assert np.allclose(chroma[0, 0], ref.mean(axis=0))
        assert np.allclose(field.weights, 0.25)

    def test_low_temperature_approaches_argmax(self, rng):
        # distinct, well-separated affinities per row (evenly spaced, shuffled)
        spaced = np.linspace(-1.0, 1.0, 40)
        aff = np.stack([rng.permutation(spaced) for _ in range(30)])
        ref = rng.uniform(-80, 80, size=(40, 2))
        chroma, _ = attend_chroma(aff, ref, temperature=1e-3, k=8)
        argmax_chroma = ref[np.argmax(aff, axis=1)]
        assert np.abs(chroma.reshape(-1, 2) - argmax_chroma).max() <= 1e-3

    def test_confidence_rescaled_top1(self):
        aff = np.array([[0.2, -0.4], [1.0, 0.9]])
        _, field = attend_chroma(aff, np.zeros((2, 2)), temperature=0.05, k=2)
        assert field.confidence == pytest.approx([(0.2 + 1) / 2, 1.0])

    def test_weight_normalization_invariant(self, rng):
        aff = rng.uniform(-1, 1, size=(50, 64))
        _, field = attend_chroma(aff, rng.normal(size=(64, 2)), temperature=0.05, k=8)
        assert np.abs(field.weights.sum(axis=1) - 1.0).max() < 1e-6
        assert np.all(np.diff(field.weights, axis=1) <= 1e-12)

    def test_permutation_equivariance(self, rng):
        aff = rng.uniform(-1, 1, size=(25, 36))
        ref = rng.uniform(-50, 50, size=(36, 2))
        perm = rng.permutation(36)
        c1, _ = attend_chroma(aff, ref, temperature=0.05, k=5)
        c2, _ = attend_chroma(aff[:, perm], ref[perm], temperature=0.05, k=5)
        assert np.allclose(c1, c2, atol=1e-9)

    def test_entropy_nondecreasing_in_temperature(self, rng):
        aff = rng.uniform(-1, 1, size=(20, 30))
        entropies = []
        for t in (0.01, 0.05, 0.2, 1.0, 5.0):
            _, field = attend_chroma(aff, np.zeros((30, 2)), temperature=t, k=8)
            w = field.weights
            entropies.append(float(-(w * np.log(w)).sum(axis=1).mean()))
        assert np.all(np.diff(entropies) >= -1e-12)

    def test_identity_recovery_on_real_features(self):
        lum = textured_luminance(128, 128, seed=11)
        a, b = smooth_chroma(128, 128)
        fm = extract_pyramid(lum, n_levels=3)
        level = pick_level(fm)
        ref_cells = pool_chroma(np.stack([a, b], axis=-1), level)
        aff = build_affinity(level, level)
        chroma, _ = attend_chroma(
            aff, ref_cells, temperature=0.01, k=1,
            query_grid=(level.grid_height, level.grid_width),
        )
        assert np.abs(chroma - ref_cells).mean() <= 1.0

    def test_parameter_validation(self):
        aff = np.ones((2, 2))
        with pytest.raises(ValueError):
            attend_chroma(aff, np.zeros((2, 2)), temperature=0.0)
        with pytest.raises(ValueError):
            attend_chroma(aff, np.zeros((2, 2)), k=0)


class TestResampleChroma:
    def test_constant_grid(self):
        grid = np.full((3, 3, 2), 7.5)
        out = resample_chroma(grid, 24, 24)
        assert out.shape == (24, 24, 2)
        assert np.allclose(out, 7.5)

    def test_matches_bruteforce_bilinear(self):
        grid = np.array([[[0.0, 0.0], [10.0, -4.0]], [[20.0, 8.0], [30.0, 40.0]]])
        th = tw = 4
        out = resample_chroma(grid, tw, th)

        def oracle(y, x, c):
            gy = np.clip((y + 0.5) * 2 / th - 0.5, 0, 1)
            gx = np.clip((x + 0.5) * 2 / tw - 0.5, 0, 1)
            y0, x0 = int(np.floor(gy)), int(np.floor(gx))
            y1, x1 = min(y0 + 1, 1), min(x0 + 1, 1)
            fy, fx = gy - y0, gx - x0
            return (
                grid[y0, x0, c] * (1 - fy) * (1 - fx)
                + grid[y0, x1, c] * (1 - fy) * fx
                + grid[y1, x0, c] * fy * (1 - fx)
                + grid[y1, x1, c] * fy * fx
            )

        for y in range(th):
            for x in range(tw):
                for c in range(2):
                    assert out[y, x, c] == pytest.approx(oracle(y, x, c), abs=1e-12)

    def test_roundtrip_on_smooth_grid(self):
        yy, xx = np.mgrid[0:8, 0:8].astype(np.float64)
        grid = np.stack([10 + yy, 20 - xx], axis=-1)
        up = resample_chroma(grid, 32, 32)
        down = up.reshape(8, 4, 8, 4, 2).mean(axis=(1, 3))
        assert np.abs(down - grid).max() <= 1.0


class TestPoolChroma:
    def test_block_means(self):
        lum = textured_luminance(32, 32, seed=1)
        fm = extract_pyramid(lum, n_levels=3)
        chroma = np.stack(smooth_chroma(32, 32), axis=-1)
        pooled = pool_chroma(chroma, fm.levels[0])
        assert pooled.shape == (8, 8, 2)
        assert pooled[0, 0, 0] == pytest.approx(chroma[:4, :4, 0].mean())

    def test_level_selection(self):
        fm = extract_pyramid(textured_luminance(512, 512, seed=0), n_levels=4)
        level = pick_level(fm, max_grid=64)
        assert level.grid_width <= 64 and level.grid_height <= 64
        assert level.scale == 2
