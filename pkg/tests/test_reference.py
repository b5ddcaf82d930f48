from __future__ import annotations

import numpy as np
import pytest

from chromaflow.color import LabImage, RgbImage, lab_to_rgb, rgb_to_lab
from chromaflow.config import PipelineConfig
from chromaflow.frameio import write_png
from chromaflow.reference import (
    REJECT_GRAYSCALE,
    REJECT_LOW_RESOLUTION,
    REJECT_MONOTONOUS,
    build_index,
    filter_image,
    load_index,
    make_reference,
    retrieve,
    save_index,
)

from conftest import colorful_lab, colorful_rgb, textured_luminance


def gray_rgb(size: int = 160, seed: int = 0) -> RgbImage:
    v = np.clip(textured_luminance(size, size, seed=seed) * 2.55, 0, 255).astype(np.uint8)
    return RgbImage(pixels=np.stack([v, v, v], axis=-1))


def monotone_rgb(size: int = 160) -> RgbImage:
    return RgbImage(pixels=np.full((size, size, 3), (180, 120, 100), dtype=np.uint8))


CORPUS_CFG = PipelineConfig(pca_components=4, min_side=128)


def write_corpus(tmp_path, images: dict[str, RgbImage]):
    d = tmp_path / "corpus"
    d.mkdir(exist_ok=True)
    for name, img in images.items():
        write_png(img, d / name)
    return d


def colorful_corpus(n: int, size: int = 160) -> dict[str, RgbImage]:
    return {
        f"img_{i:03d}.png": colorful_rgb(size, size, seed=i, phase=0.4 * i)
        for i in range(n)
    }


class TestFilterImage:
    def test_grayscale_rejected(self):
        d = filter_image(gray_rgb())
        assert not d.accepted and d.reason == REJECT_GRAYSCALE

    def test_low_resolution_rejected(self):
        d = filter_image(colorful_rgb(32, 32), min_side=128)
        assert not d.accepted and d.reason == REJECT_LOW_RESOLUTION

    def test_monotonous_rejected(self):
        d = filter_image(monotone_rgb())
        assert not d.accepted and d.reason == REJECT_MONOTONOUS

    def test_saturated_multi_hue_accepted(self):
        img = colorful_rgb(160, 160, seed=1)
        lab = rgb_to_lab(img)
        assert float(lab.a.std() + lab.b.std()) > 8.0
        d = filter_image(img)
        assert d.accepted and d.reason is None
        assert d.colorfulness > 8.0


class TestBuildIndex:
    def test_identical_images_equal_embeddings(self, tmp_path):
        img = colorful_rgb(160, 160, seed=3)
        corpus = write_corpus(tmp_path, {f"same_{i:03d}.png": img for i in range(5)})
        # identical images leave PCA without variance, so mix in distinct ones
        extra = colorful_corpus(5)
        for name, ex in extra.items():
            write_png(ex, corpus / name)
        index = build_index(corpus, CORPUS_CFG)
        same = [e.embedding for e in index.entries if "same_" in e.path]
        assert len(same) == 5
        for emb in same[1:]:
            assert np.array_equal(emb, same[0])

    def test_rebuild_is_byte_identical(self, tmp_path):
        corpus = write_corpus(tmp_path, colorful_corpus(6))
        i1 = build_index(corpus, CORPUS_CFG)
        i2 = build_index(corpus, CORPUS_CFG)
        save_index(i1, tmp_path / "a.json")
        save_index(i2, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_mixed_corpus_counts(self, tmp_path):
        images = colorful_corpus(6)
        for i in range(3):
            images[f"gray_{i}.png"] = gray_rgb(seed=i)
        corpus = write_corpus(tmp_path, images)
        index = build_index(corpus, CORPUS_CFG)
        assert len(index.entries) == 6
        assert index.rejections[REJECT_GRAYSCALE] == 3
        assert index.rejections[REJECT_LOW_RESOLUTION] == 0

    def test_too_few_accepted(self, tmp_path):
        corpus = write_corpus(tmp_path, {f"g{i}.png": gray_rgb(seed=i) for i in range(6)})
        with pytest.raises(ValueError, match="too few accepted"):
            build_index(corpus, CORPUS_CFG)

    def test_entry_ids_follow_path_order(self, tmp_path):
        corpus = write_corpus(tmp_path, colorful_corpus(6))
        index = build_index(corpus, CORPUS_CFG)
        paths = [e.path for e in index.entries]
        assert paths == sorted(paths)
        assert [e.id for e in index.entries] == list(range(6))


class TestIndexIO:
    def test_roundtrip_bit_exact(self, tmp_path):
        corpus = write_corpus(tmp_path, colorful_corpus(6))
        index = build_index(corpus, CORPUS_CFG)
        p1 = tmp_path / "index.json"
        save_index(index, p1)
        loaded = load_index(p1)
        p2 = tmp_path / "index2.json"
        save_index(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(loaded.basis.components, index.basis.components)

    def test_rejects_foreign_file(self, tmp_path):
        p = tmp_path / "bogus.json"
        p.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_index(p)


class TestRetrieve:
    def test_self_retrieval(self, tmp_path):
        target = colorful_rgb(160, 160, seed=42, phase=2.0)
        images = colorful_corpus(6)
        images["target.png"] = target
        corpus = write_corpus(tmp_path, images)
        index = build_index(corpus, CORPUS_CFG)
        gray = rgb_to_lab(target).L
        entry = retrieve(index, gray)
        assert entry.path.endswith("target.png")

    def test_single_entry_corpus(self, tmp_path):
        images = colorful_corpus(5)
        corpus = write_corpus(tmp_path, images)
        index = build_index(corpus, CORPUS_CFG)
        # query far from everything still returns a valid entry
        entry = retrieve(index, textured_luminance(64, 64, seed=99))
        assert entry in index.entries


class TestMakeReference:
    def test_identity_recovery(self):
        original = colorful_lab(256, 256, seed=21)
        gray0 = original.L
        cfg = PipelineConfig(temperature=0.01, top_k=1)
        ref = make_reference(gray0, lab_to_rgb(original), cfg)
        err = 0.5 * (np.abs(ref.a - original.a) + np.abs(ref.b - original.b))
        assert err.mean() <= 2.0

    def test_grayscale_source_degenerates_safely(self):
        gray0 = textured_luminance(64, 64, seed=5)
        ref = make_reference(gray0, gray_rgb(64, seed=5))
        assert np.abs(ref.a).max() < 1.0
        assert np.abs(ref.b).max() < 1.0

    def test_luminance_preserved_exactly(self):
        gray0 = textured_luminance(64, 64, seed=6)
        ref = make_reference(gray0, colorful_rgb(96, 96, seed=7))
        assert np.array_equal(ref.L, gray0)
