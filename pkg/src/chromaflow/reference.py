"""Automatic reference acquisition: corpus indexing, retrieval, transfer.

The reference image that supervises a whole video is produced without
manual selection: a corpus of color images is filtered (dropping grayscale,
low-resolution, and color-monotonous images), embedded through the feature
pyramid, and compressed with PCA. At run time the first video frame's
embedding retrieves the most correlated corpus image, whose chroma is then
transferred onto frame 0 by non-local correspondence.

Embeddings are computed on a fixed 256x256 resize of the luminance plane so
their dimension does not depend on corpus image sizes.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from chromaflow.color import LabImage, RgbImage, rgb_to_lab
from chromaflow.config import PipelineConfig
from chromaflow.correspondence import (
    attend_chroma,
    build_affinity,
    pick_level,
    pool_chroma,
    resample_chroma,
)
from chromaflow.features import PcaBasis, extract_pyramid, flatten_embedding, pca_fit, pca_project
from chromaflow.frameio import list_corpus_images, read_png, worker_count
from chromaflow.propagation import edge_aware_smooth

ANALYSIS_SIZE = 256

INDEX_FORMAT = "chromaflow-corpus-index"
INDEX_VERSION = 1

REJECT_LOW_RESOLUTION = "low_resolution"
REJECT_GRAYSCALE = "grayscale"
REJECT_MONOTONOUS = "monotonous"

_GRAYSCALE_CHROMA_LIMIT = 2.0


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: str | None = None
    colorfulness: float = 0.0


@dataclass(frozen=True)
class CorpusEntry:
    id: int
    path: str
    embedding: np.ndarray
    colorfulness: float
    width: int
    height: int

    def __post_init__(self) -> None:
        emb = np.ascontiguousarray(self.embedding, dtype=np.float64)
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)


@dataclass(frozen=True)
class CorpusIndex:
    basis: PcaBasis
    entries: tuple[CorpusEntry, ...]
    config: dict
    rejections: dict

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("index must hold at least one entry")


def colorfulness(lab: LabImage) -> float:
    """Chroma spread: std(a) + std(b)."""
    return float(lab.a.std() + lab.b.std())


def filter_image(img: RgbImage, min_side: int = 128, min_colorfulness: float = 8.0) -> FilterDecision:
    """Accept or reject a corpus image, with the rejection reason.

    Rejects, in order: images whose short side is below ``min_side``;
    grayscale images (no pixel more than 2 chroma units from neutral);
    color-monotonous images (colorfulness below ``min_colorfulness``).
    """
    if min(img.width, img.height) < min_side:
        return FilterDecision(accepted=False, reason=REJECT_LOW_RESOLUTION)
    lab = rgb_to_lab(img)
    if max(np.abs(lab.a).max(), np.abs(lab.b).max()) < _GRAYSCALE_CHROMA_LIMIT:
        return FilterDecision(accepted=False, reason=REJECT_GRAYSCALE)
    c = colorfulness(lab)
    if c < min_colorfulness:
        return FilterDecision(accepted=False, reason=REJECT_MONOTONOUS, colorfulness=c)
    return FilterDecision(accepted=True, colorfulness=c)


def _resize_plane(plane: np.ndarray, size: int = ANALYSIS_SIZE) -> np.ndarray:
    im = Image.fromarray(plane.astype(np.float32), mode="F")
    resized = im.resize((size, size), resample=Image.BILINEAR)
    return np.asarray(resized, dtype=np.float64)


def embed_luminance(L: np.ndarray, feature_levels: int) -> np.ndarray:
    """Retrieval embedding of a luminance plane (size-independent)."""
    resized = np.clip(_resize_plane(np.asarray(L, dtype=np.float64)), 0.0, 100.0)
    return flatten_embedding(extract_pyramid(resized, n_levels=feature_levels))


def _inspect_image(path: Path, cfg: PipelineConfig):
    img = read_png(path)
    decision = filter_image(img, cfg.min_side, cfg.min_colorfulness)
    if not decision.accepted:
        return decision, None
    lab = rgb_to_lab(img)
    emb = embed_luminance(lab.L, cfg.feature_levels)
    return decision, (emb, decision.colorfulness, img.width, img.height)


def build_index(image_dir: str | Path, cfg: PipelineConfig | None = None) -> CorpusIndex:
    """Filter a corpus directory and build its retrieval index.

    Images are processed in parallel (capped by CHROMAFLOW_THREADS) and
    merged in sorted-path order, so rebuilding over the same directory is
    byte-identical. Raises when fewer than pca_components + 1 images pass
    the filters.
    """
    cfg = cfg or PipelineConfig()
    paths = list_corpus_images(image_dir)
    if not paths:
        raise ValueError(f"no corpus images in {image_dir}")

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(lambda p: _inspect_image(p, cfg), paths))

    rejections = {REJECT_LOW_RESOLUTION: 0, REJECT_GRAYSCALE: 0, REJECT_MONOTONOUS: 0}
    accepted: list[tuple[Path, np.ndarray, float, int, int]] = []
    for path, (decision, payload) in zip(paths, results):
        if decision.accepted:
            emb, colorful, w, h = payload
            accepted.append((path, emb, colorful, w, h))
        else:
            rejections[decision.reason] += 1

    needed = cfg.pca_components + 1
    if len(accepted) < needed:
        raise ValueError(
            f"too few accepted images: {len(accepted)} of {len(paths)} "
            f"(need at least {needed}; rejections: {rejections})"
        )

    embeddings = np.stack([emb for _, emb, _, _, _ in accepted])
    basis = pca_fit(embeddings, cfg.pca_components)
    entries = tuple(
        CorpusEntry(
            id=i,
            path=str(path),
            embedding=pca_project(basis, emb),
            colorfulness=colorful,
            width=w,
            height=h,
        )
        for i, (path, emb, colorful, w, h) in enumerate(accepted)
    )
    snapshot = {
        "min_side": cfg.min_side,
        "min_colorfulness": cfg.min_colorfulness,
        "feature_levels": cfg.feature_levels,
        "pca_components": cfg.pca_components,
        "analysis_size": ANALYSIS_SIZE,
    }
    return CorpusIndex(basis=basis, entries=entries, config=snapshot, rejections=rejections)


def retrieve(index: CorpusIndex, gray: np.ndarray) -> CorpusEntry:
    """Corpus entry whose embedding best correlates with the frame's.

    Similarity is the cosine between PCA projections; exact ties go to the
    smallest entry id.
    """
    if not index.entries:
        raise ValueError("empty index")
    emb = embed_luminance(gray, index.config["feature_levels"])
    query = pca_project(index.basis, emb)
    qn = np.linalg.norm(query)

    def cosine(entry: CorpusEntry) -> float:
        en = np.linalg.norm(entry.embedding)
        if qn == 0.0 or en == 0.0:
            return 0.0
        return float(query @ entry.embedding / (qn * en))

    best = index.entries[0]
    best_sim = cosine(best)
    for entry in index.entries[1:]:
        sim = cosine(entry)
        if sim > best_sim:
            best, best_sim = entry, sim
    return best


def make_reference(
    gray0: np.ndarray,
    retrieved: RgbImage,
    cfg: PipelineConfig | None = None,
) -> LabImage:
    """Colorize frame 0 by transferring the retrieved image's chroma.

    The output keeps ``gray0`` as its luminance plane exactly; only chroma
    is synthesized (correspondence transfer, bilinear resampling, then an
    edge-aware smoothing pass).
    """
    cfg = cfg or PipelineConfig()
    gray = np.asarray(gray0, dtype=np.float64)
    ref_lab = rgb_to_lab(retrieved)

    fm_query = extract_pyramid(gray, n_levels=cfg.feature_levels)
    fm_ref = extract_pyramid(ref_lab.L, n_levels=cfg.feature_levels)
    lvl_query = pick_level(fm_query, cfg.max_corr_grid)
    lvl_ref = pick_level(fm_ref, cfg.max_corr_grid)

    ref_cells = pool_chroma(ref_lab.chroma(), lvl_ref)
    aff = build_affinity(lvl_query, lvl_ref)
    cells, _ = attend_chroma(
        aff,
        ref_cells,
        temperature=cfg.temperature,
        k=cfg.top_k,
        query_grid=(lvl_query.grid_height, lvl_query.grid_width),
    )
    chroma = resample_chroma(cells, gray.shape[1], gray.shape[0])
    smoothed = edge_aware_smooth(chroma, gray, cfg.smoothing_strength, cfg.smoothing_edge_threshold)
    ab = np.clip(smoothed, -128.0, 127.0)
    return LabImage(L=gray, a=ab[..., 0], b=ab[..., 1])


def _entry_to_doc(entry: CorpusEntry) -> dict:
    return {
        "id": entry.id,
        "path": entry.path,
        "embedding": entry.embedding.tolist(),
        "colorfulness": entry.colorfulness,
        "width": entry.width,
        "height": entry.height,
    }


def save_index(index: CorpusIndex, path: str | Path) -> None:
    """Serialize an index as canonical JSON (bit-exact roundtrip)."""
    doc = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "config": index.config,
        "rejections": index.rejections,
        "basis": {
            "mean": index.basis.mean.tolist(),
            "components": index.basis.components.tolist(),
            "explained_fraction": index.basis.explained_fraction.tolist(),
        },
        "entries": [_entry_to_doc(e) for e in index.entries],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def load_index(path: str | Path) -> CorpusIndex:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != INDEX_FORMAT:
        raise ValueError(f"{path} is not a corpus index file")
    if doc.get("version") != INDEX_VERSION:
        raise ValueError(f"unsupported index version {doc.get('version')}")
    basis = PcaBasis(
        mean=np.array(doc["basis"]["mean"]),
        components=np.array(doc["basis"]["components"]),
        explained_fraction=np.array(doc["basis"]["explained_fraction"]),
    )
    entries = tuple(
        CorpusEntry(
            id=e["id"],
            path=e["path"],
            embedding=np.array(e["embedding"]),
            colorfulness=e["colorfulness"],
            width=e["width"],
            height=e["height"],
        )
        for e in doc["entries"]
    )
    return CorpusIndex(basis=basis, entries=entries, config=doc["config"], rejections=doc["rejections"])
