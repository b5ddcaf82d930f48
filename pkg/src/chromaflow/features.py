"""Deterministic multi-scale feature extraction and PCA embeddings.

The extractor stands in for a pretrained deep network: each pyramid level is
a Gaussian-blurred, 2x downsampled copy of the luminance plane, partitioned
into 4x4 cells. A cell's descriptor concatenates its local mean, local
standard deviation, and an 8-bin gradient-orientation histogram, then is
L2-normalized. The raw (pre-normalization) descriptors are kept alongside
for the perceptual metric.

Any module that consumes descriptors (correspondence, retrieval, metrics)
only sees the :class:`FeatureMap` contract, so a different extractor can be
swapped in without touching them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

CELL = 4                     # cell side in pixels at each level's resolution
PYRAMID_SIGMA = 1.0          # Gaussian blur before each 2x downsample
ORIENT_BINS = 8
PATTERN_DIM = CELL * CELL    # per-pixel deviations from the cell mean

# Component scaling. Offsets common to all cells (the mid-gray brightness
# baseline, the isotropic part of the gradient histogram) are removed before
# normalization: shared baselines compress cosine similarities toward 1 and
# destroy the selectivity of the attention softmax. The 16 pattern
# components keep spurious distant matches rare (high-dimensional noise
# rarely aligns) while an identical cell still matches itself exactly.
_MEAN_OFFSET = 50.0
_MEAN_SCALE = 100.0
_STD_SCALE = 50.0
_PATTERN_SCALE = 25.0
_GRAD_SCALE = 12.5 * CELL * CELL

DESCRIPTOR_DIM = 2 + PATTERN_DIM + ORIENT_BINS


@dataclass(frozen=True)
class FeatureLevel:
    """One pyramid level: a grid of descriptors at 1/scale resolution."""

    scale: int
    grid_width: int
    grid_height: int
    descriptor_dim: int
    descriptors: np.ndarray      # (grid_h * grid_w, dim), unit L2 norm, row-major
    raw_descriptors: np.ndarray  # same layout, pre-normalization

    def __post_init__(self) -> None:
        for name in ("descriptors", "raw_descriptors"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.grid_height * self.grid_width, self.descriptor_dim):
                raise ValueError(f"{name} shape {arr.shape} does not match grid")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        norms = np.linalg.norm(self.descriptors, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("descriptors must be unit-norm")


@dataclass(frozen=True)
class FeatureMap:
    levels: tuple[FeatureLevel, ...]

    def __post_init__(self) -> None:
        if len(self.levels) < 1:
            raise ValueError("feature map needs at least one level")

    @property
    def coarsest(self) -> FeatureLevel:
        return self.levels[-1]


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray          # (n_components, input_dim), orthonormal rows
    explained_fraction: np.ndarray  # non-increasing

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        comps = np.ascontiguousarray(self.components, dtype=np.float64)
        frac = np.ascontiguousarray(self.explained_fraction, dtype=np.float64)
        if comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
            raise ValueError("components must be (n_components, input_dim)")
        gram = comps @ comps.T
        if np.abs(gram - np.eye(comps.shape[0])).max() > 1e-6:
            raise ValueError("components must be pairwise orthonormal")
        if np.any(np.diff(frac) > 1e-12):
            raise ValueError("explained_fraction must be non-increasing")
        for name, arr in (("mean", mean), ("components", comps), ("explained_fraction", frac)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


def _downsample2(img: np.ndarray) -> np.ndarray:
    """Gaussian blur then 2x2 mean pooling (keeps 90-degree rotations exact)."""
    blurred = gaussian_filter(img, sigma=PYRAMID_SIGMA, mode="reflect")
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    cropped = blurred[: h2 * 2, : w2 * 2]
    return cropped.reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _cell_view(plane: np.ndarray, gh: int, gw: int) -> np.ndarray:
    return plane[: gh * CELL, : gw * CELL].reshape(gh, CELL, gw, CELL)


def _level_descriptors(img: np.ndarray) -> tuple[int, int, np.ndarray]:
    h, w = img.shape
    gh, gw = h // CELL, w // CELL
    cells = _cell_view(img, gh, gw)
    mean = cells.mean(axis=(1, 3))
    std = cells.std(axis=(1, 3))

    # per-pixel deviations from the cell mean, row-major within the cell:
    # local pattern structure separating cells whose global statistics agree
    pattern = cells.transpose(0, 2, 1, 3).reshape(gh, gw, PATTERN_DIM) - mean[..., None]

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)
    bins = np.minimum(((theta + np.pi) / (2 * np.pi / ORIENT_BINS)).astype(np.int64), ORIENT_BINS - 1)
    mag_cells = _cell_view(mag, gh, gw)
    bin_cells = _cell_view(bins, gh, gw)
    hist = np.empty((gh, gw, ORIENT_BINS))
    for k in range(ORIENT_BINS):
        hist[..., k] = np.where(bin_cells == k, mag_cells, 0.0).sum(axis=(1, 3))

    hist -= hist.mean(axis=-1, keepdims=True)
    raw = np.concatenate(
        [
            ((mean - _MEAN_OFFSET) / _MEAN_SCALE)[..., None],
            (std / _STD_SCALE)[..., None],
            pattern / _PATTERN_SCALE,
            hist / _GRAD_SCALE,
        ],
        axis=-1,
    ).reshape(gh * gw, DESCRIPTOR_DIM)
    return gh, gw, raw


def _normalize(raw: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    out = np.divide(raw, norms, out=np.zeros_like(raw), where=norms > 1e-12)
    degenerate = norms[:, 0] <= 1e-12
    if np.any(degenerate):
        out[degenerate, 0] = 1.0
    return out


def extract_pyramid(gray: np.ndarray, n_levels: int = 4) -> FeatureMap:
    """Build descriptor grids over ``n_levels`` pyramid levels of a plane.

    ``gray`` is a 2-D float plane (the L plane of a LabImage, or any other
    channel). Requires the plane to be at least 32x32 and large enough that
    the coarsest level still holds one full cell.
    """
    img = np.asarray(gray, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D plane")
    if n_levels < 3:
        raise ValueError("need at least 3 pyramid levels")
    if img.shape[0] < 32 or img.shape[1] < 32:
        raise ValueError("image must be at least 32x32")
    if min(img.shape) // (2 ** (n_levels - 1)) < CELL:
        raise ValueError(f"image too small for {n_levels} levels")

    levels = []
    current = img
    for i in range(n_levels):
        gh, gw, raw = _level_descriptors(current)
        levels.append(
            FeatureLevel(
                scale=2 ** i,
                grid_width=gw,
                grid_height=gh,
                descriptor_dim=DESCRIPTOR_DIM,
                descriptors=_normalize(raw),
                raw_descriptors=raw,
            )
        )
        if i + 1 < n_levels:
            current = _downsample2(current)
    return FeatureMap(levels=tuple(levels))


def flatten_embedding(fm: FeatureMap) -> np.ndarray:
    """Row-major concatenation of the coarsest level's descriptors."""
    return fm.coarsest.descriptors.ravel().copy()


def pca_fit(samples: np.ndarray, n_components: int) -> PcaBasis:
    """Fit a PCA basis by eigendecomposition of the sample covariance.

    Requires at least ``n_components + 1`` samples and nonzero total
    variance. Eigenvalue ties are broken by lexicographic eigenvector order
    and each component's sign is fixed so its largest-magnitude entry is
    positive, making the basis deterministic.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-D array (n_samples, dim)")
    n, d = X.shape
    if n_components < 1 or n_components > d:
        raise ValueError("n_components must be in [1, dim]")
    if n < n_components + 1:
        raise ValueError(f"need at least {n_components + 1} samples, got {n}")

    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(d, d)
    total = np.trace(cov)
    if total <= 1e-15:
        raise ValueError("samples have zero variance")

    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    comps = eigvecs.T[:n_components].copy()
    vals = np.clip(eigvals[:n_components], 0.0, None)

    # deterministic sign: largest-|entry| coordinate (first on ties) positive
    for row in comps:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0

    # exact eigenvalue ties: order eigenvectors lexicographically
    i = 0
    while i < n_components:
        j = i
        while j + 1 < n_components and vals[j + 1] == vals[i]:
            j += 1
        if j > i:
            block = comps[i : j + 1]
            idx = np.lexsort(block.T[::-1])
            comps[i : j + 1] = block[idx]
        i = j + 1

    return PcaBasis(mean=mean, components=comps, explained_fraction=vals / total)


def pca_project(basis: PcaBasis, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (basis.input_dim,):
        raise ValueError(f"vector has dim {v.shape}, basis expects ({basis.input_dim},)")
    return basis.components @ (v - basis.mean)
