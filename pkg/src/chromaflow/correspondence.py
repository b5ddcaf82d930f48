"""Dense non-local correspondence between feature grids.

Matches every cell of a grayscale frame against every cell of a reference,
then transfers reference chroma through a sharpened top-k softmax. The
correspondence runs at a reduced grid resolution (quadratic affinity cost);
the transferred chroma is bilinearly resampled back to frame resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chromaflow.features import FeatureLevel, FeatureMap

MAX_CORRESPONDENCE_GRID = 64


@dataclass(frozen=True)
class CorrespondenceField:
    """Per-query-cell top-k reference matches with softmax weights.

    ``indices``/``weights`` are (n_cells, k) with cells in row-major grid
    order; weights are non-increasing within a row and sum to 1.
    ``confidence`` is the top-1 cosine affinity rescaled to [0, 1].
    """

    grid_width: int
    grid_height: int
    indices: np.ndarray
    weights: np.ndarray
    confidence: np.ndarray

    def __post_init__(self) -> None:
        n = self.grid_width * self.grid_height
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        conf = np.ascontiguousarray(self.confidence, dtype=np.float64)
        if idx.ndim != 2 or idx.shape[0] != n or w.shape != idx.shape:
            raise ValueError("indices/weights must be (n_cells, k)")
        if idx.shape[1] < 1:
            raise ValueError("k must be at least 1")
        if conf.shape != (n,):
            raise ValueError("confidence must be (n_cells,)")
        if np.abs(w.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("per-cell weights must sum to 1")
        if np.any(np.diff(w, axis=1) > 1e-12):
            raise ValueError("weights must be non-increasing within a cell")
        if conf.min() < 0.0 or conf.max() > 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        for name, arr in (("indices", idx), ("weights", w), ("confidence", conf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def matches_for(self, cell: int) -> list[tuple[int, float]]:
        return list(zip(self.indices[cell].tolist(), self.weights[cell].tolist()))

    def confidence_grid(self) -> np.ndarray:
        return self.confidence.reshape(self.grid_height, self.grid_width)


def _descriptor_array(level) -> np.ndarray:
    if isinstance(level, FeatureLevel):
        return level.descriptors
    return np.asarray(level, dtype=np.float64)


def build_affinity(query, reference) -> np.ndarray:
    """Cosine similarity between all query and reference descriptors.

    Accepts :class:`FeatureLevel` objects or plain (n, dim) arrays; returns
    an (n_query, n_reference) matrix in [-1, 1].
    """
    q = _descriptor_array(query)
    r = _descriptor_array(reference)
    if q.ndim != 2 or r.ndim != 2 or q.shape[1] != r.shape[1]:
        raise ValueError(f"descriptor dims differ: {q.shape} vs {r.shape}")
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    rn = np.linalg.norm(r, axis=1, keepdims=True)
    q = np.divide(q, qn, out=np.zeros_like(q), where=qn > 0)
    r = np.divide(r, rn, out=np.zeros_like(r), where=rn > 0)
    return np.clip(q @ r.T, -1.0, 1.0)


def attend_chroma(
    affinity: np.ndarray,
    reference_chroma: np.ndarray,
    temperature: float = 0.05,
    k: int = 8,
    query_grid: tuple[int, int] | None = None,
) -> tuple[np.ndarray, CorrespondenceField]:
    """Transfer reference chroma to query cells by top-k softmax attention.

    ``reference_chroma`` holds one (a, b) pair per reference cell, either as
    a flat (n_ref, 2) array or as a (grid_h, grid_w, 2) grid in row-major
    cell order. ``query_grid`` gives the query cell grid as (grid_h, grid_w);
    a single-row grid is assumed when omitted. Returns the transferred
    chroma as a (grid_h, grid_w, 2) grid plus the correspondence field.
    """
    aff = np.asarray(affinity, dtype=np.float64)
    if aff.ndim != 2 or aff.shape[0] < 1 or aff.shape[1] < 1:
        raise ValueError("affinity must be a nonempty 2-D matrix")
    if k < 1:
        raise ValueError("k must be at least 1")
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    ref = np.asarray(reference_chroma, dtype=np.float64).reshape(-1, 2)
    n_q, n_r = aff.shape
    if ref.shape[0] != n_r:
        raise ValueError("reference chroma count does not match affinity columns")
    if query_grid is None:
        query_grid = (1, n_q)
    gh, gw = query_grid
    if gh * gw != n_q:
        raise ValueError("query_grid does not match affinity rows")

    kk = min(k, n_r)
    if kk < n_r:
        sel = np.argpartition(-aff, kth=kk - 1, axis=1)[:, :kk]
    else:
        sel = np.broadcast_to(np.arange(n_r), (n_q, n_r)).copy()
    sel = np.sort(sel, axis=1)  # index-ascending so affinity ties resolve by index
    vals = np.take_along_axis(aff, sel, axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    sel = np.take_along_axis(sel, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)

    logits = (vals - vals[:, :1]) / temperature
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)

    chroma = (weights[..., None] * ref[sel]).sum(axis=1)
    confidence = np.clip((vals[:, 0] + 1.0) / 2.0, 0.0, 1.0)
    field = CorrespondenceField(
        grid_width=gw,
        grid_height=gh,
        indices=sel,
        weights=weights,
        confidence=confidence,
    )
    return chroma.reshape(gh, gw, 2), field


def pool_chroma(chroma: np.ndarray, level: FeatureLevel) -> np.ndarray:
    """Block-average full-resolution a/b planes onto a level's cell grid."""
    c = np.asarray(chroma, dtype=np.float64)
    if c.ndim != 3 or c.shape[2] != 2:
        raise ValueError("chroma must be (h, w, 2)")
    block = 4 * level.scale
    gh, gw = level.grid_height, level.grid_width
    cropped = c[: gh * block, : gw * block]
    return cropped.reshape(gh, block, gw, block, 2).mean(axis=(1, 3))


def resample_chroma(grid: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinearly upsample a cell-resolution chroma grid to (target_h, target_w, 2).

    Grid values are treated as samples at cell centers; coordinates outside
    the grid clamp to the border.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim == 2:
        g = g[..., None]
    if g.shape[0] < 1 or g.shape[1] < 1:
        raise ValueError("grid must be nonempty")
    gh, gw = g.shape[:2]
    ys = np.clip((np.arange(target_h) + 0.5) * gh / target_h - 0.5, 0.0, gh - 1.0)
    xs = np.clip((np.arange(target_w) + 0.5) * gw / target_w - 0.5, 0.0, gw - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = g[y0][:, x0] * (1 - fx) + g[y0][:, x1] * fx
    bottom = g[y1][:, x0] * (1 - fx) + g[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def pick_level(fm: FeatureMap, max_grid: int = MAX_CORRESPONDENCE_GRID) -> FeatureLevel:
    """Finest pyramid level whose grid fits within max_grid per side."""
    for level in fm.levels:
        if level.grid_width <= max_grid and level.grid_height <= max_grid:
            return level
    return fm.coarsest
