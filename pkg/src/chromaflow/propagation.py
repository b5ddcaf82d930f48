"""Frame-by-frame colorization from a reference and the previous frame.

Each frame's chroma comes from two sources: non-local transfer from the
reference (long-range consistency) and the flow-warped previous frame
(short-range smoothness). The two are blended per pixel by a
confidence-gated weight

    w = blend_bias * max(confidence - confidence_floor, 0) / (1 - confidence_floor)

so pixels the reference matches well follow the reference and uncertain
pixels follow the temporally smooth warped chroma. Three modes:

* ``markov``    — the reference colorizes frame 0 only; every later frame
                  depends solely on its predecessor. Drifts over long ranges.
* ``exemplar``  — every frame is matched against the supplied exemplar
                  image directly, plus the previous-frame term.
* ``two_stage`` — like exemplar, but the caller first re-anchors the
                  exemplar onto frame 0 (see reference.make_reference), so
                  the matching target shares the video's own luminance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from chromaflow.color import LabImage
from chromaflow.config import PipelineConfig
from chromaflow.correspondence import (
    attend_chroma,
    build_affinity,
    pick_level,
    pool_chroma,
    resample_chroma,
)
from chromaflow.features import FeatureLevel, extract_pyramid
from chromaflow.flow import estimate_flow, warp
from chromaflow.video import VideoSequence


@dataclass(frozen=True)
class ReferenceContext:
    """Reference-side features and cell chroma, computed once per video."""

    level: FeatureLevel
    cell_chroma: np.ndarray

    @classmethod
    def from_reference(cls, reference: LabImage, cfg: PipelineConfig) -> "ReferenceContext":
        fm = extract_pyramid(reference.L, n_levels=cfg.feature_levels)
        level = pick_level(fm, cfg.max_corr_grid)
        return cls(level=level, cell_chroma=pool_chroma(reference.chroma(), level))


def edge_aware_smooth(
    chroma: np.ndarray,
    guide: np.ndarray,
    strength: int = 2,
    edge_threshold: float = 10.0,
) -> np.ndarray:
    """Average chroma within a box wherever the guide stays locally flat.

    A neighbor contributes only if its guide (luminance) value differs from
    the center pixel's by less than ``edge_threshold``, which stops chroma
    from bleeding across luminance edges. ``strength`` is the box radius in
    pixels; 0 returns the input unchanged.
    """
    c = np.asarray(chroma, dtype=np.float64)
    g = np.asarray(guide, dtype=np.float64)
    if c.ndim != 3 or c.shape[:2] != g.shape:
        raise ValueError("chroma must be (h, w, 2) matching the guide plane")
    r = int(strength)
    if r < 0:
        raise ValueError("strength must be nonnegative")
    if r == 0:
        return c.copy()

    h, w = g.shape
    g_pad = np.pad(g, r, mode="constant", constant_values=np.inf)
    c_pad = np.pad(c, ((r, r), (r, r), (0, 0)), mode="constant")
    acc = np.zeros_like(c)
    cnt = np.zeros((h, w, 1))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            g_s = g_pad[r + dy : r + dy + h, r + dx : r + dx + w]
            keep = np.abs(g_s - g) < edge_threshold
            acc += np.where(keep[..., None], c_pad[r + dy : r + dy + h, r + dx : r + dx + w], 0.0)
            cnt += keep[..., None]
    return acc / cnt


def _transfer_from_reference(
    gray: np.ndarray, ctx: ReferenceContext, cfg: PipelineConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Reference chroma and match confidence at frame resolution."""
    fm = extract_pyramid(gray, n_levels=cfg.feature_levels)
    level = pick_level(fm, cfg.max_corr_grid)
    aff = build_affinity(level, ctx.level)
    cells, field = attend_chroma(
        aff,
        ctx.cell_chroma,
        temperature=cfg.temperature,
        k=cfg.top_k,
        query_grid=(level.grid_height, level.grid_width),
    )
    h, w = gray.shape
    chroma = resample_chroma(cells, w, h)
    confidence = resample_chroma(field.confidence_grid(), w, h)[..., 0]
    return chroma, confidence


def colorize_frame(
    gray_n: np.ndarray,
    reference: LabImage,
    prev: LabImage | None,
    cfg: PipelineConfig | None = None,
    *,
    ref_ctx: ReferenceContext | None = None,
) -> LabImage:
    """Colorize one luminance plane from the reference and previous frame.

    ``gray_n`` is the frame's L plane. With no previous frame the reference
    term gets full weight; in markov mode with a previous frame the
    reference term is dropped entirely.
    """
    cfg = cfg or PipelineConfig()
    gray = np.asarray(gray_n, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError("gray_n must be a 2-D luminance plane")
    if prev is not None and (prev.height, prev.width) != gray.shape:
        raise ValueError("previous frame dimensions differ")
    if ref_ctx is None:
        ref_ctx = ReferenceContext.from_reference(reference, cfg)

    h, w = gray.shape
    markov_tail = cfg.mode == "markov" and prev is not None

    if markov_tail:
        chroma_ref = None
        weight = np.zeros((h, w, 1))
    else:
        chroma_ref, confidence = _transfer_from_reference(gray, ref_ctx, cfg)
        tau = cfg.confidence_floor
        gated = np.maximum(confidence - tau, 0.0) / max(1.0 - tau, 1e-12)
        weight = (cfg.blend_bias * gated)[..., None]

    if prev is None:
        fused = chroma_ref
    else:
        flow = estimate_flow(prev.L, gray, search_radius=cfg.search_radius, levels=cfg.flow_levels)
        warped = warp(prev, flow)
        chroma_prev = warped.chroma()
        if markov_tail:
            fused = chroma_prev
        else:
            if cfg.scene_cut_guard and np.abs(warped.L - gray).mean() > cfg.scene_cut_threshold:
                weight = np.ones_like(weight)
            fused = weight * chroma_ref + (1.0 - weight) * chroma_prev

    smoothed = edge_aware_smooth(fused, gray, cfg.smoothing_strength, cfg.smoothing_edge_threshold)
    ab = np.clip(smoothed, -128.0, 127.0)
    return LabImage(L=gray, a=ab[..., 0], b=ab[..., 1])


def colorize_video(
    gray: VideoSequence,
    reference: LabImage,
    cfg: PipelineConfig | None = None,
) -> VideoSequence:
    """Colorize a grayscale video, supervised by one reference image.

    Frame 0 is the reference itself when the reference carries the frame's
    exact luminance (the two-stage path), otherwise a correspondence
    transfer onto frame 0. Later frames follow the configured mode.
    """
    cfg = cfg or PipelineConfig()
    if len(gray) < 1:
        raise ValueError("empty sequence")
    grays = [f.L for f in gray.lab_frames()]
    if (reference.height, reference.width) != (gray.height, gray.width):
        raise ValueError("reference dimensions differ from the video")

    ctx = ReferenceContext.from_reference(reference, cfg)
    out: list[LabImage] = []
    if np.array_equal(reference.L, grays[0]):
        out.append(reference)
    else:
        out.append(colorize_frame(grays[0], reference, None, cfg, ref_ctx=ctx))
    for i in range(1, len(grays)):
        out.append(colorize_frame(grays[i], reference, out[-1], cfg, ref_ctx=ctx))
    return VideoSequence(frames=tuple(out), fps=gray.fps)
