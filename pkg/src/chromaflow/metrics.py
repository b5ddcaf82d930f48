"""Temporal-consistency and image-quality metrics.

* ``cdc`` — mean Jensen-Shannon divergence between RGB channel histograms of
  frame pairs, averaged over channels, pairs, then strides. Lower is more
  temporally consistent.
* ``warp_error`` — mean absolute chroma difference between each frame and
  its flow-warped predecessor over non-occluded pixels.
* ``perceptual_distance`` — weighted squared descriptor differences over the
  three coarsest pyramid levels, computed on all three Lab planes.
* ``frechet_distance`` — Wasserstein-2 distance between Gaussians fitted to
  two descriptor sets. Reported as "Fréchet distance (pyramid features)";
  values are not comparable to Inception-based FID numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from chromaflow.color import ChannelHistogram, LabImage, channel_histogram
from chromaflow.config import PipelineConfig
from chromaflow.correspondence import pick_level
from chromaflow.features import extract_pyramid
from chromaflow.flow import estimate_flow, occlusion_mask, warp
from chromaflow.video import VideoSequence

OCCLUSION_TOL = 0.5


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one video, with per-frame breakdowns.

    Fields needing a ground truth (perceptual, frechet, chroma_l1) are None
    when it was not supplied; ``combined`` sums lambda-weighted available
    metrics.
    """

    cdc: float | None
    warp_error: float | None
    perceptual: float | None
    frechet: float | None
    chroma_l1: float | None
    combined: float
    per_frame_cdc: tuple[float, ...] = ()
    per_frame_warp_error: tuple[float, ...] = ()
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "cdc": self.cdc,
            "warp_error": self.warp_error,
            "perceptual": self.perceptual,
            "frechet": self.frechet,
            "chroma_l1": self.chroma_l1,
            "combined": self.combined,
            "per_frame": {
                "cdc": list(self.per_frame_cdc),
                "warp_error": list(self.per_frame_warp_error),
            },
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        doc = json.loads(text)
        return cls(
            cdc=doc["cdc"],
            warp_error=doc["warp_error"],
            perceptual=doc["perceptual"],
            frechet=doc["frechet"],
            chroma_l1=doc["chroma_l1"],
            combined=doc["combined"],
            per_frame_cdc=tuple(doc["per_frame"]["cdc"]),
            per_frame_warp_error=tuple(doc["per_frame"]["warp_error"]),
            config=doc["config"],
        )


def js_divergence(p: ChannelHistogram, q: ChannelHistogram) -> float:
    """Jensen-Shannon divergence in bits (base-2), in [0, 1]."""
    if p.bins != q.bins:
        raise ValueError("histograms have different bin counts")
    pm, qm = p.mass, q.mass
    m = 0.5 * (pm + qm)

    def kl(u: np.ndarray) -> float:
        nz = u > 0
        return float((u[nz] * np.log2(u[nz] / m[nz])).sum())

    return 0.5 * kl(pm) + 0.5 * kl(qm)


def _frame_histograms(video: VideoSequence, bins: int) -> list[tuple[ChannelHistogram, ...]]:
    return [
        tuple(channel_histogram(f, c, bins=bins) for c in "rgb")
        for f in video.rgb_frames()
    ]


def _pair_jsd(hists, i: int, j: int) -> float:
    return float(np.mean([js_divergence(hists[i][c], hists[j][c]) for c in range(3)]))


def cdc(video: VideoSequence, bins: int = 256, strides: tuple[int, ...] = (1,)) -> float:
    """Color distribution consistency: mean histogram JSD across frame pairs."""
    if bins < 2:
        raise ValueError("bins must be at least 2")
    strides = tuple(sorted(set(int(s) for s in strides)))
    if not strides or strides[0] < 1:
        raise ValueError("strides must be positive")
    if len(video) < max(strides) + 1:
        raise ValueError(f"video shorter than max stride + 1 ({max(strides) + 1})")
    hists = _frame_histograms(video, bins)
    per_stride = []
    for t in strides:
        vals = [_pair_jsd(hists, i, i + t) for i in range(len(video) - t)]
        per_stride.append(float(np.mean(vals)))
    return float(np.mean(per_stride))


def _pair_warp_error(prev: LabImage, nxt: LabImage, search_radius: int, levels: int) -> float:
    fwd = estimate_flow(prev.L, nxt.L, search_radius=search_radius, levels=levels)
    bwd = estimate_flow(nxt.L, prev.L, search_radius=search_radius, levels=levels)
    occ = occlusion_mask(fwd, bwd, tol=OCCLUSION_TOL).occluded
    warped = warp(prev, fwd)
    diff = 0.5 * (np.abs(nxt.a - warped.a) + np.abs(nxt.b - warped.b))
    keep = ~occ
    if not keep.any():
        keep = np.ones_like(occ)
    return float(diff[keep].mean())


def warp_error(video: VideoSequence, search_radius: int = 4, flow_levels: int = 3) -> float:
    """Mean chroma difference between frames and their warped predecessors."""
    if len(video) < 2:
        raise ValueError("need at least 2 frames")
    frames = video.lab_frames()
    vals = [
        _pair_warp_error(frames[i], frames[i + 1], search_radius, flow_levels)
        for i in range(len(frames) - 1)
    ]
    return float(np.mean(vals))


def _plane_level_distance(pa: np.ndarray, pb: np.ndarray, weights, n_levels: int) -> float:
    fa = extract_pyramid(pa, n_levels=n_levels)
    fb = extract_pyramid(pb, n_levels=n_levels)
    total = 0.0
    for w, la, lb in zip(weights, fa.levels[-3:], fb.levels[-3:]):
        d = la.raw_descriptors - lb.raw_descriptors
        total += w * float((d * d).sum(axis=1).mean())
    return total


def perceptual_distance(
    a: LabImage,
    b: LabImage,
    weights: tuple[float, float, float] = (0.02, 0.003, 0.5),
    n_levels: int = 4,
) -> float:
    """Coarse-to-fine descriptor distance, averaged over the L, a, b planes.

    The three weights attach to the three coarsest pyramid levels in
    fine-to-coarse order; raw (pre-normalization) descriptors are compared
    so brightness and contrast differences register.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("image dimensions differ")
    if len(weights) != 3 or any(w <= 0 for w in weights):
        raise ValueError("need three positive weights")
    planes_a = (a.L, a.a + 128.0, a.b + 128.0)
    planes_b = (b.L, b.a + 128.0, b.b + 128.0)
    vals = [
        _plane_level_distance(pa, pb, weights, n_levels)
        for pa, pb in zip(planes_a, planes_b)
    ]
    return float(np.mean(vals))


def _psd_sqrt_trace(mat: np.ndarray, tol: float = 1e-8) -> float:
    sym = 0.5 * (mat + mat.T)
    eigvals = np.linalg.eigvalsh(sym)
    if eigvals.min() < -tol * max(1.0, abs(eigvals.max())):
        raise ValueError("matrix is not positive semi-definite within tolerance")
    return float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Fréchet (Wasserstein-2) distance between Gaussian fits of two sets.

    Requires each set to have at least dim + 1 samples; covariances use
    ddof=1. The matrix square root comes from the eigendecomposition of the
    symmetrized product sqrt(Sa) Sb sqrt(Sa).
    """
    A = np.atleast_2d(np.asarray(feats_a, dtype=np.float64))
    B = np.atleast_2d(np.asarray(feats_b, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature dims differ")
    d = A.shape[1]
    if A.shape[0] < d + 1 or B.shape[0] < d + 1:
        raise ValueError(f"need at least {d + 1} samples per set")

    mu_a, mu_b = A.mean(axis=0), B.mean(axis=0)
    cov_a = np.cov(A, rowvar=False, ddof=1).reshape(d, d)
    cov_b = np.cov(B, rowvar=False, ddof=1).reshape(d, d)

    vals_a, vecs_a = np.linalg.eigh(0.5 * (cov_a + cov_a.T))
    if vals_a.min() < -1e-8 * max(1.0, abs(vals_a.max())):
        raise ValueError("covariance is not positive semi-definite within tolerance")
    sqrt_a = (vecs_a * np.sqrt(np.clip(vals_a, 0.0, None))) @ vecs_a.T

    tr_sqrt = _psd_sqrt_trace(sqrt_a @ cov_b @ sqrt_a)
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(value, 0.0)


def frame_embedding_samples(frames: list[LabImage], n_levels: int = 4) -> np.ndarray:
    """Per-cell descriptors of all frames, pooled as Fréchet samples.

    Each sample concatenates the raw descriptors of the L, a, b planes for
    one cell at the correspondence resolution (grid capped at 64 per side),
    so both structure and color statistics enter the Fréchet distance.
    """
    samples = []
    for f in frames:
        per_plane = [
            pick_level(extract_pyramid(p, n_levels=n_levels)).raw_descriptors
            for p in (f.L, f.a + 128.0, f.b + 128.0)
        ]
        samples.append(np.concatenate(per_plane, axis=1))
    return np.concatenate(samples, axis=0)


def evaluate_report(
    output: VideoSequence,
    ground_truth: VideoSequence | None,
    cfg: PipelineConfig | None = None,
) -> MetricsReport:
    """Compute all applicable metrics for a colorized video.

    Metrics that need a ground truth are None without one; single-frame
    videos get None for the temporal metrics. ``combined`` is the sum of
    lambda-weighted available metrics.
    """
    cfg = cfg or PipelineConfig()
    if ground_truth is not None:
        if len(ground_truth) != len(output):
            raise ValueError("output and ground truth lengths differ")
        if (ground_truth.height, ground_truth.width) != (output.height, output.width):
            raise ValueError("output and ground truth dimensions differ")

    out_lab = output.lab_frames()
    n = len(output)

    per_frame_cdc: tuple[float, ...] = ()
    per_frame_warp: tuple[float, ...] = ()
    cdc_val = warp_val = None
    if n >= 2:
        if n < max(cfg.cdc_strides) + 1:
            raise ValueError(f"video shorter than max stride + 1 ({max(cfg.cdc_strides) + 1})")
        hists = _frame_histograms(output, cfg.histogram_bins)
        per_frame_cdc = tuple(_pair_jsd(hists, i, i + 1) for i in range(n - 1))
        per_stride = []
        for t in cfg.cdc_strides:
            per_stride.append(float(np.mean([_pair_jsd(hists, i, i + t) for i in range(n - t)])))
        cdc_val = float(np.mean(per_stride))
        per_frame_warp = tuple(
            _pair_warp_error(out_lab[i], out_lab[i + 1], cfg.search_radius, cfg.flow_levels)
            for i in range(n - 1)
        )
        warp_val = float(np.mean(per_frame_warp))

    perceptual = frechet = chroma_l1 = None
    if ground_truth is not None:
        gt_lab = ground_truth.lab_frames()
        perceptual = float(np.mean([
            perceptual_distance(o, g, cfg.perceptual_weights, cfg.feature_levels)
            for o, g in zip(out_lab, gt_lab)
        ]))
        chroma_l1 = float(np.mean([
            0.5 * (np.abs(o.a - g.a) + np.abs(o.b - g.b)).mean()
            for o, g in zip(out_lab, gt_lab)
        ]))
        out_samples = frame_embedding_samples(out_lab, cfg.feature_levels)
        gt_samples = frame_embedding_samples(gt_lab, cfg.feature_levels)
        # Gaussian fit needs more samples than dimensions; tiny videos skip it
        if min(out_samples.shape[0], gt_samples.shape[0]) >= out_samples.shape[1] + 1:
            frechet = frechet_distance(out_samples, gt_samples)

    combined = 0.0
    for lam, value in (
        (cfg.lambda_cdc, cdc_val),
        (cfg.lambda_temp, warp_val),
        (cfg.lambda_perc, perceptual),
        (cfg.lambda_l1, chroma_l1),
        (cfg.lambda_frechet, frechet),
    ):
        if value is not None:
            combined += lam * value

    return MetricsReport(
        cdc=cdc_val,
        warp_error=warp_val,
        perceptual=perceptual,
        frechet=frechet,
        chroma_l1=chroma_l1,
        combined=combined,
        per_frame_cdc=per_frame_cdc,
        per_frame_warp_error=per_frame_warp,
        config=cfg.to_dict(),
    )
