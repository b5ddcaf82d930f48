"""Block-matching optical flow and backward warping.

``estimate_flow(prev, next)`` returns, for every pixel of ``next``, the
displacement into ``prev`` where that pixel's content came from, so
``warp(prev, flow)`` reprojects the previous frame into the current frame's
geometry. Estimation is coarse-to-fine over a mean-pooled pyramid with 8x8
blocks and SAD costs; cost ties resolve to the smallest displacement, then
lexicographic (dx, dy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from chromaflow.color import LabImage

BLOCK = 8
FLAT_BLOCK_STD = 1.0


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (dx, dy) displacement in pixels, shape (h, w, 2)."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError("flow vectors must have shape (h, w, 2)")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def dx(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def dy(self) -> np.ndarray:
        return self.vectors[..., 1]


@dataclass(frozen=True)
class OcclusionMask:
    occluded: np.ndarray

    def __post_init__(self) -> None:
        m = np.ascontiguousarray(self.occluded, dtype=bool)
        if m.ndim != 2:
            raise ValueError("mask must be 2-D")
        m.setflags(write=False)
        object.__setattr__(self, "occluded", m)

    @property
    def width(self) -> int:
        return self.occluded.shape[1]

    @property
    def height(self) -> int:
        return self.occluded.shape[0]


def _pool2(img: np.ndarray) -> np.ndarray:
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    return img[: h2 * 2, : w2 * 2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _block_search(
    prev: np.ndarray,
    nxt: np.ndarray,
    init_dx: np.ndarray,
    init_dy: np.ndarray,
    radius: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One pyramid level of block matching around per-block init vectors."""
    h, w = nxt.shape
    nby = (h + BLOCK - 1) // BLOCK
    nbx = (w + BLOCK - 1) // BLOCK
    out_dx = np.empty((nby, nbx))
    out_dy = np.empty((nby, nbx))

    for by in range(nby):
        y0, y1 = by * BLOCK, min((by + 1) * BLOCK, h)
        for bx in range(nbx):
            x0, x1 = bx * BLOCK, min((bx + 1) * BLOCK, w)
            block = nxt[y0:y1, x0:x1]
            idx0 = init_dx[by, bx]
            idy0 = init_dy[by, bx]

            if block.std() < FLAT_BLOCK_STD:
                out_dx[by, bx] = idx0
                out_dy[by, bx] = idy0
                continue

            # candidate displacements keeping the matched block inside prev;
            # search around the init vector and around zero so a bad init
            # cannot push the block outside the basin of the true match
            dx_lo, dx_hi = -x0, (w - x1)
            dy_lo, dy_hi = -y0, (h - y1)
            centers = [(int(np.round(idx0)), int(np.round(idy0)))]
            if centers[0] != (0, 0):
                centers.append((0, 0))
            all_dx, all_dy, all_sad = [], [], []
            for cx, cy in centers:
                xs_lo = max(cx - radius, dx_lo)
                xs_hi = min(cx + radius, dx_hi)
                ys_lo = max(cy - radius, dy_lo)
                ys_hi = min(cy + radius, dy_hi)
                if xs_lo > xs_hi:
                    xs_lo = xs_hi = int(np.clip(cx, dx_lo, dx_hi))
                if ys_lo > ys_hi:
                    ys_lo = ys_hi = int(np.clip(cy, dy_lo, dy_hi))
                window = prev[y0 + ys_lo : y1 + ys_hi, x0 + xs_lo : x1 + xs_hi]
                cands = sliding_window_view(window, block.shape)
                sad = np.abs(cands - block).sum(axis=(2, 3))
                dxg, dyg = np.meshgrid(np.arange(xs_lo, xs_hi + 1), np.arange(ys_lo, ys_hi + 1))
                all_dx.append(dxg.ravel())
                all_dy.append(dyg.ravel())
                all_sad.append(sad.ravel())
            dxg = np.concatenate(all_dx)
            dyg = np.concatenate(all_dy)
            sad = np.concatenate(all_sad)
            best = np.lexsort((dyg, dxg, dxg * dxg + dyg * dyg, sad))[0]
            out_dx[by, bx] = dxg[best]
            out_dy[by, bx] = dyg[best]
    return out_dx, out_dy


def _blocks_to_pixels(block_field: np.ndarray, h: int, w: int) -> np.ndarray:
    return np.repeat(np.repeat(block_field, BLOCK, axis=0), BLOCK, axis=1)[:h, :w]


def estimate_flow(
    prev: np.ndarray,
    next: np.ndarray,
    search_radius: int = 4,
    levels: int = 3,
) -> FlowField:
    """Coarse-to-fine block-matching flow from ``next`` into ``prev``.

    Blocks of ``next`` with standard deviation below 1.0 luminance unit
    inherit the coarser level's vector instead of being matched (zero at the
    coarsest level), which pins flat regions to zero motion. The resulting
    displacement magnitudes are bounded by search_radius * 2**levels.
    """
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(next, dtype=np.float64)
    if prev.shape != nxt.shape:
        raise ValueError("frame shapes differ")
    if prev.ndim != 2 or min(prev.shape) < BLOCK:
        raise ValueError(f"frames must be 2-D and at least {BLOCK}x{BLOCK}")
    if search_radius < 1:
        raise ValueError("search_radius must be at least 1")
    if levels < 1:
        raise ValueError("levels must be at least 1")

    pyramid = [(prev, nxt)]
    while len(pyramid) < levels and min(pyramid[-1][0].shape) >= 2 * BLOCK:
        p, n = pyramid[-1]
        pyramid.append((_pool2(p), _pool2(n)))

    flow_px_dx = flow_px_dy = None
    for p, n in reversed(pyramid):
        h, w = n.shape
        nby = (h + BLOCK - 1) // BLOCK
        nbx = (w + BLOCK - 1) // BLOCK
        if flow_px_dx is None:
            init_dx = np.zeros((nby, nbx))
            init_dy = np.zeros((nby, nbx))
        else:
            up_dx = np.repeat(np.repeat(flow_px_dx, 2, axis=0), 2, axis=1)[:h, :w] * 2.0
            up_dy = np.repeat(np.repeat(flow_px_dy, 2, axis=0), 2, axis=1)[:h, :w] * 2.0
            init_dx = np.empty((nby, nbx))
            init_dy = np.empty((nby, nbx))
            for by in range(nby):
                for bx in range(nbx):
                    ys = slice(by * BLOCK, min((by + 1) * BLOCK, h))
                    xs = slice(bx * BLOCK, min((bx + 1) * BLOCK, w))
                    # median: one bad coarse vector must not shift the init
                    init_dx[by, bx] = np.median(up_dx[ys, xs])
                    init_dy[by, bx] = np.median(up_dy[ys, xs])
        bdx, bdy = _block_search(p, n, init_dx, init_dy, search_radius)
        flow_px_dx = _blocks_to_pixels(bdx, h, w)
        flow_px_dy = _blocks_to_pixels(bdy, h, w)

    return FlowField(vectors=np.stack([flow_px_dx, flow_px_dy], axis=-1))


def _bilinear_sample(plane: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bottom = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def warp(img: LabImage, flow: FlowField) -> LabImage:
    """Backward-warp a Lab image: out(p) = img(p + flow(p)), bilinear.

    Sample coordinates outside the image clamp to the border. A zero flow
    reproduces the input bit-exactly.
    """
    if (img.height, img.width) != (flow.height, flow.width):
        raise ValueError("image and flow dimensions differ")
    yy, xx = np.mgrid[0 : img.height, 0 : img.width].astype(np.float64)
    ys = yy + flow.dy
    xs = xx + flow.dx
    return LabImage(
        L=np.clip(_bilinear_sample(img.L, ys, xs), 0.0, 100.0),
        a=np.clip(_bilinear_sample(img.a, ys, xs), -128.0, 127.0),
        b=np.clip(_bilinear_sample(img.b, ys, xs), -128.0, 127.0),
    )


def warp_plane(plane: np.ndarray, flow: FlowField) -> np.ndarray:
    """Backward-warp a single 2-D plane with the same sampling as ``warp``."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.shape != (flow.height, flow.width):
        raise ValueError("plane and flow dimensions differ")
    yy, xx = np.mgrid[0 : plane.shape[0], 0 : plane.shape[1]].astype(np.float64)
    return _bilinear_sample(plane, yy + flow.dy, xx + flow.dx)


def occlusion_mask(forward: FlowField, backward: FlowField, tol: float = 0.5) -> OcclusionMask:
    """Forward-backward consistency check.

    A pixel is occluded iff |forward(p) + backward(p + forward(p))| > tol,
    with the backward field sampled bilinearly.
    """
    if (forward.height, forward.width) != (backward.height, backward.width):
        raise ValueError("flow field dimensions differ")
    yy, xx = np.mgrid[0 : forward.height, 0 : forward.width].astype(np.float64)
    ys = yy + forward.dy
    xs = xx + forward.dx
    back_dx = _bilinear_sample(backward.dx, ys, xs)
    back_dy = _bilinear_sample(backward.dy, ys, xs)
    residual = np.hypot(forward.dx + back_dx, forward.dy + back_dy)
    return OcclusionMask(occluded=residual > tol)
