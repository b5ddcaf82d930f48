"""Shared synthetic image and video builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from chromaflow.color import LabImage, RgbImage, lab_to_rgb
from chromaflow.video import VideoSequence


def textured_luminance(h: int, w: int, seed: int = 0, roughness: float = 12.0) -> np.ndarray:
    """Aperiodic multi-octave luminance texture.

    Smoothed noise at several scales plus a gentle gradient: every
    neighborhood has distinctive local statistics (good for block matching
    and feature correspondence), with none of the global periodicity that
    makes distant regions genuinely ambiguous.
    """
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    plane = 50.0 + 14.0 * (xx / w - 0.5) + 10.0 * (yy / h - 0.5)
    for sigma, amplitude in ((1.5, 1.0), (3.0, 1.2), (8.0, 1.2), (20.0, 1.4)):
        octave = gaussian_filter(rng.normal(0.0, 1.0, size=(h, w)), sigma, mode="reflect")
        octave /= max(octave.std(), 1e-9)
        plane += roughness * amplitude * octave / 2.4
    return np.clip(plane, 0.0, 100.0)


def smooth_chroma(h: int, w: int, phase: float = 0.0, amplitude: float = 25.0) -> tuple[np.ndarray, np.ndarray]:
    """Smooth, colorful a/b planes tied to image position."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    a = amplitude * np.sin(2 * np.pi * xx / w + phase)
    b = amplitude * np.cos(2 * np.pi * yy / h + phase * 0.5)
    return a, b


def colorful_lab(h: int, w: int, seed: int = 0, phase: float = 0.0) -> LabImage:
    """Colorful test image whose chroma follows the luminance structure.

    Color is tied mostly to what things look like (blurred luminance) plus
    a positional wash, mirroring natural video where appearance predicts
    color. This is the content regime exemplar colorization assumes.
    """
    from scipy.ndimage import gaussian_filter

    L = textured_luminance(h, w, seed=seed)
    coarse = gaussian_filter(L, 6.0, mode="reflect") - 50.0
    pa, pb = smooth_chroma(h, w, phase=phase, amplitude=5.0)
    a = np.clip(pa + 1.2 * coarse, -75.0, 75.0)
    b = np.clip(pb - 1.0 * coarse, -75.0, 75.0)
    return LabImage(L=L, a=a, b=b)


def colorful_rgb(h: int, w: int, seed: int = 0, phase: float = 0.0) -> RgbImage:
    return lab_to_rgb(colorful_lab(h, w, seed=seed, phase=phase))


def _scene_canvas(size: int, pad: int, seed: int, palette: str) -> LabImage:
    from scipy.ndimage import gaussian_filter

    side = size + 2 * pad
    L = textured_luminance(side, side, seed=seed)
    coarse = gaussian_filter(L, 6.0, mode="reflect") - 50.0
    if palette == "warm":
        a = np.clip(24.0 + 1.0 * coarse, -75.0, 75.0)
        b = np.clip(20.0 - 0.8 * coarse, -75.0, 75.0)
    else:
        a = np.clip(-24.0 - 0.9 * coarse, -75.0, 75.0)
        b = np.clip(-18.0 + 1.0 * coarse, -75.0, 75.0)
    return LabImage(L=L, a=a, b=b)


def _crop(canvas: LabImage, y: int, x: int, size: int) -> LabImage:
    return LabImage(
        L=canvas.L[y : y + size, x : x + size],
        a=canvas.a[y : y + size, x : x + size],
        b=canvas.b[y : y + size, x : x + size],
    )


def aba_sequence(
    n_a1: int,
    n_b: int,
    n_a2: int,
    size: int = 64,
    step: int = 1,
) -> tuple[VideoSequence, VideoSequence]:
    """A-B-A scene sequence: (grayscale input video, color ground truth).

    Scene A plays for ``n_a1`` frames (translating ``step`` px/frame), cuts
    to a differently textured, differently colored scene B for ``n_b``
    frames, then returns to scene A at its starting position. Both returned
    sequences hold LabImage frames; the input's chroma is zero.
    """
    total_steps = max(n_a1, n_a2, n_b)
    pad = total_steps * step + 8
    scene_a = _scene_canvas(size, pad, seed=10, palette="warm")
    scene_b = _scene_canvas(size, pad, seed=77, palette="cool")

    truth: list[LabImage] = []
    for i in range(n_a1):
        truth.append(_crop(scene_a, pad + i * step, pad + i * step, size))
    for i in range(n_b):
        truth.append(_crop(scene_b, pad + 2 * i * step, pad - i * step, size))
    for i in range(n_a2):
        truth.append(_crop(scene_a, pad + i * step, pad + i * step, size))

    gray = [LabImage(L=f.L, a=np.zeros_like(f.a), b=np.zeros_like(f.b)) for f in truth]
    return VideoSequence(frames=tuple(gray)), VideoSequence(frames=tuple(truth))


def static_sequence(n: int, size: int = 64, seed: int = 0) -> tuple[VideoSequence, VideoSequence]:
    """n identical frames: (grayscale input video, color ground truth)."""
    frame = colorful_lab(size, size, seed=seed)
    gray = LabImage(L=frame.L, a=np.zeros_like(frame.a), b=np.zeros_like(frame.b))
    return (
        VideoSequence(frames=tuple([gray] * n)),
        VideoSequence(frames=tuple([frame] * n)),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
