"""CIELAB color space conversion and the image containers used by the pipeline.

All frames move through the pipeline as either :class:`RgbImage` (8-bit sRGB,
the on-disk encoding) or :class:`LabImage` (float CIELAB planes, the working
encoding).  Conversions follow the CIE standard chain
sRGB -> linear RGB -> XYZ (D65) -> Lab with the white point taken from the
row sums of the conversion matrix so that pure white maps exactly to
L=100, a=b=0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# sRGB primaries -> XYZ under D65 (Lindbloom). The inverse is derived
# numerically from the same matrix so the roundtrip is self-consistent.
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

# White point implied by the matrix (row sums): guarantees r=g=b maps to a=b=0.
_WHITE = _RGB_TO_XYZ.sum(axis=1)

# CIE Lab constants.
_EPSILON = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

_CHANNEL_INDEX = {"r": 0, "g": 1, "b": 2}


def _lock(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RgbImage:
    """8-bit sRGB image, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have positive dimensions")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        object.__setattr__(self, "pixels", _lock(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class LabImage:
    """CIELAB image as three float planes of equal shape (height, width).

    L is constrained to [0, 100], a and b to [-128, 127]; constructing an
    image outside those ranges raises.
    """

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        L = np.asarray(self.L, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 1:
            raise ValueError(f"expected 2-D planes, got shape {L.shape}")
        if a.shape != L.shape or b.shape != L.shape:
            raise ValueError("L, a, b planes must share one shape")
        tol = 1e-6
        if L.min() < -tol or L.max() > 100.0 + tol:
            raise ValueError("L values out of [0, 100]")
        if min(a.min(), b.min()) < -128.0 - tol or max(a.max(), b.max()) > 127.0 + tol:
            raise ValueError("a/b values out of [-128, 127]")
        object.__setattr__(self, "L", _lock(L))
        object.__setattr__(self, "a", _lock(a))
        object.__setattr__(self, "b", _lock(b))

    @property
    def width(self) -> int:
        return self.L.shape[1]

    @property
    def height(self) -> int:
        return self.L.shape[0]

    def chroma(self) -> np.ndarray:
        """The a/b planes stacked as (h, w, 2)."""
        return np.stack([self.a, self.b], axis=-1)


@dataclass(frozen=True)
class ChannelHistogram:
    """Normalized per-bin probability mass of one color channel."""

    bins: int
    mass: np.ndarray

    def __post_init__(self) -> None:
        mass = np.asarray(self.mass, dtype=np.float64)
        if self.bins < 2:
            raise ValueError("need at least 2 bins")
        if mass.shape != (self.bins,):
            raise ValueError(f"mass must have shape ({self.bins},)")
        if mass.min() < 0.0:
            raise ValueError("histogram mass must be nonnegative")
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError("histogram mass must sum to 1")
        object.__setattr__(self, "mass", _lock(mass))


def _srgb_to_linear(v: np.ndarray) -> np.ndarray:
    return np.where(v > 0.04045, ((v + 0.055) / 1.055) ** 2.4, v / 12.92)


def _linear_to_srgb(v: np.ndarray) -> np.ndarray:
    v = np.clip(v, 0.0, 1.0)
    return np.where(v > 0.0031308, 1.055 * v ** (1.0 / 2.4) - 0.055, 12.92 * v)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPSILON, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def rgb_to_lab(img: RgbImage) -> LabImage:
    """Convert an 8-bit sRGB image to CIELAB."""
    rgb = img.pixels.astype(np.float64) / 255.0
    lin = _srgb_to_linear(rgb)
    xyz = lin @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return LabImage(
        L=np.clip(L, 0.0, 100.0),
        a=np.clip(a, -128.0, 127.0),
        b=np.clip(b, -128.0, 127.0),
    )


def lab_to_rgb(img: LabImage) -> RgbImage:
    """Convert CIELAB back to 8-bit sRGB, clamping out-of-gamut values."""
    fy = (img.L + 16.0) / 116.0
    fx = fy + img.a / 500.0
    fz = fy - img.b / 200.0

    def f_inv(f: np.ndarray) -> np.ndarray:
        f3 = f ** 3
        return np.where(f3 > _EPSILON, f3, (116.0 * f - 16.0) / _KAPPA)

    xyz = np.stack([f_inv(fx), f_inv(fy), f_inv(fz)], axis=-1) * _WHITE
    lin = xyz @ _XYZ_TO_RGB.T
    srgb = _linear_to_srgb(lin)
    pixels = np.clip(np.round(srgb * 255.0), 0, 255).astype(np.uint8)
    return RgbImage(pixels=pixels)


def gray_to_lab(L: np.ndarray) -> LabImage:
    """Wrap a luminance plane as a Lab image with zero chroma."""
    L = np.asarray(L, dtype=np.float64)
    return LabImage(L=L, a=np.zeros_like(L), b=np.zeros_like(L))


def replace_chroma(gray: LabImage, chroma_source: LabImage) -> LabImage:
    """Keep ``gray``'s luminance, take a/b from ``chroma_source``.

    Raises ValueError on dimension mismatch. The output L plane is the
    input L plane exactly (no recomputation).
    """
    if (gray.height, gray.width) != (chroma_source.height, chroma_source.width):
        raise ValueError("luminance and chroma sources differ in size")
    return LabImage(L=gray.L, a=chroma_source.a, b=chroma_source.b)


def channel_histogram(img: RgbImage, channel: str, bins: int = 256) -> ChannelHistogram:
    """Histogram of one RGB channel with value-range binning.

    An 8-bit value v lands in bin floor(v * bins / 256); masses are
    normalized to sum to 1.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if channel not in _CHANNEL_INDEX:
        raise ValueError(f"unknown channel {channel!r}, expected one of r, g, b")
    values = img.pixels[..., _CHANNEL_INDEX[channel]].ravel()
    idx = (values.astype(np.int64) * bins) // 256
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return ChannelHistogram(bins=bins, mass=counts / counts.sum())
