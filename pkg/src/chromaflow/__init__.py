"""Video colorization by exemplar propagation, with temporal-consistency metrics."""

from chromaflow.color import (
    ChannelHistogram,
    LabImage,
    RgbImage,
    channel_histogram,
    gray_to_lab,
    lab_to_rgb,
    replace_chroma,
    rgb_to_lab,
)

__all__ = [
    "ChannelHistogram",
    "LabImage",
    "RgbImage",
    "channel_histogram",
    "gray_to_lab",
    "lab_to_rgb",
    "replace_chroma",
    "rgb_to_lab",
]

__version__ = "0.1.0"
