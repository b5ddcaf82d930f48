"""Ordered frame sequences with uniform dimensions."""

from __future__ import annotations

from dataclasses import dataclass

from chromaflow.color import LabImage, RgbImage, lab_to_rgb, rgb_to_lab


@dataclass(frozen=True)
class VideoSequence:
    """Frames of one video, all RgbImage or all LabImage, equal sizes."""

    frames: tuple
    fps: float | None = None

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        if len(frames) < 1:
            raise ValueError("video needs at least one frame")
        first = frames[0]
        if not isinstance(first, (RgbImage, LabImage)):
            raise TypeError("frames must be RgbImage or LabImage")
        for f in frames:
            if type(f) is not type(first):
                raise TypeError("all frames must share one image type")
            if (f.height, f.width) != (first.height, first.width):
                raise ValueError("all frames must share one size")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def lab_frames(self) -> list[LabImage]:
        if isinstance(self.frames[0], LabImage):
            return list(self.frames)
        return [rgb_to_lab(f) for f in self.frames]

    def rgb_frames(self) -> list[RgbImage]:
        if isinstance(self.frames[0], RgbImage):
            return list(self.frames)
        return [lab_to_rgb(f) for f in self.frames]
