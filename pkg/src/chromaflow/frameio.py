"""PNG frame I/O, frame-directory conventions, and worker-count control.

Frame files carry a zero-padded 6-digit numeric suffix before the ``.png``
extension (``frame_000001.png``). Directories are read in numeric order and
non-conforming PNG names are an error rather than silently skipped, so a
benchmark run can never quietly drop frames.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np
from PIL import Image

from chromaflow.color import RgbImage
from chromaflow.video import VideoSequence

THREADS_ENV = "CHROMAFLOW_THREADS"

_FRAME_RE = re.compile(r"^(?P<prefix>.*?)(?P<number>\d{6})\.png$")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def worker_count() -> int:
    """Worker cap from CHROMAFLOW_THREADS (falls back to the CPU count).

    The cap only limits parallelism; results are identical for any value.
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return max(os.cpu_count() or 1, 1)
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1")
    return n


def read_png(path: str | Path) -> RgbImage:
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return RgbImage(pixels=np.asarray(rgb, dtype=np.uint8))


def write_png(img: RgbImage, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def list_frame_files(directory: str | Path) -> list[Path]:
    """PNG frame files of a directory in numeric order.

    Raises if the directory is empty of PNGs or contains a PNG whose name
    lacks the 6-digit suffix. Non-PNG files (reports, manifests) are
    ignored.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    entries = []
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() != ".png":
            continue
        m = _FRAME_RE.match(p.name)
        if not m:
            raise ValueError(
                f"frame file {p.name!r} does not end in a zero-padded 6-digit number"
            )
        entries.append((int(m.group("number")), p.name, p))
    if not entries:
        raise ValueError(f"no PNG frames in {directory}")
    entries.sort(key=lambda e: (e[0], e[1]))
    return [p for _, _, p in entries]


def read_frame_dir(directory: str | Path) -> tuple[VideoSequence, list[str]]:
    """Load a frame directory as an RGB video plus the frame file names."""
    files = list_frame_files(directory)
    frames = [read_png(p) for p in files]
    heights = {f.height for f in frames}
    widths = {f.width for f in frames}
    if len(heights) > 1 or len(widths) > 1:
        raise ValueError(f"frames in {directory} have mixed dimensions")
    return VideoSequence(frames=tuple(frames)), [p.name for p in files]


def write_frame_dir(
    frames: list[RgbImage],
    names: list[str],
    directory: str | Path,
    overwrite: bool = False,
) -> None:
    """Write frames under their source names, mirroring the input layout."""
    if len(frames) != len(names):
        raise ValueError("frame and name counts differ")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in names:
        target = directory / name
        if target.exists() and not overwrite:
            raise FileExistsError(f"{target} exists (use overwrite to replace)")
    for frame, name in zip(frames, names):
        write_png(frame, directory / name)


def write_text_file(path: str | Path, text: str, overwrite: bool = False) -> None:
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists (use overwrite to replace)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def list_corpus_images(directory: str | Path) -> list[Path]:
    """Image files of a corpus directory in sorted-path order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
