"""Grayscale frame I/O and resampling helpers.

Frames are ``(height, width)`` float64 arrays with intensities in [0, 1].
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

FRAME_SUFFIXES = (".png", ".pgm")
# ITU-R BT.601 luma
LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., :3] @ LUMA
    arr = arr.astype(np.float64)
    if np.asarray(img).dtype == np.uint8:
        arr = arr / 255.0
    return arr


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB", "RGBA"):
            im = im.convert("RGB")
        return to_gray(np.asarray(im))


def to_uint8(frame) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)


def write_frame(path, frame) -> None:
    Image.fromarray(to_uint8(frame), mode="L").save(path)


def write_rgb(path, rgb) -> None:
    Image.fromarray(to_uint8(rgb), mode="RGB").save(path)


def _frame_index(path: Path) -> int:
    m = re.search(r"(\d+)$", path.stem)
    if m is None:
        raise ValueError(f"frame file {path.name} carries no numeric index")
    return int(m.group(1))


def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files = [p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES]
    return sorted(files, key=_frame_index)


def read_frames(directory) -> list[np.ndarray]:
    return [read_frame(p) for p in list_frames(directory)]


def write_frames(directory, frames) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = directory / f"{i:06d}.png"
        write_frame(p, f)
        paths.append(p)
    return paths


def downsample(frame, size=(32, 32)) -> np.ndarray:
    """Area-average resize to ``size = (height, width)``; bilinear when sizes do not divide."""
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    oh, ow = size
    if h % oh == 0 and w % ow == 0:
        return frame.reshape(oh, h // oh, ow, w // ow).mean(axis=(1, 3))
    im = Image.fromarray(frame.astype(np.float32), mode="F")
    return np.asarray(im.resize((ow, oh), Image.BILINEAR), dtype=np.float64)
