"""Grayscale PNG helpers shared by the data pipeline."""
from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np


def read_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale raster; missing/corrupt files raise."""
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FileNotFoundError(f"cannot read image: {path}")
    return img


def write_image(path: str | Path, image: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    if not cv2.imwrite(str(path), img):
        raise IOError(f"cannot write image: {path}")


def png_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the PNG IHDR without decoding pixel data."""
    with open(path, "rb") as f:
        head = f.read(26)
    if len(head) < 26 or head[:8] != b"\x89PNG\r\n\x1a\n" or head[12:16] != b"IHDR":
        raise ValueError(f"not a PNG file: {path}")
    w, h = struct.unpack(">II", head[16:24])
    return int(w), int(h)
