"""Dependency-free PGM/PPM writers for diffable image artifacts."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["write_ppm", "write_pgm", "side_by_side"]


def _to_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(img, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, rgb01: np.ndarray) -> None:
    """Binary P6 image from an (H, W, 3) array of values in [0, 1]."""
    img = _to_bytes(rgb01)
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def write_pgm(path: str | Path, gray: np.ndarray, lo: float = -1.0, hi: float = 1.0) -> None:
    """Binary P5 image from a 2-D array, mapping [lo, hi] to [0, 255]."""
    arr = np.asarray(gray, dtype=np.float64)
    scaled = (arr - lo) / (hi - lo)
    img = _to_bytes(scaled[..., None])[..., 0]
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def side_by_side(left: np.ndarray, right: np.ndarray, gap: int = 1) -> np.ndarray:
    """Concatenate two (H, W, 3) images with a white separator column."""
    h = left.shape[0]
    sep = np.ones((h, gap, 3))
    return np.concatenate([left, sep, right], axis=1)
