"""Pixel containers and PNG I/O.

Conventions used everywhere in the toolkit:

- RGB images  : numpy uint8 arrays of shape (H, W, 3)
- gray images : numpy float64 arrays of shape (H, W), samples in [0, 1]
- masks/edges : numpy bool arrays of shape (H, W)

Masks are stored on disk as single-channel PNG where value >= 128 means set.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError, ParameterError


def as_rgb(arr: np.ndarray) -> np.ndarray:
    """Validate and return an RGB image array."""
    a = np.asarray(arr)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ParameterError(f"expected (H, W, 3) uint8 image, got {a.shape} {a.dtype}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ParameterError("image dimensions must be >= 1")
    return a


def as_gray(arr: np.ndarray) -> np.ndarray:
    """Validate and return a gray image array (float in [0, 1])."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ParameterError(f"expected (H, W) gray image, got shape {a.shape}")
    if a.size and (a.min() < -1e-9 or a.max() > 1 + 1e-9):
        raise ParameterError("gray samples must lie in [0, 1]")
    return a


def as_mask(arr: np.ndarray) -> np.ndarray:
    """Validate and return a boolean mask array."""
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ParameterError(f"expected (H, W) mask, got shape {a.shape}")
    return a.astype(bool, copy=False)


def check_same_dims(a: np.ndarray, b: np.ndarray, what: str = "rasters") -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatchError(f"{what} differ in size: {a.shape[:2]} vs {b.shape[:2]}")


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_rgb(path, img: np.ndarray) -> None:
    Image.fromarray(as_rgb(img), mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8) >= 128


def save_mask(path, mask: np.ndarray) -> None:
    arr = np.where(as_mask(mask), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_labels(path) -> np.ndarray:
    """Read a parsing label map stored as an 8-bit single-channel PNG."""
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            im = im.convert("L")
        return np.asarray(im, dtype=np.uint8)


def save_labels(path, labels: np.ndarray) -> None:
    Image.fromarray(np.asarray(labels, dtype=np.uint8), mode="L").save(path, format="PNG")


def gray_to_rgb(gray: np.ndarray) -> np.ndarray:
    """Render a [0,1] gray image as an RGB uint8 image."""
    g = np.clip(np.rint(as_gray(gray) * 255.0), 0, 255).astype(np.uint8)
    return np.stack([g, g, g], axis=-1)


def mask_to_rgb(mask: np.ndarray) -> np.ndarray:
    """Render a mask/edge map white-on-black."""
    g = np.where(as_mask(mask), 255, 0).astype(np.uint8)
    return np.stack([g, g, g], axis=-1)
