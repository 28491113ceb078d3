"""Image file I/O: 8-bit PNG and binary PPM (P6), unit-interval float arrays."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path) -> np.ndarray:
    """Read an image file into an (H, W, 3) float64 array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(arr: np.ndarray, path) -> None:
    """Write a unit-interval float array as 8-bit PNG or PPM (by suffix)."""
    path = Path(path)
    a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    u8 = np.floor(a * 255.0 + 0.5).astype(np.uint8)
    im = Image.fromarray(u8, mode="RGB")
    suffix = path.suffix.lower()
    if suffix == ".png":
        im.save(path, format="PNG")
    elif suffix in (".ppm", ".pnm"):
        im.save(path, format="PPM")
    else:
        raise ValueError(f"unsupported texture format {suffix!r} (use .png or .ppm)")
