"""8-bit PNG helpers for color images and masks."""

from pathlib import Path

import numpy as np
from PIL import Image

from .rasterizer import image_to_uint8


def save_png(path, img) -> None:
    """Write a float image in [0, 1]: H x W x 3 as RGB, H x W as grayscale."""
    a = image_to_uint8(np.asarray(img, dtype=np.float64))
    mode = "L" if a.ndim == 2 else "RGB"
    Image.fromarray(a, mode=mode).save(Path(path), format="PNG")


def load_png(path, gray: bool = False) -> np.ndarray:
    with Image.open(Path(path)) as im:
        im = im.convert("L" if gray else "RGB")
        return np.asarray(im, dtype=np.float64) / 255.0


def resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    a = image_to_uint8(img)
    out = Image.fromarray(a).resize((width, height), Image.BILINEAR)
    return np.asarray(out, dtype=np.float64) / 255.0
