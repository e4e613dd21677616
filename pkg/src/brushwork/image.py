"""Image frontend: canvas/artwork normalization to 224x224x3 and augmentation."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, PreconditionError, UnsupportedFormatError

IMAGE_SIZE = 224
CHANNELS = 3
NORM_MEAN = 0.5
NORM_STD = 0.5
MIN_INPUT_SIZE = 8
CROP_AREA_RANGE = (0.8, 1.0)


@dataclass
class ImageTensor:
    """Standardized 224x224x3 float32 image, values in [-1, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != (IMAGE_SIZE, IMAGE_SIZE, CHANNELS):
            raise PreconditionError(
                f"ImageTensor must be {IMAGE_SIZE}x{IMAGE_SIZE}x{CHANNELS}, "
                f"got {self.values.shape}"
            )


def resize_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) float array, half-pixel-center convention."""
    h, w = values.shape[:2]
    if (h, w) == (out_h, out_w):
        return values.copy()
    src_y = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    src_x = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0).astype(values.dtype)[:, None, None]
    wx = (src_x - x0).astype(values.dtype)[None, :, None]
    top = values[y0][:, x0] * (1 - wx) + values[y0][:, x1] * wx
    bottom = values[y1][:, x0] * (1 - wx) + values[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def ingest_image(raw: bytes) -> ImageTensor:
    """Decode PNG/BMP bytes into a standardized 224x224x3 tensor.

    Pipeline: decode -> replicate grayscale to RGB -> bilinear resize to
    224x224 -> scale to [0,1] -> standardize (x - 0.5) / 0.5.
    """
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc
    except OSError as exc:
        raise DecodeError(f"truncated or malformed image: {exc}") from exc
    if img.format not in ("PNG", "BMP"):
        raise UnsupportedFormatError(
            f"image format {img.format!r} is out of scope (PNG and BMP only); "
            "convert externally first"
        )
    if img.width < MIN_INPUT_SIZE or img.height < MIN_INPUT_SIZE:
        raise PreconditionError(
            f"image must be at least {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}, "
            f"got {img.width}x{img.height}"
        )
    rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    resized = resize_bilinear(rgb, IMAGE_SIZE, IMAGE_SIZE)
    return ImageTensor((resized - NORM_MEAN) / NORM_STD)


def flip_horizontal(img: ImageTensor) -> ImageTensor:
    return ImageTensor(img.values[:, ::-1, :].copy())


def crop_resize(img: ImageTensor, top: int, left: int, size: int) -> ImageTensor:
    """Crop a size x size window and bilinearly resize back to 224x224."""
    if size < 1 or top < 0 or left < 0 or top + size > IMAGE_SIZE or left + size > IMAGE_SIZE:
        raise PreconditionError(f"crop window ({top},{left},{size}) out of bounds")
    window = img.values[top : top + size, left : left + size, :]
    return ImageTensor(resize_bilinear(window, IMAGE_SIZE, IMAGE_SIZE))


def augment_image(img: ImageTensor, rng: np.random.Generator) -> ImageTensor:
    """Training augmentation: flip with p=0.5, then a random aspect-preserving
    crop retaining an area fraction drawn uniformly from [0.8, 1.0].

    Draw order is fixed (flip, area, top, left) so a given rng state always
    yields the same output.
    """
    flip = bool(rng.random() < 0.5)
    area = float(rng.uniform(*CROP_AREA_RANGE))
    size = int(round(IMAGE_SIZE * np.sqrt(area)))
    size = min(max(size, 1), IMAGE_SIZE)
    top = int(rng.integers(0, IMAGE_SIZE - size + 1))
    left = int(rng.integers(0, IMAGE_SIZE - size + 1))

    out = flip_horizontal(img) if flip else img
    if size == IMAGE_SIZE:
        return ImageTensor(out.values.copy())
    return crop_resize(out, top, left, size)
