"""Image carriers and 8-bit file I/O (PNG via Pillow, binary PPM).

Pixel values are float arrays in [0, 1]; segmentation ids follow the scheme
0 = background, 1 = ground plane, >= 2 = objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import GeometryError


@dataclass(frozen=True)
class MaskImage:
    """Per-pixel coverage in [0, 1]."""

    values: np.ndarray  # (H, W) float64

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise GeometryError(f"mask must be 2D, got shape {v.shape}")
        if v.size and (v.min() < -1e-9 or v.max() > 1.0 + 1e-9):
            raise GeometryError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def binary(self, threshold: float = 0.5) -> np.ndarray:
        return self.values >= threshold


@dataclass(frozen=True)
class FrameBuffer:
    """RGB float image plus per-pixel segmentation ids."""

    rgb: np.ndarray  # (H, W, 3) float64 in [0, 1]
    seg: np.ndarray  # (H, W) int32

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        seg = np.asarray(self.seg, dtype=np.int32)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise GeometryError(f"rgb must be (H, W, 3), got {rgb.shape}")
        if seg.shape != rgb.shape[:2]:
            raise GeometryError("seg size does not match rgb")
        if not np.isfinite(rgb).all():
            raise GeometryError("rgb contains non-finite values")
        if rgb.size and (rgb.min() < -1e-9 or rgb.max() > 1.0 + 1e-9):
            raise GeometryError("rgb values must lie in [0, 1]")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "seg", seg)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def object_mask(self) -> MaskImage:
        return MaskImage((self.seg >= 2).astype(np.float64))


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma of a (H, W, 3) float image, same value range."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def quantize_u8(a: np.ndarray) -> np.ndarray:
    return (np.clip(np.asarray(a), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_png(path) -> np.ndarray:
    """Load an 8-bit image as float in [0, 1]; RGB -> (H, W, 3), gray -> (H, W)."""
    img = Image.open(path)
    if img.mode in ("L", "I;16", "I"):
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def save_png(arr: np.ndarray, path) -> None:
    """Write a float [0, 1] array as 8-bit PNG (gray or RGB by shape)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = quantize_u8(arr)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def encode_png(arr: np.ndarray) -> bytes:
    import io

    data = quantize_u8(arr)
    mode = "L" if data.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(data, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def write_ppm(rgb: np.ndarray, path) -> None:
    """Binary P6 PPM, 8-bit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = quantize_u8(rgb)
    if data.ndim != 3:
        raise GeometryError("PPM output requires an RGB image")
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(maxsplit=4)
    if parts[0] != b"P6":
        raise GeometryError(f"not a binary PPM: {path}")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pixels = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3).astype(np.float64) / float(maxval)


def resize(arr: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of a float [0, 1] image."""
    data = quantize_u8(arr)
    mode = "L" if data.ndim == 2 else "RGB"
    out = Image.fromarray(data, mode=mode).resize((width, height),
                                                  Image.BILINEAR)
    return np.asarray(out, dtype=np.float64) / 255.0
