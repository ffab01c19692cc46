"""Shadow-aware compositing over the background image and frame export."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import GeometryError
from .images import FrameBuffer, save_png, write_ppm

SHADOW_STRENGTH = 0.3
SHADOW_BRIGHTNESS_LIMIT = 0.3
FRAME_NAME = "frame_%05d.png"


def composite_frame(render: FrameBuffer, background: np.ndarray,
                    shadow_strength: float = SHADOW_STRENGTH) -> FrameBuffer:
    """Blend the render over the background by object alpha and darken
    detected shadow pixels.

    Object pixels (seg >= 2) come from the render; ground-plane pixels whose
    rendered brightness falls below 0.3 are treated as shadow and multiply
    the background by (1 - shadow_strength); everything else shows the
    background.
    """
    background = np.asarray(background, dtype=np.float64)
    if background.ndim == 2:
        background = np.repeat(background[:, :, None], 3, axis=2)
    if background.shape != render.rgb.shape:
        raise GeometryError(
            f"background {background.shape[:2]} does not match the render "
            f"{render.rgb.shape[:2]}")
    alpha = (render.seg >= 2).astype(np.float64)[:, :, None]
    out = background * (1.0 - alpha) + render.rgb * alpha
    brightness = render.rgb.mean(axis=2)
    shadow = (render.seg == 1) & (brightness < SHADOW_BRIGHTNESS_LIMIT)
    out[shadow] = background[shadow] * (1.0 - shadow_strength)
    return FrameBuffer(np.clip(out, 0.0, 1.0), render.seg)


def export_frame(frame: FrameBuffer, path, fmt: str = "png",
                 seg_sidecar=None) -> None:
    """Write an 8-bit frame (png or binary ppm), optionally with the seg map
    as a grayscale sidecar image."""
    path = Path(path)
    if fmt == "png":
        save_png(frame.rgb, path)
    elif fmt == "ppm":
        write_ppm(frame.rgb, path)
    else:
        raise GeometryError(f"unsupported format {fmt!r} (png or ppm)")
    if seg_sidecar is not None:
        seg = np.clip(frame.seg, 0, 255).astype(np.float64) / 255.0
        save_png(seg, seg_sidecar)


def decimate_indices(total: int, render_fps: int, output_fps: int) -> list:
    """Frame indices to keep when reducing render FPS to output FPS."""
    if output_fps <= 0 or render_fps <= 0:
        raise GeometryError("FPS values must be positive")
    stride = max(1, round(render_fps / output_fps))
    return list(range(0, total, stride))
