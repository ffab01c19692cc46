"""Evaluation metric suite and frame sampling.

Image quality: SSIM (grayscale, data range 255, 11x11 Gaussian window
sigma 1.5) and a normalized-MSE perceptual stand-in min(4*MSE, 1).
Alignment: binary mask IoU and mask-centroid reprojection error.
Physics: penetration / support-violation / interaction-success rates.
Video: dense optical-flow motion amplitude + smoothness (pyramidal
Lucas-Kanade) and a sigmoid-normalized Laplacian-variance sharpness score.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage

from .errors import GeometryError
from .images import MaskImage, resize, to_gray

FLOW_LEVELS = 3
FLOW_WINDOW = 15
SUPPORT_Z_LIMIT = 0.02
ISR_AREA_FRACTION = 0.001
LAPLACIAN_SCALE = 500.0


@dataclass
class MetricsReport:
    ssim: float | None = None
    lpips_fallback: float | None = None
    mask_iou: float | None = None
    reproj_error_px: float | None = None
    penetration_rate: float | None = None
    support_violation_rate: float | None = None
    interaction_success_rate: float | None = None
    motion_amplitude: float | None = None
    motion_smoothness: float | None = None
    aesthetic: float | None = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> tuple[str, str]:
        keys = [k for k in self.to_dict() if k != "flags"]
        vals = [self.to_dict()[k] for k in keys]
        return (",".join(keys),
                ",".join("" if v is None else f"{v:.6g}" for v in vals))


def _gray255(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = to_gray(img)
    if img.max(initial=0.0) <= 1.0 + 1e-9:
        img = img * 255.0
    return img


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 255.0,
         sigma: float = 1.5) -> float:
    """Structural similarity on grayscale conversions.

    Gaussian weighting (11x11, sigma 1.5, population statistics) with the
    standard constants; border pixels whose window leaves the image are
    cropped before averaging.
    """
    ga, gb = _gray255(a), _gray255(b)
    if ga.shape != gb.shape:
        raise GeometryError("ssim image size mismatch")
    truncate = 3.5
    radius = int(truncate * sigma + 0.5)
    filt = lambda x: ndimage.gaussian_filter(x, sigma, truncate=truncate)
    mu_a = filt(ga)
    mu_b = filt(gb)
    va = filt(ga * ga) - mu_a * mu_a
    vb = filt(gb * gb) - mu_b * mu_b
    cab = filt(ga * gb) - mu_a * mu_b
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    smap = num / den
    if min(smap.shape) > 2 * radius:
        smap = smap[radius:-radius, radius:-radius]
    return float(smap.mean())


def lpips_fallback(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized-MSE perceptual distance: min(4 * MSE, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError("lpips_fallback image size mismatch")
    mse = float(((a - b) ** 2).mean())
    return min(4.0 * mse, 1.0)


def mask_iou(a: MaskImage, b: MaskImage, threshold: float = 0.5) -> float:
    if a.values.shape != b.values.shape:
        raise GeometryError("mask size mismatch")
    ba, bb = a.binary(threshold), b.binary(threshold)
    union = np.logical_or(ba, bb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(ba, bb).sum() / union)


def mask_centroid(mask: MaskImage, threshold: float = 0.5) -> np.ndarray:
    """(x, y) centroid of mask pixels, pixel-center convention."""
    ys, xs = np.nonzero(mask.binary(threshold))
    if len(xs) == 0:
        raise GeometryError("cannot take the centroid of an empty mask")
    return np.array([xs.mean() + 0.5, ys.mean() + 0.5])


def reprojection_error(a: MaskImage, b: MaskImage) -> float:
    """L2 pixel distance between the two mask centroids."""
    if a.values.shape != b.values.shape:
        raise GeometryError("mask size mismatch")
    return float(np.linalg.norm(mask_centroid(a) - mask_centroid(b)))


@dataclass
class FrameStats:
    """Per-frame physical observables used by the rate metrics."""
    aabbs: list                  # geom.Aabb per object
    z_mins: list                 # float per object
    mask_pixels: int = 0
    image_pixels: int = 0


def physics_rates(frames: list) -> tuple[float, float, float, list]:
    """(penetration, support-violation, interaction-success) rates.

    PR: mean fraction of object pairs with strictly overlapping AABBs.
    SVR: mean fraction of objects floating with z_min > 0.02 m.
    ISR: fraction of frames whose object mask covers > 0.1% of the image.
    Frames without object pairs contribute PR = 0 and are flagged.
    """
    if not frames:
        raise GeometryError("physics_rates needs at least one frame")
    flags: list[str] = []
    pr_vals, svr_vals, isr_vals = [], [], []
    saw_no_pairs = False
    for fr in frames:
        n = len(fr.aabbs)
        pairs = n * (n - 1) // 2
        if pairs == 0:
            saw_no_pairs = True
            pr_vals.append(0.0)
        else:
            overlapping = sum(
                1 for i in range(n) for j in range(i + 1, n)
                if fr.aabbs[i].overlaps(fr.aabbs[j]))
            pr_vals.append(overlapping / pairs)
        if n:
            svr_vals.append(sum(1 for z in fr.z_mins
                                if z > SUPPORT_Z_LIMIT) / n)
        if fr.image_pixels:
            isr_vals.append(
                1.0 if fr.mask_pixels > ISR_AREA_FRACTION * fr.image_pixels
                else 0.0)
    if saw_no_pairs:
        flags.append("penetration rate undefined for fewer than 2 objects; "
                     "reported as 0")
    pr = float(np.mean(pr_vals)) if pr_vals else 0.0
    svr = float(np.mean(svr_vals)) if svr_vals else 0.0
    isr = float(np.mean(isr_vals)) if isr_vals else 0.0
    return pr, svr, isr, flags


# ---------------------------------------------------------------------------
# dense optical flow (pyramidal Lucas-Kanade)

def _downsample(img: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(img, 1.0)[::2, ::2]


def _resize_to(arr: np.ndarray, shape: tuple) -> np.ndarray:
    ys = np.linspace(0, arr.shape[0] - 1, shape[0])
    xs = np.linspace(0, arr.shape[1] - 1, shape[1])
    grid = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(arr, grid, order=1, mode="nearest")


def dense_flow(a: np.ndarray, b: np.ndarray, levels: int = FLOW_LEVELS,
               window: int = FLOW_WINDOW, iterations: int = 2) -> np.ndarray:
    """Dense pyramidal Lucas-Kanade flow from frame ``a`` to frame ``b``.

    Returns (H, W, 2) displacements (u, v) in pixels: content at (x, y) in
    ``a`` appears at (x + u, y + v) in ``b``.
    """
    ga, gb = _gray255(a), _gray255(b)
    if ga.shape != gb.shape:
        raise GeometryError("flow image size mismatch")
    pyr_a, pyr_b = [ga], [gb]
    for _ in range(levels - 1):
        if min(pyr_a[-1].shape) < 2 * window:
            break
        pyr_a.append(_downsample(pyr_a[-1]))
        pyr_b.append(_downsample(pyr_b[-1]))
    u = np.zeros(pyr_a[-1].shape)
    v = np.zeros(pyr_a[-1].shape)
    for lvl in range(len(pyr_a) - 1, -1, -1):
        A, B = pyr_a[lvl], pyr_b[lvl]
        if u.shape != A.shape:
            u = _resize_to(u, A.shape) * 2.0
            v = _resize_to(v, A.shape) * 2.0
        iy, ix = np.gradient(A)
        sxx = ndimage.uniform_filter(ix * ix, window)
        sxy = ndimage.uniform_filter(ix * iy, window)
        syy = ndimage.uniform_filter(iy * iy, window)
        det = sxx * syy - sxy * sxy
        valid = det > 1e-6
        grid_y, grid_x = np.meshgrid(np.arange(A.shape[0]),
                                     np.arange(A.shape[1]), indexing="ij")
        for _ in range(iterations):
            warped = ndimage.map_coordinates(B, [grid_y + v, grid_x + u],
                                             order=1, mode="nearest")
            it = warped - A
            sxt = ndimage.uniform_filter(ix * it, window)
            syt = ndimage.uniform_filter(iy * it, window)
            du = np.where(valid, -(syy * sxt - sxy * syt) / np.where(valid, det, 1.0), 0.0)
            dv = np.where(valid, -(sxx * syt - sxy * sxt) / np.where(valid, det, 1.0), 0.0)
            u = u + du
            v = v + dv
    return np.stack([u, v], axis=-1)


def _flow_interior(shape: tuple, window: int = FLOW_WINDOW) -> tuple:
    """Crop slice excluding the border band where LK windows are invalid."""
    margin = window
    if shape[0] > 4 * margin and shape[1] > 4 * margin:
        return slice(margin, -margin), slice(margin, -margin)
    return slice(None), slice(None)


def motion_stats(frames: list) -> tuple[float, float]:
    """(amplitude, smoothness) over a frame sequence.

    Amplitude is the mean flow magnitude across consecutive pairs;
    smoothness is 1 / (1 + Var) of the per-pair mean magnitudes. Flow is
    aggregated over the window-valid interior.
    """
    if len(frames) < 2:
        raise GeometryError("motion stats need at least 2 frames")
    means = []
    for fa, fb in zip(frames[:-1], frames[1:]):
        flow = dense_flow(fa, fb)
        mag = np.linalg.norm(flow, axis=-1)
        sl = _flow_interior(mag.shape)
        means.append(float(mag[sl].mean()))
    amplitude = float(np.mean(means))
    smoothness = 1.0 / (1.0 + float(np.var(means)))
    return amplitude, smoothness


def aesthetic_fallback(frames: list) -> float:
    """Sigmoid-normalized mean Laplacian variance (sharpness proxy):
    2 / (1 + exp(-var/500)) - 1, Laplacian on 0..255 grayscale."""
    if not frames:
        raise GeometryError("aesthetic score needs at least one frame")
    variances = []
    for fr in frames:
        lap = ndimage.laplace(_gray255(fr))
        variances.append(float(lap.var()))
    mean_var = float(np.mean(variances))
    return 2.0 / (1.0 + math.exp(-mean_var / LAPLACIAN_SCALE)) - 1.0


def sample_eval_frames(frames: list, k: int = 10, max_edge: int = 880
                       ) -> list:
    """k evenly spaced frames (inclusive endpoints), each rescaled so the
    longest edge is at most ``max_edge`` (aspect preserved)."""
    if not frames:
        raise GeometryError("no frames to sample")
    if k < 1:
        raise GeometryError("k must be >= 1")
    n = len(frames)
    k = min(k, n)
    idx = np.round(np.linspace(0, n - 1, k)).astype(int)
    out = []
    for i in idx:
        img = np.asarray(frames[i], dtype=np.float64)
        h, w = img.shape[:2]
        longest = max(h, w)
        if longest > max_edge:
            scale = max_edge / longest
            img = resize(img, round(w * scale), round(h * scale))
        out.append(img)
    return out
