"""Derivative-free camera pose recovery against a reference image.

The objective mixes region-aware appearance terms (masked MSE or L1 over
object / background regions) with a Dice silhouette loss. Optimization is
coarse-to-fine: uniform random sampling of positions inside a search box,
then Powell conjugate-direction refinement with golden-section line
searches clamped to the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraPose, SearchBounds, rasterize
from .errors import GeometryError
from .images import FrameBuffer, MaskImage


@dataclass(frozen=True)
class CamOptConfig:
    w_obj: float = 1.0
    w_bg: float = 0.2
    w_mask: float = 1.0
    n_random: int = 60
    powell_max_iter: int = 80
    epsilon: float = 1e-8
    appearance_norm: str = "mse"  # "mse" | "l1"

    def __post_init__(self):
        if min(self.w_obj, self.w_bg, self.w_mask) < 0:
            raise GeometryError("loss weights must be >= 0")
        if self.n_random < 1:
            raise GeometryError("n_random must be >= 1")
        if self.appearance_norm not in ("mse", "l1"):
            raise GeometryError(f"unknown appearance norm "
                                f"{self.appearance_norm!r}")


@dataclass
class LossEval:
    stage: str      # "init" | "global" | "powell"
    index: int
    position: tuple
    loss: float


def region_losses(rendered: FrameBuffer, target: FrameBuffer,
                  target_mask: MaskImage, rendered_mask: MaskImage,
                  cfg: CamOptConfig = CamOptConfig()
                  ) -> tuple[float, float, float]:
    """(L_obj, L_bg, L_mask) for one rendered/target pair.

    Appearance terms are normalized by masked pixel count times channel
    count; the mask term is a Dice loss. All three land in [0, 1] for
    images valued in [0, 1].
    """
    if rendered.rgb.shape != target.rgb.shape:
        raise GeometryError("rendered/target size mismatch")
    if target_mask.values.shape != rendered.rgb.shape[:2]:
        raise GeometryError("target mask size mismatch")
    eps = cfg.epsilon
    channels = rendered.rgb.shape[2]
    diff = rendered.rgb - target.rgb
    per_px = (diff * diff).sum(axis=2) if cfg.appearance_norm == "mse" \
        else np.abs(diff).sum(axis=2)
    m = target_mask.values
    m_sum = m.sum()
    inv_sum = (1.0 - m).sum()
    l_obj = float((per_px * m).sum() / (m_sum * channels + eps))
    l_bg = float((per_px * (1.0 - m)).sum() / (inv_sum * channels + eps))
    r = rendered_mask.values
    l_mask = float(1.0 - (2.0 * (r * m).sum() + eps)
                   / (r.sum() + m_sum + eps))
    return l_obj, l_bg, l_mask


def camera_loss(pose: CameraPose, target: FrameBuffer,
                target_mask: MaskImage, meshes,
                cfg: CamOptConfig = CamOptConfig(), **raster_kwargs) -> float:
    """Weighted composite loss of one candidate pose."""
    res = rasterize(meshes, pose, (target.width, target.height),
                    **raster_kwargs)
    l_obj, l_bg, l_mask = region_losses(res.frame, target, target_mask,
                                        res.mask, cfg)
    return cfg.w_obj * l_obj + cfg.w_bg * l_bg + cfg.w_mask * l_mask


def global_search(bounds: SearchBounds, objective, n: int, seed: int,
                  base: CameraPose, trace: list | None = None) -> CameraPose:
    """Uniform random position sampling inside the bounds; returns the argmin
    pose (look-at and FOV stay fixed at the base pose's values)."""
    if n < 1:
        raise GeometryError("need at least one sample")
    rng = np.random.Generator(np.random.Philox(seed))
    samples = bounds.lo + rng.random((n, 3)) * (bounds.hi - bounds.lo)
    best_loss = math.inf
    best_pos = samples[0]
    for i, pos in enumerate(samples):
        pose = base.with_position(pos)
        loss = float(objective(pose))
        if trace is not None:
            trace.append(LossEval("global", i, tuple(pos), loss))
        if loss < best_loss:
            best_loss, best_pos = loss, pos
    return base.with_position(best_pos)


def _golden_section(g, lo: float, hi: float, xtol: float = 1e-6,
                    max_eval: int = 34) -> tuple[float, float]:
    """Golden-section minimize g on [lo, hi]; returns (t*, g(t*))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = g(c), g(d)
    evals = 2
    while (b - a) > xtol and evals < max_eval:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = g(d)
        evals += 1
    return (c, fc) if fc <= fd else (d, fd)


def _line_search(g, t_lo: float, t_hi: float, f_zero: float,
                 grid: int = 12, local_window: float = 0.05
                 ) -> tuple[float, float]:
    """Robust 1D minimize over [t_lo, t_hi].

    The loss along a camera ray is rarely unimodal, so a coarse uniform grid
    over the whole segment picks a bracket; a finer probe window around
    t = 0 resolves narrow valleys near the current point; golden section
    then polishes the best bracket. Never returns worse than t = 0.
    """
    span = t_hi - t_lo
    ts = list(np.linspace(t_lo, t_hi, grid))
    w = min(local_window, span / 4.0)
    if w > 1e-9:
        ts.extend(t for t in np.linspace(-w, w, 7)
                  if t_lo <= t <= t_hi)
    ts = np.unique(np.asarray(ts))
    fs = np.array([g(t) for t in ts])
    best_i = int(np.argmin(fs))
    best_t, best_f = float(ts[best_i]), float(fs[best_i])
    lo = float(ts[max(best_i - 1, 0)])
    hi = float(ts[min(best_i + 1, len(ts) - 1)])
    if hi > lo:
        t_star, f_star = _golden_section(g, lo, hi)
        if f_star < best_f:
            best_t, best_f = t_star, f_star
    if f_zero <= best_f:
        return 0.0, f_zero
    return best_t, best_f


def _t_range(x: np.ndarray, d: np.ndarray, bounds: SearchBounds
             ) -> tuple[float, float]:
    """Parameter interval so x + t d stays inside the bounds box."""
    t_lo, t_hi = -math.inf, math.inf
    for a in range(3):
        if abs(d[a]) < 1e-15:
            continue
        t1 = (bounds.lo[a] - x[a]) / d[a]
        t2 = (bounds.hi[a] - x[a]) / d[a]
        t_lo = max(t_lo, min(t1, t2))
        t_hi = min(t_hi, max(t1, t2))
    if not math.isfinite(t_lo) or not math.isfinite(t_hi):
        return 0.0, 0.0
    return t_lo, t_hi


def powell_refine(start: CameraPose, objective, bounds: SearchBounds,
                  max_iter: int = 80, ftol: float = 1e-8,
                  trace: list | None = None,
                  abs_tol: float | None = None) -> CameraPose:
    """Powell conjugate-direction minimization of the camera position.

    Each coordinate direction is line-searched by golden section over the
    full admissible segment inside the bounds; after every cycle the
    direction of largest decrease is replaced by the cycle displacement.
    The result never has a higher loss than the start.
    """
    x = bounds.clip(start.position)
    eval_count = [0]

    def f(pos: np.ndarray) -> float:
        loss = float(objective(start.with_position(pos)))
        if trace is not None:
            trace.append(LossEval("powell", eval_count[0], tuple(pos), loss))
        eval_count[0] += 1
        return loss

    f_x = f(x)
    best_x, best_f = x.copy(), f_x
    dirs = [np.eye(3)[k] for k in range(3)]
    fresh_basis = True
    for _ in range(max_iter):
        if abs_tol is not None and f_x <= abs_tol:
            break
        f_cycle_start = f_x
        x_cycle_start = x.copy()
        biggest_drop, drop_idx = 0.0, 0
        for k, d in enumerate(dirs):
            t_lo, t_hi = _t_range(x, d, bounds)
            if t_hi - t_lo < 1e-12:
                continue
            t_star, f_star = _line_search(lambda t: f(x + t * d), t_lo, t_hi,
                                          f_x)
            if f_star < f_x:
                if f_x - f_star > biggest_drop:
                    biggest_drop, drop_idx = f_x - f_star, k
                x = bounds.clip(x + t_star * d)
                f_x = f_star
        move = x - x_cycle_start
        norm = np.linalg.norm(move)
        if norm > 1e-12:
            d_new = move / norm
            t_lo, t_hi = _t_range(x, d_new, bounds)
            if t_hi - t_lo > 1e-12:
                t_star, f_star = _line_search(lambda t: f(x + t * d_new),
                                              t_lo, t_hi, f_x)
                if f_star < f_x:
                    x = bounds.clip(x + t_star * d_new)
                    f_x = f_star
            dirs[drop_idx] = d_new
            fresh_basis = False
        if f_x < best_f:
            best_x, best_f = x.copy(), f_x
        if f_cycle_start - f_x < ftol:
            if fresh_basis:
                break
            # conjugate set degenerated: restart from the coordinate basis
            dirs = [np.eye(3)[k] for k in range(3)]
            fresh_basis = True
    return start.with_position(best_x)


def coarse_to_fine(init: CameraPose, target: FrameBuffer,
                   target_mask: MaskImage, meshes,
                   cfg: CamOptConfig = CamOptConfig(),
                   bounds: SearchBounds | None = None, seed: int = 0,
                   **raster_kwargs) -> tuple[CameraPose, list[LossEval]]:
    """Global random search followed by Powell refinement from its argmin.

    Returns the refined pose plus the per-evaluation loss trace. The final
    loss never exceeds the best loss of the global stage or of the initial
    pose.
    """
    if bounds is None:
        bounds = SearchBounds(init.position, np.array([0.5, 0.5, 0.5]))
    if not bounds.contains(init.position):
        raise GeometryError("initial position lies outside the search bounds")
    trace: list[LossEval] = []

    def objective(pose: CameraPose) -> float:
        return camera_loss(pose, target, target_mask, meshes, cfg,
                           **raster_kwargs)

    init_loss = objective(init)
    trace.append(LossEval("init", 0, tuple(init.position), init_loss))
    g_best = global_search(bounds, objective, cfg.n_random, seed, init, trace)
    g_loss = min(e.loss for e in trace)
    start = g_best if g_loss < init_loss else init
    # the loss is non-negative by construction, so exactly 0 is globally optimal
    refined = powell_refine(start, objective, bounds,
                            max_iter=cfg.powell_max_iter, trace=trace,
                            abs_tol=0.0)
    final_loss = objective(refined)
    if final_loss > min(g_loss, init_loss):
        refined = start  # golden-section never accepts a worse point; belt & braces
    return refined, trace
