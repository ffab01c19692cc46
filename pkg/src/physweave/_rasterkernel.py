"""Numba inner loops for the software rasterizer."""

import numpy as np
from numba import njit


@njit(cache=True)
def fill_triangles(rgb, seg, depth, pts, zs, colors, seg_ids):
    """Z-buffered flat fill. pts: (T,3,2) pixel coords, zs: (T,3) view depth."""
    h, w = seg.shape
    for t in range(pts.shape[0]):
        x0 = pts[t, 0, 0]; y0 = pts[t, 0, 1]
        x1 = pts[t, 1, 0]; y1 = pts[t, 1, 1]
        x2 = pts[t, 2, 0]; y2 = pts[t, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area > -1e-12 and area < 1e-12:
            continue
        inv_area = 1.0 / area
        iz0 = 1.0 / zs[t, 0]; iz1 = 1.0 / zs[t, 1]; iz2 = 1.0 / zs[t, 2]
        xmin = min(x0, min(x1, x2)); xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2)); ymax = max(y0, max(y1, y2))
        ix0 = int(np.ceil(xmin - 0.5))
        ix1 = int(np.floor(xmax - 0.5))
        iy0 = int(np.ceil(ymin - 0.5))
        iy1 = int(np.floor(ymax - 0.5))
        if ix0 < 0: ix0 = 0
        if iy0 < 0: iy0 = 0
        if ix1 > w - 1: ix1 = w - 1
        if iy1 > h - 1: iy1 = h - 1
        for py in range(iy0, iy1 + 1):
            cy = py + 0.5
            for px in range(ix0, ix1 + 1):
                cx = px + 0.5
                # barycentric via sub-triangle areas (same orientation sign)
                w0 = ((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) * inv_area
                w1 = ((x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                inv_z = w0 * iz0 + w1 * iz1 + w2 * iz2
                d = 1.0 / inv_z
                if d < depth[py, px]:
                    depth[py, px] = d
                    seg[py, px] = seg_ids[t]
                    rgb[py, px, 0] = colors[t, 0]
                    rgb[py, px, 1] = colors[t, 1]
                    rgb[py, px, 2] = colors[t, 2]


@njit(cache=True)
def mark_triangles(mask, pts):
    """Set mask=1 for pixels covered by any triangle (no depth test)."""
    h, w = mask.shape
    for t in range(pts.shape[0]):
        x0 = pts[t, 0, 0]; y0 = pts[t, 0, 1]
        x1 = pts[t, 1, 0]; y1 = pts[t, 1, 1]
        x2 = pts[t, 2, 0]; y2 = pts[t, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area > -1e-12 and area < 1e-12:
            continue
        inv_area = 1.0 / area
        xmin = min(x0, min(x1, x2)); xmax = max(x0, max(x1, x2))
        ymin = min(y0, min(y1, y2)); ymax = max(y0, max(y1, y2))
        ix0 = max(int(np.ceil(xmin - 0.5)), 0)
        ix1 = min(int(np.floor(xmax - 0.5)), w - 1)
        iy0 = max(int(np.ceil(ymin - 0.5)), 0)
        iy1 = min(int(np.floor(ymax - 0.5)), h - 1)
        for py in range(iy0, iy1 + 1):
            cy = py + 0.5
            for px in range(ix0, ix1 + 1):
                cx = px + 0.5
                w0 = ((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) * inv_area
                w1 = ((x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                    mask[py, px] = 1


@njit(cache=True)
def splat_points(rgb, seg, depth, px, pz, radius_px, colors, seg_ids):
    """Square point sprites with a constant depth per point."""
    h, w = seg.shape
    for i in range(px.shape[0]):
        z = pz[i]
        if z <= 0.0:
            continue
        r = radius_px[i]
        if r < 0.5:
            r = 0.5
        x0 = int(np.floor(px[i, 0] - r)); x1 = int(np.ceil(px[i, 0] + r))
        y0 = int(np.floor(px[i, 1] - r)); y1 = int(np.ceil(px[i, 1] + r))
        if x0 < 0: x0 = 0
        if y0 < 0: y0 = 0
        if x1 > w - 1: x1 = w - 1
        if y1 > h - 1: y1 = h - 1
        for py in range(y0, y1 + 1):
            for qx in range(x0, x1 + 1):
                if z < depth[py, qx]:
                    depth[py, qx] = z
                    seg[py, qx] = seg_ids[i]
                    rgb[py, qx, 0] = colors[i, 0]
                    rgb[py, qx, 1] = colors[i, 1]
                    rgb[py, qx, 2] = colors[i, 2]
