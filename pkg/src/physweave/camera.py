"""Pinhole camera model, software rasterizer and camera motion modes.

The renderer is deliberately plain: perspective projection, 1-sample
z-buffer, single directional light with flat shading, hard planar shadows
on the ground plane. That is all the silhouette/shading losses and the
compositing stage need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rasterkernel as rk
from .errors import GeometryError
from .geom import TriMesh, Z_UP, rotation_about_axis
from .images import FrameBuffer, MaskImage

NEAR_PLANE = 1e-4
AMBIENT = 0.35
DEFAULT_LIGHT_DIR = np.array([0.45, 0.25, -0.95])
GROUND_COLOR = np.array([0.78, 0.76, 0.72])
SHADOW_FACTOR = 0.25  # ground pixels in shadow fall below the 0.3 detector

CAMERA_MODES = ("orbit_xy_cw", "orbit_xy_ccw", "orbit_yz_cw", "orbit_yz_ccw",
                "lateral", "descent")
ORBIT_RAD_PER_FRAME = 0.001
LINEAR_M_PER_FRAME = 0.002

# deterministic object palette, indexed by (object_id - 2) mod len
PALETTE = np.array([
    [0.85, 0.35, 0.30],
    [0.30, 0.55, 0.85],
    [0.35, 0.75, 0.40],
    [0.90, 0.70, 0.25],
    [0.65, 0.45, 0.80],
    [0.30, 0.75, 0.75],
    [0.85, 0.50, 0.65],
    [0.55, 0.60, 0.30],
])


def object_color(object_id: int) -> np.ndarray:
    return PALETTE[(int(object_id) - 2) % len(PALETTE)]


@dataclass(frozen=True)
class CameraPose:
    """Position / look-at / vertical FOV (degrees) / up hint."""

    position: np.ndarray
    look_at: np.ndarray
    fov_deg: float = 45.0
    up: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        l = np.asarray(self.look_at, dtype=np.float64).reshape(3)
        up = Z_UP if self.up is None else np.asarray(self.up, dtype=np.float64).reshape(3)
        if np.allclose(p, l):
            raise GeometryError("camera position equals look-at point")
        if not (1.0 < self.fov_deg < 179.0):
            raise GeometryError(f"fov {self.fov_deg} out of (1, 179) degrees")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "look_at", l)
        object.__setattr__(self, "up", up / np.linalg.norm(up))

    def with_position(self, position) -> "CameraPose":
        return CameraPose(position, self.look_at, self.fov_deg, self.up)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows (right, down, forward) of the world-to-camera rotation."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        n = np.linalg.norm(right)
        if n < 1e-12:  # looking straight along up: pick a stable right axis
            right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
            n = np.linalg.norm(right)
        right = right / n
        down = np.cross(fwd, right)
        return right, down, fwd


@dataclass(frozen=True)
class SearchBounds:
    """Box of admissible camera positions: center +- radii per axis."""

    center: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        r = np.asarray(self.radii, dtype=np.float64).reshape(3)
        if (r <= 0).any():
            raise GeometryError("search radii must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radii", r)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.radii

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.radii

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p)
        return bool((p >= self.lo - tol).all() and (p <= self.hi + tol).all())

    def clip(self, p) -> np.ndarray:
        return np.clip(np.asarray(p, dtype=np.float64), self.lo, self.hi)


def focal_px(fov_deg: float, height: int) -> float:
    return (height / 2.0) / math.tan(math.radians(fov_deg) / 2.0)


def world_to_camera(pose: CameraPose, points: np.ndarray) -> np.ndarray:
    right, down, fwd = pose.basis()
    rot = np.stack([right, down, fwd])
    return (np.asarray(points) - pose.position) @ rot.T


def project_points(pose: CameraPose, points: np.ndarray, width: int,
                   height: int) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection; returns (pixel xy, view depth). Depth <= 0 means
    behind the camera."""
    cam = world_to_camera(pose, points)
    z = cam[:, 2]
    f = focal_px(pose.fov_deg, height)
    safe = np.where(np.abs(z) < 1e-12, 1e-12, z)
    px = np.empty((len(cam), 2))
    px[:, 0] = width / 2.0 + f * cam[:, 0] / safe
    px[:, 1] = height / 2.0 + f * cam[:, 1] / safe
    return px, z


def _clip_poly_near(poly_cam: np.ndarray, near: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a camera-space polygon against z >= near."""
    out = []
    n = len(poly_cam)
    for i in range(n):
        a = poly_cam[i]
        b = poly_cam[(i + 1) % n]
        ina = a[2] >= near
        inb = b[2] >= near
        if ina:
            out.append(a)
        if ina != inb:
            t = (near - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return np.array(out) if out else np.zeros((0, 3))


@dataclass(frozen=True)
class RasterResult:
    frame: FrameBuffer
    mask: MaskImage
    seg: np.ndarray
    depth: np.ndarray

    def __iter__(self):  # allow frame, mask, seg = rasterize(...)
        return iter((self.frame, self.mask, self.seg))


def _face_batches(meshes, pose, width, height, light, colors):
    """Project faces, near-clipping where needed; returns raster arrays."""
    f = focal_px(pose.fov_deg, height)
    cx, cy = width / 2.0, height / 2.0
    light = light / np.linalg.norm(light)
    all_xy, all_z, all_col, all_id = [], [], [], []
    for mesh in meshes:
        if len(mesh.faces) == 0:
            continue
        cam = world_to_camera(pose, mesh.vertices)
        tri_cam = cam[mesh.faces]           # (T, 3, 3)
        tri_world = mesh.vertices[mesh.faces]
        normals = np.cross(tri_world[:, 1] - tri_world[:, 0],
                           tri_world[:, 2] - tri_world[:, 0])
        norm_len = np.linalg.norm(normals, axis=1)
        norm_len[norm_len < 1e-15] = 1.0
        normals /= norm_len[:, None]
        # two-sided flat shading so flipped-winding meshes stay visible
        shade = AMBIENT + (1.0 - AMBIENT) * np.abs(normals @ light)
        base = colors.get(mesh.object_id, object_color(mesh.object_id))
        tri_colors = np.clip(shade[:, None] * base[None, :], 0.0, 1.0)
        z = tri_cam[:, :, 2]
        front = (z >= NEAR_PLANE).all(axis=1)
        behind = (z < NEAR_PLANE).all(axis=1)
        crossing = ~front & ~behind
        if front.any():
            sel = tri_cam[front]
            xy = np.empty((sel.shape[0], 3, 2))
            xy[:, :, 0] = cx + f * sel[:, :, 0] / sel[:, :, 2]
            xy[:, :, 1] = cy + f * sel[:, :, 1] / sel[:, :, 2]
            all_xy.append(xy)
            all_z.append(sel[:, :, 2])
            all_col.append(tri_colors[front])
            all_id.append(np.full(sel.shape[0], mesh.object_id, dtype=np.int32))
        for ti in np.flatnonzero(crossing):
            poly = _clip_poly_near(tri_cam[ti], NEAR_PLANE)
            for k in range(1, len(poly) - 1):
                sub = np.stack([poly[0], poly[k], poly[k + 1]])
                xy = np.empty((1, 3, 2))
                xy[0, :, 0] = cx + f * sub[:, 0] / sub[:, 2]
                xy[0, :, 1] = cy + f * sub[:, 1] / sub[:, 2]
                all_xy.append(xy)
                all_z.append(sub[None, :, 2])
                all_col.append(tri_colors[ti][None, :])
                all_id.append(np.array([mesh.object_id], dtype=np.int32))
    if not all_xy:
        return (np.zeros((0, 3, 2)), np.zeros((0, 3)), np.zeros((0, 3)),
                np.zeros(0, dtype=np.int32))
    return (np.ascontiguousarray(np.vstack(all_xy)),
            np.ascontiguousarray(np.vstack(all_z)),
            np.ascontiguousarray(np.vstack(all_col)),
            np.concatenate(all_id))


def _ground_mesh(meshes, point_sets, half_size=None) -> TriMesh:
    centers = []
    radius = 0.0
    for m in meshes:
        centers.append(m.vertices.mean(axis=0))
        radius = max(radius, float(np.abs(m.vertices[:, :2]).max(initial=0.0)))
    for pts, _oid, _col, _r in point_sets:
        if len(pts):
            centers.append(pts.mean(axis=0))
            radius = max(radius, float(np.abs(pts[:, :2]).max(initial=0.0)))
    cx, cy = (np.mean(centers, axis=0)[:2] if centers else (0.0, 0.0))
    hs = half_size if half_size is not None else max(10.0, 4.0 * radius)
    v = np.array([[cx - hs, cy - hs, 0.0], [cx + hs, cy - hs, 0.0],
                  [cx + hs, cy + hs, 0.0], [cx - hs, cy + hs, 0.0]])
    return TriMesh(v, [[0, 1, 2], [0, 2, 3]], object_id=1)


def rasterize(meshes, camera: CameraPose, size,
              point_sets=None, colors=None, ground: bool = True,
              ground_half_size=None, light_dir=DEFAULT_LIGHT_DIR,
              shadows: bool = True, background=0.0) -> RasterResult:
    """Render meshes (+ optional particle splats) with seg ids.

    seg scheme: 0 background, 1 ground plane, >= 2 objects; the returned
    mask is (seg >= 2). ``point_sets`` is a list of
    (positions, object_id, color, radius_m) tuples.
    ``size`` is an int (square) or (width, height).
    """
    if isinstance(size, int):
        width = height = size
    else:
        width, height = size
    if width <= 0 or height <= 0:
        raise GeometryError("image size must be positive")
    point_sets = point_sets or []
    colors = dict(colors or {})
    light = np.asarray(light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)

    rgb = np.zeros((height, width, 3))
    rgb[:] = background
    seg = np.zeros((height, width), dtype=np.int32)
    depth = np.full((height, width), np.inf)

    # 1. ground plane
    if ground:
        gmesh = _ground_mesh(meshes, point_sets, ground_half_size)
        gcol = {1: GROUND_COLOR}
        xy, z, col, sid = _face_batches([gmesh], camera, width, height,
                                        light, gcol)
        rk.fill_triangles(rgb, seg, depth, xy, z, col, sid)

        # 2. hard shadows: object triangles projected along the light onto z=0
        if shadows and light[2] < -1e-6 and (meshes or point_sets):
            shadow_tris = []
            for mesh in meshes:
                v = mesh.vertices
                t = v[:, 2] / (-light[2])
                proj = v + t[:, None] * light[None, :]
                shadow_tris.append(proj[mesh.faces])
            for pts, _oid, _col, r in point_sets:
                if not len(pts):
                    continue
                t = pts[:, 2] / (-light[2])
                proj = pts + t[:, None] * light[None, :]
                # small quads per particle (two tris)
                d0 = np.array([r, 0.0, 0.0])
                d1 = np.array([0.0, r, 0.0])
                quad = np.stack([proj - d0 - d1, proj + d0 - d1,
                                 proj + d0 + d1, proj - d0 + d1], axis=1)
                shadow_tris.append(quad[:, [0, 1, 2]])
                shadow_tris.append(quad[:, [0, 2, 3]])
            world = np.vstack(shadow_tris)
            cam = world_to_camera(camera, world.reshape(-1, 3)).reshape(-1, 3, 3)
            zok = (cam[:, :, 2] >= NEAR_PLANE).all(axis=1)
            cam = cam[zok]
            if len(cam):
                f = focal_px(camera.fov_deg, height)
                xy = np.empty((cam.shape[0], 3, 2))
                xy[:, :, 0] = width / 2.0 + f * cam[:, :, 0] / cam[:, :, 2]
                xy[:, :, 1] = height / 2.0 + f * cam[:, :, 1] / cam[:, :, 2]
                smask = np.zeros((height, width), dtype=np.uint8)
                rk.mark_triangles(smask, np.ascontiguousarray(xy))
                hit = (smask == 1) & (seg == 1)
                rgb[hit] *= SHADOW_FACTOR

    # 3. objects
    xy, z, col, sid = _face_batches(meshes, camera, width, height, light, colors)
    rk.fill_triangles(rgb, seg, depth, xy, z, col, sid)

    # 4. particle splats
    for pts, oid, color, radius in point_sets:
        if not len(pts):
            continue
        px, pz = project_points(camera, pts, width, height)
        f = focal_px(camera.fov_deg, height)
        visible = pz > NEAR_PLANE
        rpx = np.zeros(len(pts))
        rpx[visible] = radius * f / pz[visible]
        shade = 1.0
        cols = np.tile(np.clip(np.asarray(color) * shade, 0, 1), (len(pts), 1))
        sids = np.full(len(pts), oid, dtype=np.int32)
        rk.splat_points(rgb, seg, depth, np.ascontiguousarray(px[visible]),
                        np.ascontiguousarray(pz[visible]),
                        np.ascontiguousarray(rpx[visible]),
                        np.ascontiguousarray(cols[visible]), sids[visible])

    np.clip(rgb, 0.0, 1.0, out=rgb)
    frame = FrameBuffer(rgb, seg)
    return RasterResult(frame, frame.object_mask(), seg, depth)


def camera_init(meshes, fov_deg: float = 45.0, elevation_deg: float = 15.0,
                fill: float = 0.6) -> CameraPose:
    """Deterministic starting pose: frame the scene so it subtends ~``fill``
    of the vertical FOV, looking at the vertex centroid from a slightly
    elevated front viewpoint."""
    if not meshes:
        raise GeometryError("camera_init needs at least one mesh")
    all_v = np.vstack([m.vertices for m in meshes])
    center = all_v.mean(axis=0)
    radius = float(np.linalg.norm(all_v - center, axis=1).max())
    if radius < 1e-9:
        radius = 0.5
    dist = radius / math.tan(fill * math.radians(fov_deg) / 2.0)
    el = math.radians(elevation_deg)
    direction = np.array([0.0, -math.cos(el), math.sin(el)])
    return CameraPose(center + dist * direction, center, fov_deg)


def camera_motion_pose(mode: str, frame_idx: int, base: CameraPose,
                       angular_speed: float = ORBIT_RAD_PER_FRAME,
                       linear_speed: float = LINEAR_M_PER_FRAME) -> CameraPose:
    """Animate the camera: four orbits about the look-at point, a lateral
    slide along the camera right axis, or a straight descent."""
    if mode not in CAMERA_MODES:
        raise GeometryError(f"unknown camera mode {mode!r}; "
                            f"expected one of {CAMERA_MODES}")
    if frame_idx < 0:
        raise GeometryError("frame index must be >= 0")
    if frame_idx == 0:
        return base
    rel = base.position - base.look_at
    if mode.startswith("orbit"):
        angle = angular_speed * frame_idx
        if mode.endswith("_cw"):
            angle = -angle
        axis = Z_UP if "_xy_" in mode else np.array([1.0, 0.0, 0.0])
        rot = rotation_about_axis(axis, angle)
        return base.with_position(base.look_at + rot @ rel)
    if mode == "lateral":
        right, _, _ = base.basis()
        return base.with_position(base.position + linear_speed * frame_idx * right)
    # descent
    return base.with_position(base.position
                              - np.array([0.0, 0.0, linear_speed * frame_idx]))
