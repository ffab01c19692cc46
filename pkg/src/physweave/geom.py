"""Core geometry: triangle meshes, point clouds, boxes and rotation helpers.

All values are plain numpy arrays in meters, Z-up world convention. The
containers are frozen and their arrays are marked read-only, so they can be
shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError, MeshFormatError

Z_UP = np.array([0.0, 0.0, 1.0])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh. ``object_id`` >= 2 matches the seg-id scheme
    (0 = background, 1 = ground plane)."""

    vertices: np.ndarray  # (N, 3) float64
    faces: np.ndarray     # (M, 3) int64
    object_id: int = 2

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise GeometryError(
                f"face index out of range (vertex count {len(v)})")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def translated(self, t) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(t, dtype=np.float64),
                       self.faces, self.object_id)

    def rotated(self, rotation: np.ndarray) -> "TriMesh":
        return TriMesh(self.vertices @ np.asarray(rotation).T,
                       self.faces, self.object_id)

    def z_min(self) -> float:
        return float(self.vertices[:, 2].min())


@dataclass(frozen=True)
class PointCloud:
    """Unordered bag of 3D points."""

    points: np.ndarray  # (N, 3) float64

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", _readonly(p))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by center and full side lengths per axis."""

    center: np.ndarray  # (3,)
    extent: np.ndarray  # (3,) >= 0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        e = np.asarray(self.extent, dtype=np.float64).reshape(3)
        if (e < 0).any():
            raise GeometryError(f"negative AABB extent {e}")
        object.__setattr__(self, "center", _readonly(c))
        object.__setattr__(self, "extent", _readonly(e))

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.extent / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.extent / 2.0

    def overlap_depths(self, other: "Aabb") -> np.ndarray:
        """Per-axis overlap depth; positive on every axis means the boxes
        intersect."""
        return (self.extent + other.extent) / 2.0 - np.abs(self.center - other.center)

    def overlaps(self, other: "Aabb") -> bool:
        return bool((self.overlap_depths(other) > 0).all())


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion x' = R x + t."""

    rotation: np.ndarray     # (3, 3) orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise GeometryError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def apply_mesh(self, mesh: TriMesh) -> TriMesh:
        return TriMesh(self.apply(mesh.vertices), mesh.faces, mesh.object_id)


def load_obj(path, object_id: int = 2) -> TriMesh:
    """Load a Wavefront OBJ (positions + faces only, n-gons fan-triangulated).

    Normals, UVs and materials are ignored. Raises MeshFormatError with the
    offending line number on malformed records, FileNotFoundError if the
    file is missing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_lines: list[int] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise MeshFormatError("vertex needs 3 coordinates",
                                          path, lineno)
                try:
                    verts.append([float(tokens[1]), float(tokens[2]),
                                  float(tokens[3])])
                except ValueError:
                    raise MeshFormatError(f"bad vertex line {line!r}",
                                          path, lineno) from None
            elif tag == "f":
                if len(tokens) < 4:
                    raise MeshFormatError("face needs at least 3 indices",
                                          path, lineno)
                try:
                    # "3/1/2" style references: position index is the first field
                    idx = [int(t.split("/")[0]) for t in tokens[1:]]
                except ValueError:
                    raise MeshFormatError(f"bad face line {line!r}",
                                          path, lineno) from None
                if any(i <= 0 for i in idx):
                    raise MeshFormatError("face indices must be positive "
                                          "(1-based)", path, lineno)
                idx0 = [i - 1 for i in idx]
                for k in range(1, len(idx0) - 1):
                    faces.append((idx0[0], idx0[k], idx0[k + 1]))
                    face_lines.append(lineno)
            # everything else (vn, vt, o, g, usemtl, s, mtllib...) is skipped
    if not faces:
        raise MeshFormatError("no triangles found", path)
    nv = len(verts)
    for tri, lineno in zip(faces, face_lines):
        if max(tri) >= nv:
            raise MeshFormatError(
                f"face references vertex {max(tri) + 1} but only {nv} "
                f"vertices are defined", path, lineno)
    return TriMesh(np.array(verts), np.array(faces), object_id)


def save_obj(mesh: TriMesh, path) -> None:
    """Write positions + triangle faces (1-based indices)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def face_areas(mesh: TriMesh) -> np.ndarray:
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def surface_area(mesh: TriMesh) -> float:
    return float(face_areas(mesh).sum())


def mesh_volume(mesh: TriMesh) -> float:
    """Signed volume via the divergence theorem (meaningful for closed
    meshes)."""
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def sample_surface(mesh: TriMesh, n: int, seed: int = 0) -> PointCloud:
    """Draw ``n`` area-proportional surface samples.

    Uses a counter-based (Philox) generator so the same seed reproduces the
    same cloud bit-for-bit.
    """
    if n < 1:
        raise GeometryError(f"sample count must be >= 1, got {n}")
    areas = face_areas(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise GeometryError("cannot sample a zero-area mesh")
    rng = np.random.Generator(np.random.Philox(seed))
    face_idx = rng.choice(len(areas), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    u = 1.0 - s
    v = s * (1.0 - r2)
    w = s * r2
    tri = mesh.faces[face_idx]
    pts = (u[:, None] * mesh.vertices[tri[:, 0]]
           + v[:, None] * mesh.vertices[tri[:, 1]]
           + w[:, None] * mesh.vertices[tri[:, 2]])
    return PointCloud(pts)


def aabb(mesh: TriMesh) -> Aabb:
    """Tight axis-aligned bounding box over the vertices."""
    if mesh.num_vertices == 0:
        raise GeometryError("empty mesh has no bounding box")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return Aabb((lo + hi) / 2.0, hi - lo)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def rodrigues_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation matrix taking unit vector ``a`` onto unit vector ``b``.

    R = I + [v]x + [v]x^2 (1 - c) / |v|^2 with v = a x b, c = a . b.
    The anti-parallel case (c ~ -1) falls back to a half-turn about a
    deterministic axis orthogonal to ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if abs(np.linalg.norm(a) - 1.0) > 1e-6 or abs(np.linalg.norm(b) - 1.0) > 1e-6:
        raise GeometryError("rodrigues_between expects unit vectors")
    c = float(a @ b)
    v = np.cross(a, b)
    s2 = float(v @ v)
    if c <= -1.0 + 1e-9:
        # pick the world axis least aligned with a, orthogonalize, rotate pi
        e = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = e - (e @ a) * a
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    if s2 < 1e-24:
        return np.eye(3)
    vx = skew(v)
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / s2)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Axis-angle rotation matrix (axis need not be unit; zero axis -> I)."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        return np.eye(3)
    u = axis / n
    k = skew(u)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
