"""Scene-aware pose alignment.

Takes egocentric per-object meshes into a unified, gravity-aligned world
frame: canonical single-object alignment (centroid + PCA + ground contact),
ground-plane estimation (vanilla RANSAC and anchor-guided robust fitting),
scene normalization, and AABB-based penetration resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, PlaneEstimationError
from .geom import (Aabb, PointCloud, RigidTransform, TriMesh, aabb,
                   rodrigues_between, sample_surface, Z_UP)

SURFACE_SAMPLES_PER_MESH = 5000


@dataclass(frozen=True)
class PlaneFit:
    """Plane n . x + d = 0 with unit normal oriented so n_z >= 0."""

    normal: np.ndarray
    offset: float
    inlier_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    inlier_rms: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            raise GeometryError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "inlier_indices",
                           np.asarray(self.inlier_indices, dtype=np.int64))

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)


@dataclass(frozen=True)
class RansacParams:
    distance_threshold: float = 0.01
    min_samples: int = 3
    iterations: int = 2000
    horizontality_threshold: float = 0.8
    ground_percentile: float = 5.0
    max_retries: int = 8

    def __post_init__(self):
        if self.distance_threshold <= 0:
            raise GeometryError("distance_threshold must be > 0")
        if self.min_samples < 3:
            raise GeometryError("min_samples must be >= 3")
        if self.iterations < 1:
            raise GeometryError("iterations must be >= 1")
        if not (0.0 < self.horizontality_threshold <= 1.0):
            raise GeometryError("horizontality_threshold must be in (0, 1]")
        if not (0.0 < self.ground_percentile <= 100.0):
            raise GeometryError("ground_percentile must be in (0, 100]")


@dataclass(frozen=True)
class RobustLoss:
    kind: str = "huber"  # "huber" | "tukey"
    scale: float = 0.01

    def __post_init__(self):
        if self.kind not in ("huber", "tukey"):
            raise GeometryError(f"unknown robust loss {self.kind!r}")
        if self.scale <= 0:
            raise GeometryError("robust loss scale must be > 0")

    def rho(self, r: np.ndarray) -> np.ndarray:
        a = np.abs(r)
        s = self.scale
        if self.kind == "huber":
            return np.where(a <= s, 0.5 * r * r, s * (a - 0.5 * s))
        t = np.minimum(a / s, 1.0)
        return (s * s / 6.0) * (1.0 - (1.0 - t * t) ** 3)

    def weights(self, r: np.ndarray) -> np.ndarray:
        a = np.abs(r)
        s = self.scale
        if self.kind == "huber":
            return np.where(a <= s, 1.0, s / np.maximum(a, 1e-300))
        t = a / s
        return np.where(t <= 1.0, (1.0 - t * t) ** 2, 0.0)


@dataclass
class AlignmentAttempt:
    index: int
    percentile: float
    distance_threshold: float
    cos_threshold: float
    normal_dot_gravity: float
    inliers: int
    accepted: bool


@dataclass
class AlignmentReport:
    """Structured record of one alignment run, serializable to JSON."""

    mode: str = "multi"  # "single" | "multi"
    attempts: list = field(default_factory=list)
    plane_normal: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    plane_offset: float = 0.0
    refined_by_anchors: bool = False
    transform_rotation: list = field(default_factory=lambda: np.eye(3).tolist())
    transform_translation: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    per_object_translations: dict = field(default_factory=dict)
    residual_overlaps: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "attempts": [vars(a) for a in self.attempts],
            "plane": {"normal": self.plane_normal, "offset": self.plane_offset,
                      "refined_by_anchors": self.refined_by_anchors},
            "transform": {"rotation": self.transform_rotation,
                          "translation": self.transform_translation},
            "per_object_translations": self.per_object_translations,
            "residual_overlaps": self.residual_overlaps,
        }


# ---------------------------------------------------------------------------
# single-object canonical alignment

def centroid_normalize(mesh: TriMesh) -> tuple[TriMesh, np.ndarray]:
    """Translate the mesh so its vertex mean sits at the origin."""
    if mesh.num_vertices == 0:
        raise GeometryError("cannot normalize an empty mesh")
    centroid = mesh.vertices.mean(axis=0)
    return mesh.translated(-centroid), centroid


def pca_canonical_rotation(mesh: TriMesh) -> np.ndarray:
    """Rotation aligning the principal vertex axis with world +z.

    Expects a zero-centered mesh. Sign convention: the principal eigenvector
    is flipped so u . z >= 0 (ties broken toward +x, then +y); near-isotropic
    covariances (no meaningful principal axis) return the identity.
    """
    v = mesh.vertices - mesh.vertices.mean(axis=0)
    cov = (v.T @ v) / len(v)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[2] <= 1e-30:
        raise GeometryError("degenerate covariance: all vertices coincide")
    if evals[2] - evals[1] < 1e-9 * evals[2]:
        return np.eye(3)
    u = evecs[:, 2]
    for ref in (Z_UP, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        d = float(u @ ref)
        if abs(d) > 1e-12:
            if d < 0:
                u = -u
            break
    return rodrigues_between(u, Z_UP)


def ground_contact_correct(mesh: TriMesh) -> TriMesh:
    """Drop (or lift) the mesh so its lowest vertex sits on z = 0."""
    if mesh.num_vertices == 0:
        raise GeometryError("cannot ground-correct an empty mesh")
    return mesh.translated([0.0, 0.0, -mesh.z_min()])


def canonical_align(mesh: TriMesh) -> tuple[TriMesh, RigidTransform]:
    """Full single-object path: centroid removal, PCA-to-z, ground contact."""
    centered, centroid = centroid_normalize(mesh)
    rot = pca_canonical_rotation(centered)
    rotated = centered.rotated(rot)
    out = ground_contact_correct(rotated)
    t = -rot @ centroid + np.array([0.0, 0.0, -rotated.z_min()])
    return out, RigidTransform(rot, t)


# ---------------------------------------------------------------------------
# ground-plane estimation

def select_ground_candidates(cloud: PointCloud, p: float) -> PointCloud:
    """Keep the lowest-z ceil(p% * N) points (stable order: z, then index)."""
    if len(cloud) == 0:
        raise GeometryError("empty point cloud")
    if not (0.0 < p <= 100.0):
        raise GeometryError(f"percentile must be in (0, 100], got {p}")
    k = math.ceil(p / 100.0 * len(cloud))
    order = np.lexsort((np.arange(len(cloud)), cloud.points[:, 2]))
    return PointCloud(cloud.points[order[:k]])


def _lsq_plane(points: np.ndarray, weights: np.ndarray | None = None):
    """Total-least-squares plane through weighted points."""
    if weights is None:
        weights = np.ones(len(points))
    wsum = weights.sum()
    if wsum <= 0:
        raise GeometryError("rank-deficient weighted system: all weights zero")
    c = (weights[:, None] * points).sum(axis=0) / wsum
    d = points - c
    cov = (weights[:, None] * d).T @ d
    evals, evecs = np.linalg.eigh(cov)
    n = evecs[:, 0]
    if evals[1] <= 1e-18 * max(evals[2], 1e-30):
        raise GeometryError("rank-deficient plane fit (collinear points)")
    if n[2] < 0 or (n[2] == 0 and (n[0] < 0 or (n[0] == 0 and n[1] < 0))):
        n = -n
    return n, float(-n @ c)


def ransac_plane(points: PointCloud, params: RansacParams = RansacParams(),
                 seed: int = 0) -> PlaneFit:
    """Classic 3-point RANSAC; the consensus set is refit by least squares.

    Deterministic for a fixed seed; the normal is oriented with n_z >= 0.
    """
    pts = points.points
    n_pts = len(pts)
    if n_pts < params.min_samples:
        raise GeometryError(
            f"need at least {params.min_samples} points, got {n_pts}")
    rng = np.random.Generator(np.random.Philox(seed))
    tri = rng.integers(0, n_pts, size=(params.iterations, 3))
    a = pts[tri[:, 0]]
    normals = np.cross(pts[tri[:, 1]] - a, pts[tri[:, 2]] - a)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    if not ok.any():
        raise GeometryError("all RANSAC samples were collinear")
    normals[ok] /= norms[ok, None]
    offsets = -np.einsum("ij,ij->i", normals, a)
    # distance matrix trial x point, chunked to bound memory
    best_count = -1
    best_idx = -1
    chunk = max(1, int(4e7) // max(n_pts, 1))
    counts = np.zeros(params.iterations, dtype=np.int64)
    for s in range(0, params.iterations, chunk):
        e = min(s + chunk, params.iterations)
        dist = np.abs(pts @ normals[s:e].T + offsets[s:e])
        counts[s:e] = (dist <= params.distance_threshold).sum(axis=0)
    counts[~ok] = -1
    best_idx = int(np.argmax(counts))
    best_count = int(counts[best_idx])
    if best_count < params.min_samples:
        raise GeometryError("RANSAC found no plane-supporting sample")
    d0 = np.abs(pts @ normals[best_idx] + offsets[best_idx])
    consensus = np.flatnonzero(d0 <= params.distance_threshold)
    n, d = _lsq_plane(pts[consensus])
    refit_dist = np.abs(pts @ n + d)
    inliers = np.flatnonzero(refit_dist <= params.distance_threshold)
    rms = float(np.sqrt(np.mean(refit_dist[inliers] ** 2))) if len(inliers) else 0.0
    return PlaneFit(n, d, inliers, rms)


def agmf_anchors(meshes: list[TriMesh], delta: float | None = None,
                 band_fraction: float = 0.02) -> PointCloud:
    """Per-object bottom-band vertices: v with v_z <= min_z(mesh) + delta.

    ``delta=None`` uses ``band_fraction`` of each mesh's z-extent (floor
    1e-4 m) so the band adapts to object scale.
    """
    if not meshes:
        raise GeometryError("no meshes to extract anchors from")
    parts = []
    for m in meshes:
        if m.num_vertices == 0:
            raise GeometryError("mesh with no vertices in anchor extraction")
        z = m.vertices[:, 2]
        if delta is None:
            d = max(band_fraction * float(z.max() - z.min()), 1e-4)
        else:
            if delta < 0:
                raise GeometryError("delta must be >= 0")
            d = delta
        parts.append(m.vertices[z <= z.min() + d])
    return PointCloud(np.vstack(parts))


def _anchors_for_refinement(meshes: list[TriMesh],
                            minimum: int = 4) -> PointCloud:
    """Bottom-band anchors, widening the relative band until enough vertices
    support a plane fit (sparse meshes may put a single vertex in the
    default band)."""
    fraction = 0.02
    anchors = agmf_anchors(meshes, band_fraction=fraction)
    while len(anchors) < minimum and fraction < 1.0:
        fraction *= 2.0
        anchors = agmf_anchors(meshes, band_fraction=fraction)
    return anchors


def robust_plane_fit(anchors: PointCloud, seed_plane: PlaneFit,
                     loss: RobustLoss = RobustLoss(), max_iter: int = 50,
                     tol_rad: float = 1e-7) -> PlaneFit:
    """IRLS minimization of sum rho(point-plane distance) from a seed plane.

    The robust objective never increases across iterations (the update is
    rejected if it would).
    """
    pts = anchors.points
    if len(pts) < 3:
        raise GeometryError("need >= 3 anchor points")
    n, d = seed_plane.normal.copy(), float(seed_plane.offset)
    obj = float(loss.rho(pts @ n + d).sum())
    for _ in range(max_iter):
        w = loss.weights(pts @ n + d)
        try:
            n_new, d_new = _lsq_plane(pts, w)
        except GeometryError:
            break
        obj_new = float(loss.rho(pts @ n_new + d_new).sum())
        if obj_new > obj + 1e-15:
            break
        angle = math.acos(min(1.0, abs(float(n_new @ n))))
        n, d, obj = n_new, d_new, obj_new
        if angle < tol_rad:
            break
    dist = np.abs(pts @ n + d)
    thr = loss.scale
    inliers = np.flatnonzero(dist <= thr)
    rms = float(np.sqrt(np.mean(dist[inliers] ** 2))) if len(inliers) else 0.0
    return PlaneFit(n, d, inliers, rms)


def retry_schedule(params: RansacParams, attempt: int) -> RansacParams:
    """Relaxation for attempt k (1-based); attempt 1 keeps the base values.

    Each further attempt widens the candidate band, the inlier threshold and
    the horizontality acceptance: p -> min(p + 5k', 40), tau_d -> tau_d *
    (1 + 0.5 k'), tau_cos -> max(tau_cos - 0.05 k', 0.5) with k' = attempt - 1.
    """
    k = attempt - 1
    return replace(
        params,
        ground_percentile=min(params.ground_percentile + 5.0 * k, 40.0),
        distance_threshold=params.distance_threshold * (1.0 + 0.5 * k),
        horizontality_threshold=max(params.horizontality_threshold - 0.05 * k, 0.5),
    )


def adaptive_ground_estimation(
    meshes: list[TriMesh],
    params: RansacParams = RansacParams(),
    gravity_hint: np.ndarray = Z_UP,
    seed: int = 0,
    report: AlignmentReport | None = None,
) -> PlaneFit:
    """Full ground pipeline with adaptive retries and anchor refinement.

    Per attempt: sample 5000 surface points per mesh, keep the lowest p%,
    RANSAC-fit, and validate |n . gravity| >= tau_cos. Failed validation
    relaxes the parameters (see retry_schedule) up to max_retries attempts.
    The accepted plane is then refined on the per-object bottom-band anchors
    with a Huber IRLS fit.
    """
    if not meshes:
        raise GeometryError("no meshes supplied")
    gravity_hint = np.asarray(gravity_hint, dtype=np.float64)
    attempts: list[AlignmentAttempt] = []
    best_rejected: PlaneFit | None = None
    best_cos = -1.0
    accepted: PlaneFit | None = None
    clouds = [sample_surface(m, SURFACE_SAMPLES_PER_MESH, seed=seed + i)
              for i, m in enumerate(meshes)]
    full = PointCloud(np.vstack([c.points for c in clouds]))
    for attempt in range(1, params.max_retries + 1):
        p_k = retry_schedule(params, attempt)
        candidates = select_ground_candidates(full, p_k.ground_percentile)
        try:
            fit = ransac_plane(candidates, p_k, seed=seed + 1000 * attempt)
        except GeometryError:
            attempts.append(AlignmentAttempt(attempt, p_k.ground_percentile,
                                             p_k.distance_threshold,
                                             p_k.horizontality_threshold,
                                             0.0, 0, False))
            continue
        cos = abs(float(fit.normal @ gravity_hint))
        ok = cos >= p_k.horizontality_threshold
        attempts.append(AlignmentAttempt(attempt, p_k.ground_percentile,
                                         p_k.distance_threshold,
                                         p_k.horizontality_threshold,
                                         cos, len(fit.inlier_indices), ok))
        if ok:
            accepted = fit
            break
        if cos > best_cos:
            best_cos, best_rejected = cos, fit
    if report is not None:
        report.attempts = attempts
    if accepted is None:
        raise PlaneEstimationError(
            f"ground estimation failed after {params.max_retries} attempts "
            f"(best |n.g| = {best_cos:.3f})",
            best_rejected=best_rejected, attempts=attempts)
    anchors = _anchors_for_refinement(meshes)
    refined = robust_plane_fit(anchors, accepted,
                               RobustLoss("huber", params.distance_threshold))
    if report is not None:
        report.plane_normal = refined.normal.tolist()
        report.plane_offset = float(refined.offset)
        report.refined_by_anchors = True
    return refined


# ---------------------------------------------------------------------------
# scene normalization + penetration resolution

def normalize_scene(meshes: list[TriMesh], plane: PlaneFit
                    ) -> tuple[list[TriMesh], RigidTransform]:
    """Rotate the scene so the plane normal becomes +z and rest it on z = 0.

    Applies x' = R (x - mean) with R from the Rodrigues map, then shifts so
    the scene-wide minimum z is exactly zero. Returns the composite
    transform x' = R x + t.
    """
    if not meshes:
        raise GeometryError("no meshes to normalize")
    all_v = np.vstack([m.vertices for m in meshes])
    center = all_v.mean(axis=0)
    rot = rodrigues_between(plane.normal, Z_UP)
    rotated = [(m.vertices - center) @ rot.T for m in meshes]
    z_min = min(float(v[:, 2].min()) for v in rotated)
    shift = np.array([0.0, 0.0, -z_min])
    out = [TriMesh(v + shift, m.faces, m.object_id)
           for v, m in zip(rotated, meshes)]
    t = -rot @ center + shift
    return out, RigidTransform(rot, t)


def resolve_penetration(meshes: list[TriMesh], padding: float = 0.01,
                        delta_max: float = 0.05, iterations: int = 2,
                        report: AlignmentReport | None = None
                        ) -> list[TriMesh]:
    """Push overlapping AABBs apart along the axis of minimum overlap.

    Each object of an overlapping pair moves half the minimum-axis overlap
    (plus a hair of separation slack), clipped to delta_max per axis per
    iteration; z pushes never drop a mesh below the ground. Overlaps still
    deeper than ``padding`` after the final iteration are reported as
    residual.
    """
    if delta_max <= 0:
        raise GeometryError("delta_max must be > 0")
    if padding < 0:
        raise GeometryError("padding must be >= 0")
    meshes = list(meshes)
    n = len(meshes)
    for _ in range(max(0, iterations)):
        boxes = [aabb(m) for m in meshes]
        shifts = [np.zeros(3) for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                depths = boxes[i].overlap_depths(boxes[j])
                if not (depths > 0.0).all():
                    continue
                axis = int(np.argmin(depths))
                delta = 0.5 * float(depths[axis]) + 1e-12
                delta = min(delta, delta_max)
                sign = 1.0 if boxes[i].center[axis] >= boxes[j].center[axis] else -1.0
                step = np.zeros(3)
                step[axis] = sign * delta
                shifts[i] += step
                shifts[j] -= step
                # update the working boxes so later pairs see the new layout
                boxes[i] = Aabb(boxes[i].center + step, boxes[i].extent)
                boxes[j] = Aabb(boxes[j].center - step, boxes[j].extent)
        moved = False
        for i in range(n):
            s = np.clip(shifts[i], -delta_max, delta_max)
            if np.any(s != 0.0):
                moved = True
                m = meshes[i].translated(s)
                if m.z_min() < 0.0:
                    m = m.translated([0.0, 0.0, -m.z_min()])
                meshes[i] = m
        if not moved:
            break
    if report is not None:
        boxes = [aabb(m) for m in meshes]
        residual = []
        for i in range(n):
            for j in range(i + 1, n):
                depths = boxes[i].overlap_depths(boxes[j])
                if (depths > padding).all():
                    residual.append({"pair": [meshes[i].object_id,
                                              meshes[j].object_id],
                                     "depth": float(depths.min())})
        report.residual_overlaps = residual
    return meshes
