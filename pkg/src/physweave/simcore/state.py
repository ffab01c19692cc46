"""Simulation state containers and scene building.

A SimState owns rigid bodies, one shared MPM particle pool, one shared PBD
particle pool with its constraints, and the force-field roster. States are
plain mutable arrays; ``clone`` gives an independent deep copy for reset /
replay, and snapshots for rendering are produced by the loop module.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import ConfigError
from ..geom import Aabb, TriMesh, aabb, mesh_volume, surface_area
from ..sceneconfig import SceneConfig

MPM_DOMAIN = (-2.0, 2.0)
DEFAULT_PARTICLE_SIZE = 0.01
MPM_KIND_CODES = {"mpm_elastic": 0, "mpm_elastoplastic": 1, "mpm_sand": 2,
                  "mpm_liquid": 3, "mpm_snow": 0, "mpm_muscle": 0}


@dataclass
class RigidBody:
    object_id: int
    x: np.ndarray                     # COM position
    v: np.ndarray
    mass: float
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    inertia_body: np.ndarray = field(default_factory=lambda: np.ones(3))
    mu: float = 0.7
    fixed: bool = False
    proxy: str = "box"                # "box" | "sphere"
    half_extent: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))
    radius: float = 0.5
    mesh_local: TriMesh | None = None  # vertices relative to COM
    color: np.ndarray = field(default_factory=lambda: np.array([0.7, 0.7, 0.7]))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).copy()
        self.v = np.asarray(self.v, dtype=np.float64).copy()
        self.R = np.asarray(self.R, dtype=np.float64).copy()
        self.w = np.asarray(self.w, dtype=np.float64).copy()
        self.half_extent = np.asarray(self.half_extent, dtype=np.float64).copy()
        if not self.fixed and self.mass <= 0:
            raise ConfigError("non-fixed rigid body needs positive mass")

    def lowest_z(self) -> float:
        if self.proxy == "sphere":
            return float(self.x[2] - self.radius)
        corners = self._corners()
        return float(corners[:, 2].min())

    def _corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                          for sz in (-1, 1)], dtype=np.float64)
        return self.x + (signs * self.half_extent) @ self.R.T

    def world_aabb(self) -> Aabb:
        if self.proxy == "sphere":
            return Aabb(self.x, np.full(3, 2.0 * self.radius))
        c = self._corners()
        lo, hi = c.min(axis=0), c.max(axis=0)
        return Aabb((lo + hi) / 2.0, hi - lo)

    def world_mesh(self) -> TriMesh | None:
        if self.mesh_local is None:
            return None
        return TriMesh(self.mesh_local.vertices @ self.R.T + self.x,
                       self.mesh_local.faces, self.object_id)


@dataclass
class MpmParticles:
    x: np.ndarray          # (N, 3)
    v: np.ndarray
    F: np.ndarray          # (N, 3, 3)
    C: np.ndarray          # (N, 3, 3) affine velocity
    Jp: np.ndarray         # (N,) liquid volume ratio (1 elsewhere)
    mass: np.ndarray
    vol: np.ndarray
    mu_p: np.ndarray
    lam_p: np.ndarray
    kind: np.ndarray       # (N,) uint8: 0 elastic, 1 elastoplastic, 2 sand, 3 liquid
    yield_stress: np.ndarray
    sand_alpha: np.ndarray
    viscous_damp: np.ndarray
    object_id: np.ndarray  # (N,) int32
    colors: dict = field(default_factory=dict)
    particle_size: float = DEFAULT_PARTICLE_SIZE

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class PbdParticles:
    x: np.ndarray
    v: np.ndarray
    invmass: np.ndarray
    air_damp: np.ndarray
    cons_idx: np.ndarray         # (M, 2) int64
    cons_rest: np.ndarray
    cons_compliance: np.ndarray
    object_id: np.ndarray
    render_meshes: list = field(default_factory=list)  # (oid, offset, faces, color)
    colors: dict = field(default_factory=dict)
    particle_size: float = DEFAULT_PARTICLE_SIZE

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class SimState:
    bodies: list = field(default_factory=list)
    mpm: MpmParticles | None = None
    pbd: PbdParticles | None = None
    fields: list = field(default_factory=list)
    field_enabled: list = field(default_factory=list)
    frame: int = 0
    dt: float = 0.004
    substeps: int = 10
    pbd_iterations: int = 10
    seed: int = 0
    mpm_domain: tuple = MPM_DOMAIN
    mpm_dx: float = 2.0 * DEFAULT_PARTICLE_SIZE
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.field_enabled:
            self.field_enabled = [True] * len(self.fields)

    def clone(self) -> "SimState":
        return copy.deepcopy(self)

    def active_field_flags(self, frame: int) -> list:
        return [en and (f.start_frame < 0 or frame >= f.start_frame)
                for f, en in zip(self.fields, self.field_enabled)]

    def total_particle_mass(self) -> float:
        total = 0.0
        if self.mpm is not None:
            total += float(self.mpm.mass.sum())
        if self.pbd is not None:
            inv = self.pbd.invmass
            total += float((1.0 / inv[inv > 0]).sum())
        return total

    def object_stats(self) -> list:
        """(object_id, Aabb, z_min) per object, for penetration/support
        metrics."""
        stats = []
        for body in self.bodies:
            box = body.world_aabb()
            stats.append((body.object_id, box, float(box.lo[2])))
        for pool in (self.mpm, self.pbd):
            if pool is None or len(pool) == 0:
                continue
            for oid in np.unique(pool.object_id):
                pts = pool.x[pool.object_id == oid]
                lo, hi = pts.min(axis=0), pts.max(axis=0)
                pad = pool.particle_size
                stats.append((int(oid), Aabb((lo + hi) / 2.0, hi - lo + pad),
                              float(lo[2])))
        return stats


def lame_parameters(E: float, nu: float) -> tuple[float, float]:
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


def sand_alpha(friction_angle_deg: float) -> float:
    s = math.sin(math.radians(friction_angle_deg))
    return math.sqrt(2.0 / 3.0) * 2.0 * s / (3.0 - s)


@njit(cache=True)
def _ray_parity(points, tri):
    """Even-odd point-in-mesh test with a +x ray (Moller-Trumbore)."""
    n = points.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        ox, oy, oz = points[i, 0], points[i, 1], points[i, 2]
        hits = 0
        for t in range(tri.shape[0]):
            ax, ay, az = tri[t, 0, 0], tri[t, 0, 1], tri[t, 0, 2]
            e1x = tri[t, 1, 0] - ax; e1y = tri[t, 1, 1] - ay; e1z = tri[t, 1, 2] - az
            e2x = tri[t, 2, 0] - ax; e2y = tri[t, 2, 1] - ay; e2z = tri[t, 2, 2] - az
            # ray dir (1,0,0): p = dir x e2 = (0, -e2z, e2y)
            px_, py_, pz_ = 0.0, -e2z, e2y
            det = e1x * px_ + e1y * py_ + e1z * pz_
            if det > -1e-12 and det < 1e-12:
                continue
            inv = 1.0 / det
            tx, ty, tz = ox - ax, oy - ay, oz - az
            u = (tx * px_ + ty * py_ + tz * pz_) * inv
            if u < 0.0 or u > 1.0:
                continue
            qx = ty * e1z - tz * e1y
            qy = tz * e1x - tx * e1z
            qz = tx * e1y - ty * e1x
            vv = qx * 1.0 * inv  # dir . q with dir=(1,0,0)
            if vv < 0.0 or u + vv > 1.0:
                continue
            dist = (e2x * qx + e2y * qy + e2z * qz) * inv
            if dist > 0.0:
                hits += 1
        out[i] = hits & 1
    return out


def sample_mesh_interior(mesh: TriMesh, spacing: float) -> np.ndarray:
    """Lattice points strictly inside a closed mesh, ``spacing`` apart."""
    box = aabb(mesh)
    lo, hi = box.lo, box.hi
    axes = [np.arange(lo[a] + spacing / 2.0, hi[a], spacing) for a in range(3)]
    if any(len(ax) == 0 for ax in axes):
        return mesh.vertices.mean(axis=0)[None, :].copy()
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    tri = np.ascontiguousarray(mesh.vertices[mesh.faces])
    # tiny irrational query offset so lattice rays avoid edges/diagonals
    probe = pts + spacing * np.array([0.0, 1.37e-4, 2.41e-4])
    inside = _ray_parity(np.ascontiguousarray(probe), tri).astype(bool)
    if not inside.any():
        return mesh.vertices.mean(axis=0)[None, :].copy()
    return pts[inside]


def make_mpm_particles(positions, material, object_id: int,
                       color=(0.7, 0.7, 0.7),
                       particle_size: float = DEFAULT_PARTICLE_SIZE,
                       velocity=(0.0, 0.0, 0.0)) -> MpmParticles:
    """Particle pool for a single object from sampled positions."""
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3).copy()
    n = len(x)
    kind_code = MPM_KIND_CODES.get(material.kind)
    if kind_code is None:
        raise ConfigError(f"{material.kind} is not an MPM material")
    E = material.E if material.E is not None else 3e5
    nu = material.nu if material.nu is not None else 0.2
    mu, lam = lame_parameters(E, nu)
    vol = particle_size ** 3
    extras = material.extras
    ys = float(extras.get("yield_stress", 1e4))
    alpha = sand_alpha(float(extras.get("friction_angle", 45.0)))
    visc = 0.1 if extras.get("viscous", False) else 0.0
    return MpmParticles(
        x=x,
        v=np.tile(np.asarray(velocity, dtype=np.float64), (n, 1)),
        F=np.tile(np.eye(3), (n, 1, 1)),
        C=np.zeros((n, 3, 3)),
        Jp=np.ones(n),
        mass=np.full(n, material.rho * vol),
        vol=np.full(n, vol),
        mu_p=np.full(n, mu),
        lam_p=np.full(n, lam),
        kind=np.full(n, kind_code, dtype=np.uint8),
        yield_stress=np.full(n, ys),
        sand_alpha=np.full(n, alpha),
        viscous_damp=np.full(n, visc),
        object_id=np.full(n, object_id, dtype=np.int32),
        colors={object_id: np.asarray(color, dtype=np.float64)},
        particle_size=particle_size,
    )


def merge_mpm(pools: list) -> MpmParticles | None:
    pools = [p for p in pools if p is not None and len(p)]
    if not pools:
        return None
    colors = {}
    for p in pools:
        colors.update(p.colors)
    cat = lambda attr: np.concatenate([getattr(p, attr) for p in pools])
    return MpmParticles(
        x=cat("x"), v=cat("v"), F=cat("F"), C=cat("C"), Jp=cat("Jp"),
        mass=cat("mass"), vol=cat("vol"), mu_p=cat("mu_p"), lam_p=cat("lam_p"),
        kind=cat("kind"), yield_stress=cat("yield_stress"),
        sand_alpha=cat("sand_alpha"), viscous_damp=cat("viscous_damp"),
        object_id=cat("object_id"), colors=colors,
        particle_size=pools[0].particle_size)


def _mesh_edges(faces: np.ndarray) -> np.ndarray:
    e = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def _bending_pairs(faces: np.ndarray) -> np.ndarray:
    """Opposite-vertex pairs across each interior edge (cheap hinge model)."""
    edge_map: dict = {}
    for f in faces:
        for a, b, c in ((f[0], f[1], f[2]), (f[1], f[2], f[0]),
                        (f[2], f[0], f[1])):
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append(int(c))
    pairs = [tuple(sorted(v[:2])) for v in edge_map.values() if len(v) >= 2]
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.array(pairs, dtype=np.int64), axis=0)


def make_pbd_from_mesh(mesh: TriMesh, material, object_id: int,
                       color=(0.7, 0.7, 0.7), fix_top_ratio=None,
                       particle_size: float = DEFAULT_PARTICLE_SIZE
                       ) -> PbdParticles:
    """PBD particles from mesh vertices: edge distance constraints plus
    (for cloth) cross-edge bending constraints; topmost particles optionally
    pinned."""
    n = mesh.num_vertices
    x = mesh.vertices.copy()
    extras = material.extras
    if material.kind == "pbd_cloth":
        per_particle = material.rho * surface_area(mesh) / n  # rho in kg/m^2
        stretch = float(extras.get("stretch_compliance", 1e-7))
        bending = float(extras.get("bending_compliance", 1e-5))
        air = float(extras.get("air_resistance", 1e-3))
    elif material.kind == "pbd_elastic":
        vol = abs(mesh_volume(mesh))
        if vol < 1e-12:
            vol = float(np.prod(np.maximum(aabb(mesh).extent, 1e-3)))
        per_particle = material.rho * vol / n
        stretch = float(extras.get("stretch_compliance", 0.0))
        bending = float(extras.get("bending_compliance", 0.0))
        air = 0.0
    else:  # pbd_particle / pbd_liquid (relaxation solver out of scope)
        vol = abs(mesh_volume(mesh))
        if vol < 1e-12:
            vol = float(np.prod(np.maximum(aabb(mesh).extent, 1e-3)))
        per_particle = material.rho * vol / n
        stretch = bending = None
        air = 0.0
    invmass = np.full(n, 1.0 / max(per_particle, 1e-12))
    if fix_top_ratio:
        k = max(1, int(round(fix_top_ratio * n)))
        order = np.lexsort((np.arange(n), -x[:, 2]))
        invmass[order[:k]] = 0.0
    if stretch is not None:
        edges = _mesh_edges(mesh.faces)
        rest_e = np.linalg.norm(x[edges[:, 0]] - x[edges[:, 1]], axis=1)
        comp_e = np.full(len(edges), stretch)
        idx, rest, comp = [edges], [rest_e], [comp_e]
        if material.kind == "pbd_cloth":
            bend = _bending_pairs(mesh.faces)
            if len(bend):
                idx.append(bend)
                rest.append(np.linalg.norm(x[bend[:, 0]] - x[bend[:, 1]], axis=1))
                comp.append(np.full(len(bend), bending))
        cons_idx = np.vstack(idx)
        cons_rest = np.concatenate(rest)
        cons_comp = np.concatenate(comp)
    else:
        cons_idx = np.zeros((0, 2), dtype=np.int64)
        cons_rest = np.zeros(0)
        cons_comp = np.zeros(0)
    return PbdParticles(
        x=x, v=np.zeros((n, 3)), invmass=invmass,
        air_damp=np.full(n, air),
        cons_idx=cons_idx.astype(np.int64), cons_rest=cons_rest,
        cons_compliance=cons_comp,
        object_id=np.full(n, object_id, dtype=np.int32),
        render_meshes=[(object_id, 0, mesh.faces.copy(),
                        np.asarray(color, dtype=np.float64))],
        colors={object_id: np.asarray(color, dtype=np.float64)},
        particle_size=particle_size)


def merge_pbd(pools: list) -> PbdParticles | None:
    pools = [p for p in pools if p is not None and len(p)]
    if not pools:
        return None
    offsets = np.cumsum([0] + [len(p) for p in pools[:-1]])
    colors = {}
    render = []
    idx_parts, rest_parts, comp_parts = [], [], []
    for off, p in zip(offsets, pools):
        colors.update(p.colors)
        for oid, o2, faces, color in p.render_meshes:
            render.append((oid, int(off) + o2, faces, color))
        if len(p.cons_idx):
            idx_parts.append(p.cons_idx + off)
            rest_parts.append(p.cons_rest)
            comp_parts.append(p.cons_compliance)
    cat = lambda attr: np.concatenate([getattr(p, attr) for p in pools])
    return PbdParticles(
        x=cat("x"), v=cat("v"), invmass=cat("invmass"), air_damp=cat("air_damp"),
        cons_idx=(np.vstack(idx_parts) if idx_parts
                  else np.zeros((0, 2), dtype=np.int64)),
        cons_rest=(np.concatenate(rest_parts) if rest_parts else np.zeros(0)),
        cons_compliance=(np.concatenate(comp_parts) if comp_parts
                         else np.zeros(0)),
        object_id=cat("object_id"), render_meshes=render, colors=colors,
        particle_size=pools[0].particle_size)


def make_rigid_from_mesh(mesh: TriMesh, material, object_id: int,
                         color=(0.7, 0.7, 0.7), fixed=False) -> RigidBody:
    box = aabb(mesh)
    com = mesh.vertices.mean(axis=0)
    vol = abs(mesh_volume(mesh))
    if vol < 1e-12:
        vol = float(np.prod(np.maximum(box.extent, 1e-3)))
    mass = material.rho * vol
    half = box.extent / 2.0
    # near-isotropic meshes whose vertices sit on a common radius -> sphere
    dists = np.linalg.norm(mesh.vertices - com, axis=1)
    spherical = (half.max() > 0 and half.min() / half.max() > 0.9
                 and dists.std() / max(dists.mean(), 1e-12) < 0.05)
    mu_f = float(material.extras.get("friction", 0.7))
    if spherical:
        r = float(dists.mean())
        inertia = np.full(3, 0.4 * mass * r * r)
        proxy, radius = "sphere", r
    else:
        e = box.extent
        inertia = mass / 12.0 * np.array([e[1] ** 2 + e[2] ** 2,
                                          e[0] ** 2 + e[2] ** 2,
                                          e[0] ** 2 + e[1] ** 2])
        proxy, radius = "box", float(half.max())
    return RigidBody(object_id=object_id, x=com, v=np.zeros(3), mass=mass,
                     inertia_body=inertia, mu=mu_f, fixed=fixed, proxy=proxy,
                     half_extent=half, radius=radius,
                     mesh_local=TriMesh(mesh.vertices - com, mesh.faces,
                                        object_id),
                     color=np.asarray(color, dtype=np.float64))


def build_sim(config: SceneConfig, meshes: dict, seed: int = 0,
              particle_size: float | None = None) -> SimState:
    """Route configured objects to their solvers and assemble a SimState.

    ``meshes`` maps object index -> aligned TriMesh. Materials whose
    constitutive model is out of scope (mpm_snow, mpm_muscle run as elastic;
    pbd_liquid runs as free particles) get a diagnostics note.
    """
    h = particle_size or DEFAULT_PARTICLE_SIZE
    bodies = []
    mpm_pools = []
    pbd_pools = []
    notes = []
    for obj in config.objects:
        mesh = meshes.get(obj.index)
        if mesh is None:
            raise ConfigError(f"no mesh supplied for object {obj.index}")
        mesh = TriMesh(mesh.vertices, mesh.faces, object_id=obj.index + 2)
        kind = obj.material.kind
        color = np.asarray(obj.surface_color)
        if kind == "rigid":
            bodies.append(make_rigid_from_mesh(mesh, obj.material,
                                               mesh.object_id, color,
                                               fixed=obj.fixed))
        elif kind.startswith("mpm_"):
            if kind in ("mpm_snow", "mpm_muscle"):
                notes.append(f"object {obj.index}: {kind} constitutive model "
                             "not implemented; simulating as mpm_elastic")
            pts = sample_mesh_interior(mesh, h)
            mpm_pools.append(make_mpm_particles(pts, obj.material,
                                                mesh.object_id, color, h))
        elif kind.startswith("pbd_"):
            if kind == "pbd_liquid":
                notes.append(f"object {obj.index}: pbd_liquid relaxation "
                             "solver not implemented; free particles only")
            pbd_pools.append(make_pbd_from_mesh(mesh, obj.material,
                                                mesh.object_id, color,
                                                obj.fix_top_ratio, h))
        else:
            raise ConfigError(f"unroutable material kind {kind!r}")
    state = SimState(bodies=bodies, mpm=merge_mpm(mpm_pools),
                     pbd=merge_pbd(pbd_pools), fields=list(config.forces),
                     dt=float(config.sim.get("dt", 0.004)),
                     substeps=int(config.sim.get("substeps", 10)),
                     seed=seed, mpm_dx=2.0 * h)
    if notes:
        state.diagnostics["material_notes"] = notes
    return state
