"""Fixed-timestep stepping loop with frame-scheduled force activation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import SimulationDiverged
from ..geom import TriMesh
from .mpm import step_mpm
from .pbd import step_pbd
from .rigid import step_rigid


@dataclass
class StepReport:
    frame: int
    sim_time: float
    active_fields: list
    timings_ms: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"frame": self.frame, "sim_time": self.sim_time,
                "active_fields": self.active_fields,
                "timings_ms": self.timings_ms,
                "diagnostics": self.diagnostics}


@dataclass
class SceneView:
    """Immutable render/metrics snapshot of one frame."""

    frame: int
    meshes: list                    # transformed TriMesh per mesh-backed object
    point_sets: list                # (positions, object_id, color, radius)
    object_stats: list              # (object_id, Aabb, z_min)


def _check_finite(state, frame: int) -> None:
    for body in state.bodies:
        if not (np.isfinite(body.x).all() and np.isfinite(body.v).all()):
            raise SimulationDiverged("rigid", frame)
    if state.pbd is not None and len(state.pbd):
        if not (np.isfinite(state.pbd.x).all()
                and np.isfinite(state.pbd.v).all()):
            raise SimulationDiverged("pbd", frame)
    if state.mpm is not None and len(state.mpm):
        if not (np.isfinite(state.mpm.x).all()
                and np.isfinite(state.mpm.v).all()
                and np.isfinite(state.mpm.F).all()):
            raise SimulationDiverged("mpm", frame)


def sim_step(state) -> StepReport:
    """Advance one frame: activate due force fields and run every solver for
    ``substeps`` sub-intervals of dt. Raises SimulationDiverged on NaN."""
    frame = state.frame
    sub_dt = state.dt / max(state.substeps, 1)
    timings = {"rigid": 0.0, "pbd": 0.0, "mpm": 0.0}
    for s in range(state.substeps):
        t0 = time.perf_counter()
        step_rigid(state, sub_dt, frame, s)
        t1 = time.perf_counter()
        step_pbd(state, sub_dt, frame, s)
        t2 = time.perf_counter()
        step_mpm(state, sub_dt, frame, s)
        t3 = time.perf_counter()
        timings["rigid"] += (t1 - t0) * 1e3
        timings["pbd"] += (t2 - t1) * 1e3
        timings["mpm"] += (t3 - t2) * 1e3
    _check_finite(state, frame)
    state.frame = frame + 1
    return StepReport(frame=frame, sim_time=state.frame * state.dt,
                      active_fields=[i for i, on in
                                     enumerate(state.active_field_flags(frame))
                                     if on],
                      timings_ms={k: round(v, 3) for k, v in timings.items()},
                      diagnostics=dict(state.diagnostics))


def scene_view(state) -> SceneView:
    """Copy out everything the renderer and the metrics logger need."""
    meshes = []
    for body in state.bodies:
        world = body.world_mesh()
        if world is not None:
            meshes.append(world)
    point_sets = []
    pbd = state.pbd
    if pbd is not None and len(pbd):
        covered = set()
        for oid, offset, faces, color in pbd.render_meshes:
            sel = pbd.object_id == oid
            verts = pbd.x[sel]
            meshes.append(TriMesh(verts.copy(), faces, object_id=int(oid)))
            covered.add(int(oid))
        for oid in np.unique(pbd.object_id):
            if int(oid) not in covered:
                point_sets.append((pbd.x[pbd.object_id == oid].copy(),
                                   int(oid), pbd.colors.get(int(oid)),
                                   pbd.particle_size))
    mpm = state.mpm
    if mpm is not None and len(mpm):
        for oid in np.unique(mpm.object_id):
            color = mpm.colors.get(int(oid), np.array([0.6, 0.6, 0.6]))
            point_sets.append((mpm.x[mpm.object_id == oid].copy(), int(oid),
                               color, mpm.particle_size))
    return SceneView(frame=state.frame, meshes=meshes, point_sets=point_sets,
                     object_stats=state.object_stats())


def run_sim(state, steps: int, on_frame=None):
    """Run ``steps`` sequential sim_steps; ``on_frame(view, report)`` gets an
    immutable snapshot after each one. Returns the final state."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    for _ in range(steps):
        report = sim_step(state)
        if on_frame is not None:
            on_frame(scene_view(state), report)
    return state
