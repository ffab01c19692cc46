"""Multi-solver physics core: rigid bodies, XPBD particles, MLS-MPM."""

from .forcefields import eval_force_field, total_field_accel
from .loop import SceneView, StepReport, run_sim, scene_view, sim_step
from .mpm import step_mpm
from .pbd import step_pbd
from .rigid import step_rigid
from .state import (MpmParticles, PbdParticles, RigidBody, SimState,
                    build_sim, make_mpm_particles, make_pbd_from_mesh,
                    make_rigid_from_mesh, merge_mpm, merge_pbd,
                    sample_mesh_interior)

__all__ = [
    "MpmParticles", "PbdParticles", "RigidBody", "SceneView", "SimState",
    "StepReport", "build_sim", "eval_force_field", "make_mpm_particles",
    "make_pbd_from_mesh", "make_rigid_from_mesh", "merge_mpm", "merge_pbd",
    "run_sim", "sample_mesh_interior", "scene_view", "sim_step", "step_mpm",
    "step_pbd", "step_rigid", "total_field_accel",
]
