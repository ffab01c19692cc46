"""MLS-MPM continuum solver (quadratic B-splines, APIC transfer).

One shared background grid carries all MPM particles so different materials
interact. Per-particle constitutive models: fixed corotated elasticity,
corotated + von Mises return mapping (elastoplastic), Drucker-Prager sand
on Hencky strain, and a weakly compressible J-based liquid.

The grid is a dense block spanning just the occupied region each substep
(clamped to the global domain), so memory stays proportional to the scene.
"""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from . import _mpmkernel as mk
from .forcefields import total_field_accel

_WALL_CELLS = 3


def step_mpm(state, dt: float, frame: int, substep: int) -> None:
    """One MLS-MPM cycle: P2G scatter, grid momentum update + boundaries,
    G2P gather. External fields act as grid accelerations; rigid proxies
    override grid velocities one-way (kinematic coupling)."""
    mpm = state.mpm
    if mpm is None or len(mpm) == 0:
        return
    dx = state.mpm_dx
    inv_dx = 1.0 / dx
    dom_lo, dom_hi = state.mpm_domain
    if mpm.x.min() < dom_lo or mpm.x.max() > dom_hi:
        raise GeometryError("MPM particles left the simulation domain")
    base = np.floor(mpm.x * inv_dx - 0.5).astype(np.int64)
    o = base.min(axis=0) - 1
    top = base.max(axis=0) + 4
    dims = top - o
    grid_v = np.zeros((dims[0], dims[1], dims[2], 3))
    grid_m = np.zeros((dims[0], dims[1], dims[2]))
    mk.p2g(mpm.x, mpm.v, mpm.F, mpm.C, mpm.Jp, mpm.mass, mpm.vol, mpm.mu_p,
           mpm.lam_p, mpm.kind, mpm.yield_stress, mpm.sand_alpha, dt, dx,
           inv_dx, o[0], o[1], o[2], grid_v, grid_m)

    occupied = grid_m > 0.0
    grid_v[occupied] /= grid_m[occupied][:, None]

    # external force fields evaluated on occupied grid nodes
    flags = state.active_field_flags(frame)
    if any(flags):
        idx = np.argwhere(occupied)
        node_pos = (idx + o) * dx
        t_sec = (frame + substep / max(state.substeps, 1)) * state.dt
        accel = total_field_accel(state.fields, flags, node_pos,
                                  grid_v[occupied], t_sec, frame, substep,
                                  state.seed)
        grid_v[occupied] += accel * dt

    # sticky boundaries: ground plane z <= 0 and the domain walls
    nz = np.arange(dims[2]) + o[2]
    ground = nz * dx <= 0.0
    if ground.any():
        grid_v[:, :, ground, :] = 0.0
    for axis in range(3):
        coords = (np.arange(dims[axis]) + o[axis]) * dx
        sticky = (coords <= dom_lo + _WALL_CELLS * dx) \
            | (coords >= dom_hi - _WALL_CELLS * dx)
        if sticky.any():
            index = [slice(None)] * 3
            index[axis] = sticky
            grid_v[tuple(index)] = 0.0

    # one-way rigid coupling: nodes inside a body move with it
    if state.bodies and occupied.any():
        idx = np.argwhere(occupied)
        node_pos = (idx + o) * dx
        for body in state.bodies:
            if body.proxy == "sphere":
                inside = np.linalg.norm(node_pos - body.x, axis=1) \
                    <= body.radius + 0.5 * dx
            else:
                local = (node_pos - body.x) @ body.R
                inside = (np.abs(local) <= body.half_extent + 0.5 * dx).all(axis=1)
            if inside.any():
                sel = idx[inside]
                grid_v[sel[:, 0], sel[:, 1], sel[:, 2]] = body.v

    escaped = np.zeros(1, dtype=np.int64)
    margin = _WALL_CELLS * dx
    mk.g2p(mpm.x, mpm.v, mpm.C, grid_v, dt, dx, inv_dx, o[0], o[1], o[2],
           dom_lo + margin, dom_hi - margin, escaped)
    if escaped[0]:
        state.diagnostics["mpm_escaped"] = \
            state.diagnostics.get("mpm_escaped", 0) + int(escaped[0])
    visc = mpm.viscous_damp > 0.0
    if visc.any():
        mpm.v[visc] *= (1.0 - mpm.viscous_damp[visc])[:, None]
