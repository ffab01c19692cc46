"""XPBD particle/cloth solver: predict, project, update velocities.

Distance (stretch) and cross-edge (bending) constraints share one
Gauss-Seidel projection kernel with per-constraint compliance; pinned
particles carry zero inverse mass and are never integrated, so they stay
bit-stationary.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .forcefields import total_field_accel


@njit(cache=True)
def _project_constraints(p, invmass, idx, rest, compliance, lam, dt):
    for c in range(idx.shape[0]):
        i = idx[c, 0]
        j = idx[c, 1]
        wi = invmass[i]
        wj = invmass[j]
        wsum = wi + wj
        if wsum == 0.0:
            continue
        dx = p[i, 0] - p[j, 0]
        dy = p[i, 1] - p[j, 1]
        dz = p[i, 2] - p[j, 2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        if d < 1e-12:
            continue
        cval = d - rest[c]
        alpha = compliance[c] / (dt * dt)
        dlam = (-cval - alpha * lam[c]) / (wsum + alpha)
        lam[c] += dlam
        nx = dx / d
        ny = dy / d
        nz = dz / d
        p[i, 0] += wi * dlam * nx
        p[i, 1] += wi * dlam * ny
        p[i, 2] += wi * dlam * nz
        p[j, 0] -= wj * dlam * nx
        p[j, 1] -= wj * dlam * ny
        p[j, 2] -= wj * dlam * nz


def _collide_bodies(p, bodies, margin: float, free) -> None:
    """Kinematic one-way push-out of free particles from rigid proxies."""
    for body in bodies:
        if body.proxy == "sphere":
            delta = p - body.x
            dist = np.linalg.norm(delta, axis=1)
            r = body.radius + margin
            hit = free & (dist < r)
            if hit.any():
                d = np.maximum(dist[hit], 1e-12)
                p[hit] = body.x + delta[hit] / d[:, None] * r
        else:
            local = (p - body.x) @ body.R
            half = body.half_extent + margin
            inside = free & (np.abs(local) < half).all(axis=1)
            if not inside.any():
                continue
            q = local[inside]
            gap = half - np.abs(q)
            axis = np.argmin(gap, axis=1)
            rows = np.arange(len(q))
            sign = np.where(q[rows, axis] >= 0.0, 1.0, -1.0)
            q[rows, axis] = sign * half[axis]
            local[inside] = q
            p[inside] = local[inside] @ body.R.T + body.x


def step_pbd(state, dt: float, frame: int, substep: int,
             iterations: int | None = None) -> None:
    """One XPBD substep with ``iterations`` Gauss-Seidel projection passes."""
    pbd = state.pbd
    if pbd is None or len(pbd) == 0:
        return
    iters = iterations if iterations is not None else state.pbd_iterations
    flags = state.active_field_flags(frame)
    t_sec = (frame + substep / max(state.substeps, 1)) * state.dt
    free = pbd.invmass > 0.0
    accel = total_field_accel(state.fields, flags, pbd.x, pbd.v, t_sec,
                              frame, substep, state.seed)
    pbd.v[free] += accel[free] * dt
    pbd.v[free] *= (1.0 - pbd.air_damp[free])[:, None]
    p = pbd.x.copy()
    p[free] += pbd.v[free] * dt
    lam = np.zeros(len(pbd.cons_idx))
    for _ in range(max(1, iters)):
        if len(pbd.cons_idx):
            _project_constraints(p, pbd.invmass, pbd.cons_idx, pbd.cons_rest,
                                 pbd.cons_compliance, lam, dt)
        below = free & (p[:, 2] < 0.0)  # ground projection, free only
        p[below, 2] = 0.0
    if state.bodies:
        _collide_bodies(p, state.bodies, pbd.particle_size, free)
        below = free & (p[:, 2] < 0.0)
        p[below, 2] = 0.0
    pbd.v[free] = (p[free] - pbd.x[free]) / dt
    pbd.x[free] = p[free]
