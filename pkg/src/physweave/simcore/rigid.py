"""Free-body rigid dynamics with impulse contacts and Coulomb friction.

Bodies are 6-DOF free bodies (no joints, no actuation). Force fields are
evaluated at the center of mass; contacts against the ground plane and
between proxy shapes are resolved at the velocity level with zero
restitution plus direct positional de-penetration, which keeps resting
penetration at numerical zero.
"""

from __future__ import annotations

import numpy as np

from ..geom import rotation_about_axis
from .forcefields import total_field_accel

CONTACT_SLOP = 1e-6


def _ground_contact(body, dt: float) -> None:
    low = body.lowest_z()
    if low > CONTACT_SLOP:
        return
    vn = body.v[2]
    jn = 0.0
    if vn < 0.0:
        jn = -body.mass * vn  # restitution 0
        body.v[2] = 0.0
    # Coulomb friction against the normal impulse accumulated this substep
    vt = body.v[:2]
    speed = np.linalg.norm(vt)
    if speed > 0.0 and jn > 0.0:
        needed = body.mass * speed
        budget = body.mu * jn
        if needed <= budget:
            vt[:] = 0.0
        else:
            vt -= (budget / body.mass) * (vt / speed)


def _pair_contact(a, b) -> None:
    if a.fixed and b.fixed:
        return
    if a.proxy == "sphere" and b.proxy == "sphere":
        delta = a.x - b.x
        dist = float(np.linalg.norm(delta))
        pen = a.radius + b.radius - dist
        if pen <= 0.0:
            return
        n = delta / dist if dist > 1e-12 else np.array([0.0, 0.0, 1.0])
    else:
        box_a, box_b = a.world_aabb(), b.world_aabb()
        depths = box_a.overlap_depths(box_b)
        if not (depths > 0.0).all():
            return
        axis = int(np.argmin(depths))
        pen = float(depths[axis])
        n = np.zeros(3)
        n[axis] = 1.0 if a.x[axis] >= b.x[axis] else -1.0
    inv_a = 0.0 if a.fixed else 1.0 / a.mass
    inv_b = 0.0 if b.fixed else 1.0 / b.mass
    inv_sum = inv_a + inv_b
    if inv_sum <= 0.0:
        return
    vrel = a.v - b.v
    vn = float(vrel @ n)
    jn = 0.0
    if vn < 0.0:
        jn = -vn / inv_sum
        a.v += jn * inv_a * n
        b.v -= jn * inv_b * n
    # friction on the tangential relative velocity
    vrel = a.v - b.v
    vt = vrel - (vrel @ n) * n
    speed = float(np.linalg.norm(vt))
    if speed > 1e-12 and jn > 0.0:
        mu = min(a.mu, b.mu)
        jt_needed = speed / inv_sum
        jt = min(jt_needed, mu * jn)
        t_hat = vt / speed
        a.v -= jt * inv_a * t_hat
        b.v += jt * inv_b * t_hat
    # positional de-penetration split by inverse mass
    corr = pen * n
    a.x += corr * (inv_a / inv_sum)
    b.x -= corr * (inv_b / inv_sum)


def step_rigid(state, dt: float, frame: int, substep: int) -> None:
    """One rigid substep: integrate field accelerations, resolve contacts,
    advance poses (trapezoidal position update: exact for constant fields)."""
    bodies = state.bodies
    if not bodies:
        return
    flags = state.active_field_flags(frame)
    t_sec = (frame + substep / max(state.substeps, 1)) * state.dt
    for body in bodies:
        if body.fixed:
            continue
        v_old = body.v.copy()
        accel = total_field_accel(state.fields, flags, body.x, body.v,
                                  t_sec, frame, substep, state.seed)
        body.v = body.v + accel * dt
        _ground_contact(body, dt)
        body.x = body.x + 0.5 * dt * (v_old + body.v)
        w_norm = float(np.linalg.norm(body.w))
        if w_norm > 1e-12:
            body.R = rotation_about_axis(body.w / w_norm, w_norm * dt) @ body.R
    n = len(bodies)
    for i in range(n):
        for j in range(i + 1, n):
            _pair_contact(bodies[i], bodies[j])
    for body in bodies:
        if body.fixed:
            continue
        low = body.lowest_z()
        if low < 0.0:
            body.x[2] -= low
