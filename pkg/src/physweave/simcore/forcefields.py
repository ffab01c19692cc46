"""Closed-form force-field evaluation (accelerations, N/kg).

All evaluators are vectorized over positions/velocities and deterministic:
the stochastic fields (turbulence phases, per-particle noise) derive their
randomness from a counter-style seed tree keyed by (seed, field id, frame,
substep), so no evaluation order can perturb another field's stream.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..sceneconfig import ForceFieldSpec

_SINGULARITY_EPS = 1e-9


def _as_batch(a) -> tuple[np.ndarray, bool]:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < _SINGULARITY_EPS:
        raise ConfigError(f"zero-length direction {v}")
    return v / n


def _phases(seed: int, field_id: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([seed & 0x7FFFFFFF, field_id])))
    return rng.random(3) * 2.0 * np.pi


def _noise_rng(seed: int, field_id: int, frame: int, substep: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(
        [seed & 0x7FFFFFFF, field_id, max(frame, 0), max(substep, 0)])))


def eval_force_field(spec: ForceFieldSpec, x, v, t_seconds: float = 0.0, *,
                     frame: int | None = None, seed: int = 0,
                     field_id: int = 0, substep: int = 0) -> np.ndarray:
    """Acceleration of the field at positions ``x`` with velocities ``v``.

    Fields whose start_frame has not been reached contribute exactly zero
    (pass ``frame`` to enable the check). Singular points (vortex axis,
    точки force center) evaluate to zero rather than blowing up.
    """
    xs, single = _as_batch(x)
    vs, _ = _as_batch(v)
    if vs.shape != xs.shape:
        vs = np.broadcast_to(vs, xs.shape)
    out = np.zeros_like(xs)
    if frame is not None and spec.start_frame >= 0 and frame < spec.start_frame:
        return out[0] if single else out
    kind = spec.kind
    if kind == "constant":
        out[:] = _unit(np.asarray(spec.direction)) * spec.strength
    elif kind == "wind":
        base = _unit(np.asarray(spec.direction)) * spec.strength
        if spec.position is not None:
            r2 = ((xs - np.asarray(spec.position)) ** 2).sum(axis=1)
            radius = spec.radius if spec.radius else 1.0
            out[:] = base[None, :] * np.exp(-r2 / (radius * radius))[:, None]
        else:
            out[:] = base
    elif kind == "point":
        center = np.asarray(spec.position if spec.position is not None
                            else (0.0, 0.0, 0.0))
        delta = center - xs
        dist = np.linalg.norm(delta, axis=1)
        ok = dist > _SINGULARITY_EPS
        power = spec.falloff_power or 0.0
        mag = np.zeros_like(dist)
        mag[ok] = spec.strength * dist[ok] ** (-power)
        out[ok] = delta[ok] / dist[ok, None] * mag[ok, None]
    elif kind == "drag":
        lin = spec.linear or 0.0
        quad = spec.quadratic or 0.0
        speed = np.linalg.norm(vs, axis=1)
        out[:] = -(lin * vs + quad * speed[:, None] * vs)
    elif kind == "vortex":
        axis = _unit(np.asarray(spec.direction))
        center = np.asarray(spec.position if spec.position is not None
                            else (0.0, 0.0, 0.0))
        rel = xs - center
        radial = rel - (rel @ axis)[:, None] * axis[None, :]
        dist = np.linalg.norm(radial, axis=1)
        ok = dist > _SINGULARITY_EPS
        strength = spec.perpendicular_strength or 0.0
        tangent = np.cross(np.broadcast_to(axis, xs.shape)[ok],
                           radial[ok] / dist[ok, None])
        out[ok] = strength * tangent
    elif kind == "turbulence":
        freq = spec.frequency or 1.0
        phases = _phases(seed, field_id)
        two_pi_f = 2.0 * np.pi * freq
        out[:, 0] = np.sin(two_pi_f * xs[:, 1] + phases[0])
        out[:, 1] = np.sin(two_pi_f * xs[:, 2] + phases[1])
        out[:, 2] = np.sin(two_pi_f * xs[:, 0] + phases[2])
        out *= spec.strength
    elif kind == "noise":
        rng = _noise_rng(seed, field_id, frame if frame is not None else 0,
                         substep)
        out[:] = rng.uniform(-spec.strength, spec.strength, size=xs.shape)
    else:
        raise ConfigError(f"unknown force kind {kind!r}")
    return out[0] if single else out


def total_field_accel(fields, enabled, x, v, t_seconds: float, frame: int,
                      substep: int = 0, seed: int = 0) -> np.ndarray:
    """Sum of all enabled, already-started fields (linearity holds exactly)."""
    xs, single = _as_batch(x)
    total = np.zeros_like(xs)
    for i, spec in enumerate(fields):
        if enabled is not None and not enabled[i]:
            continue
        total += eval_force_field(spec, xs, v, t_seconds, frame=frame,
                                  seed=seed, field_id=i, substep=substep)
    return total[0] if single else total
