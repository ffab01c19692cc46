"""Shared mesh fixtures and helpers."""

import math

import numpy as np
import pytest

from physweave.geom import TriMesh

CUBE_FACES = np.array([
    [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
    [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
    [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
])


def box_mesh(center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 1.0), object_id=2):
    c = np.asarray(center, dtype=np.float64)
    half = np.asarray(size, dtype=np.float64) / 2.0
    verts = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                      for sz in (-1, 1)], dtype=np.float64) * half + c
    return TriMesh(verts, CUBE_FACES, object_id)


def sphere_mesh(center=(0.0, 0.0, 0.0), radius=0.5, rings=10, sectors=16,
                object_id=2):
    c = np.asarray(center, dtype=np.float64)
    verts = [c + [0.0, 0.0, radius]]
    for i in range(1, rings):
        phi = math.pi * i / rings
        for j in range(sectors):
            theta = 2.0 * math.pi * j / sectors
            verts.append(c + radius * np.array([
                math.sin(phi) * math.cos(theta),
                math.sin(phi) * math.sin(theta),
                math.cos(phi)]))
    verts.append(c + [0.0, 0.0, -radius])
    faces = []
    for j in range(sectors):
        faces.append([0, 1 + j, 1 + (j + 1) % sectors])
    for i in range(rings - 2):
        a = 1 + i * sectors
        b = 1 + (i + 1) * sectors
        for j in range(sectors):
            j2 = (j + 1) % sectors
            faces.append([a + j, b + j, b + j2])
            faces.append([a + j, b + j2, a + j2])
    bottom = len(verts) - 1
    a = 1 + (rings - 2) * sectors
    for j in range(sectors):
        faces.append([bottom, a + (j + 1) % sectors, a + j])
    return TriMesh(np.array(verts), np.array(faces), object_id)


def octahedron_mesh(center=(0.0, 0.0, 0.0), radius=1.0, object_id=2):
    c = np.asarray(center, dtype=np.float64)
    verts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0],
                      [0, 0, 1], [0, 0, -1]], dtype=np.float64) * radius + c
    faces = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                      [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return TriMesh(verts, faces, object_id)


@pytest.fixture
def unit_cube():
    return box_mesh(center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 1.0))


def write_scene(scene_dir, objects, meshes, forces=(), sim=None,
                background_size=64):
    """Materialize a scene bundle: config.json, meshes/, background.png."""
    import json

    from physweave.geom import save_obj
    from physweave.images import save_png

    scene_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (spec, mesh) in enumerate(zip(objects, meshes)):
        ref = f"meshes/obj_{i:03d}.obj"
        save_obj(mesh, scene_dir / ref)
        entry = {"index": i, "mesh_ref": ref}
        entry.update(spec)
        entries.append(entry)
    config = {"objects": entries, "forces": list(forces)}
    if sim:
        config["sim"] = sim
    (scene_dir / "config.json").write_text(json.dumps(config, indent=2))
    g = np.linspace(0.2, 0.8, background_size)
    col = np.repeat(g[None, :, None], background_size, axis=0)
    bg = np.concatenate([col, col * 0.9, col * 0.8], axis=2)
    save_png(bg, scene_dir / "background.png")
    return scene_dir
