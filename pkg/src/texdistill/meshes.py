"""Procedural test meshes: cube (with an authored UV atlas), UV sphere, quad."""

from __future__ import annotations

import numpy as np

from .geometry import Mesh


def cube_mesh(with_uv: bool = False) -> Mesh:
    v = np.array([[x, y, z]
                  for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])
    idx = lambda x, y, z: x * 4 + y * 2 + z
    quads = [
        [idx(0, 0, 0), idx(0, 1, 0), idx(0, 1, 1), idx(0, 0, 1)],  # -x
        [idx(1, 0, 0), idx(1, 0, 1), idx(1, 1, 1), idx(1, 1, 0)],  # +x
        [idx(0, 0, 0), idx(0, 0, 1), idx(1, 0, 1), idx(1, 0, 0)],  # -y
        [idx(0, 1, 0), idx(1, 1, 0), idx(1, 1, 1), idx(0, 1, 1)],  # +y
        [idx(0, 0, 0), idx(1, 0, 0), idx(1, 1, 0), idx(0, 1, 0)],  # -z
        [idx(0, 0, 1), idx(0, 1, 1), idx(1, 1, 1), idx(1, 0, 1)],  # +z
    ]
    faces = []
    for q in quads:
        faces += [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
    uv = None
    if with_uv:
        # 3x2 grid of square charts, one per cube face, inset to keep seams apart
        uv = np.zeros((12, 3, 2))
        tri_a = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        tri_b = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        for fi in range(6):
            cx, cy = fi % 3, fi // 3
            origin = np.array([cx / 3.0, cy / 2.0]) + 0.02
            span = np.array([1.0 / 3.0, 0.5]) - 0.04
            uv[2 * fi] = origin + tri_a * span
            uv[2 * fi + 1] = origin + tri_b * span
    return Mesh(vertices=v, faces=np.array(faces), uv=uv)


def uv_sphere_mesh(n_lat: int = 12, n_lon: int = 24) -> Mesh:
    verts = [[0.0, 0.0, 0.5], [0.0, 0.0, -0.5]]
    rings = []
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        ring = []
        for j in range(n_lon):
            th = 2 * np.pi * j / n_lon
            ring.append(len(verts))
            verts.append([0.5 * np.sin(phi) * np.cos(th),
                          0.5 * np.sin(phi) * np.sin(th),
                          0.5 * np.cos(phi)])
        rings.append(ring)
    faces = []
    for j in range(n_lon):
        faces.append([0, rings[0][j], rings[0][(j + 1) % n_lon]])
        faces.append([1, rings[-1][(j + 1) % n_lon], rings[-1][j]])
    for i in range(len(rings) - 1):
        for j in range(n_lon):
            a, b = rings[i][j], rings[i][(j + 1) % n_lon]
            c, d = rings[i + 1][j], rings[i + 1][(j + 1) % n_lon]
            faces.append([a, c, b])
            faces.append([b, c, d])
    return Mesh(vertices=np.asarray(verts), faces=np.asarray(faces))


def quad_mesh(axis: str = "x", offset: float = 0.0) -> Mesh:
    """Unit quad facing the given axis, two triangles."""
    s = 0.5
    if axis == "x":
        v = np.array([[offset, -s, -s], [offset, s, -s], [offset, s, s], [offset, -s, s]])
    elif axis == "z":
        v = np.array([[-s, -s, offset], [s, -s, offset], [s, s, offset], [-s, s, offset]])
    else:
        raise ValueError("axis must be 'x' or 'z'")
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    uv = np.array([
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
        [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    ])
    return Mesh(vertices=v, faces=faces, uv=uv)


def write_cube_obj(path, scale: float = 1.0, with_uv: bool = True) -> None:
    mesh = cube_mesh(with_uv=with_uv)
    lines = []
    for v in mesh.vertices * scale:
        lines.append(f"v {v[0]} {v[1]} {v[2]}")
    if with_uv:
        for fuv in mesh.uv:
            for uv in fuv:
                lines.append(f"vt {uv[0]} {uv[1]}")
        for fi, f in enumerate(mesh.faces):
            t = 3 * fi
            lines.append(f"f {f[0]+1}/{t+1} {f[1]+1}/{t+2} {f[2]+1}/{t+3}")
    else:
        for f in mesh.faces:
            lines.append(f"f {f[0]+1} {f[1]+1} {f[2]+1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
