"""Mesh loading, camera sampling, and differentiable rendering of the texture field.

The rasterizer is a plain z-buffered barycentric rasterizer with hard coverage.
Gradients flow only through the per-pixel field queries (geometry is fixed), so
the pixel-to-parameter chain stays exact without soft rasterization.

Camera space: x right, y up, z toward the camera (the view direction is -z).
A surface facing the camera therefore has camera-space normal (0, 0, 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import field as field_mod

DEFAULT_BACKGROUND = (0.5, 0.5, 0.5)


@dataclass
class Mesh:
    vertices: np.ndarray          # (V, 3)
    faces: np.ndarray             # (F, 3) int
    uv: np.ndarray | None = None  # (F, 3, 2) per-corner, in [0, 1]
    vertex_normals: np.ndarray | None = None  # (V, 3)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")
        if self.uv is not None:
            self.uv = np.asarray(self.uv, dtype=np.float64)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(lens, 1e-30)


@dataclass
class Camera:
    position: np.ndarray
    target: np.ndarray
    up: np.ndarray
    fov_y: float          # degrees
    width: int = 64
    height: int = 64

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if np.allclose(self.position, self.target):
            raise ValueError("camera position equals target")
        fwd = self.target - self.position
        fwd = fwd / np.linalg.norm(fwd)
        up = self.up / np.linalg.norm(self.up)
        if abs(fwd @ up) > 0.999:
            # fall back to a non-parallel up
            up = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        self._basis = (right, true_up, -fwd)  # camera z points backward

    def to_camera_space(self, points: np.ndarray) -> np.ndarray:
        right, up, back = self._basis
        rel = points - self.position
        return np.stack([rel @ right, rel @ up, rel @ back], axis=-1)

    def rotate_to_camera(self, vectors: np.ndarray) -> np.ndarray:
        right, up, back = self._basis
        return np.stack([vectors @ right, vectors @ up, vectors @ back], axis=-1)


@dataclass
class RenderedView:
    color: np.ndarray             # (H, W, 3) in [0, 1]
    surface_position: np.ndarray  # (H, W, 3), valid where mask
    mask: np.ndarray              # (H, W) bool
    face_id: np.ndarray           # (H, W) int, -1 where uncovered
    barycentric: np.ndarray       # (H, W, 3), valid where mask


@dataclass
class GeometryMaps:
    depth: np.ndarray   # (H, W) in [0, 1], covered pixels only meaningful
    normal: np.ndarray  # (H, W, 3) camera-space unit vectors; fill where uncovered


@dataclass
class CameraPolicy:
    azimuth_deg: tuple = (0.0, 360.0)
    elevation_deg: tuple = (-30.0, 30.0)
    radius: tuple = (1.8, 2.4)
    fov_y_deg: tuple = (40.0, 50.0)
    width: int = 64
    height: int = 64

    def __post_init__(self):
        for lo, hi in (self.azimuth_deg, self.elevation_deg, self.radius, self.fov_y_deg):
            if hi < lo:
                raise ValueError("empty sampling range")


# ---------------------------------------------------------------------------
# mesh IO


def _normalize_mesh(vertices: np.ndarray) -> np.ndarray:
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    extent = (hi - lo).max()
    if extent <= 0:
        raise ValueError("degenerate mesh: zero extent")
    center = (lo + hi) / 2.0
    return (vertices - center) / extent


def _triangulate(polys: list, uv_polys: list | None):
    """Fan-triangulate polygon index lists; UVs follow the same fans."""
    faces, uvs = [], []
    for k, poly in enumerate(polys):
        for i in range(1, len(poly) - 1):
            faces.append([poly[0], poly[i], poly[i + 1]])
            if uv_polys is not None:
                p = uv_polys[k]
                uvs.append([p[0], p[i], p[i + 1]])
    return faces, (uvs if uv_polys is not None else None)


def load_obj(path) -> Mesh:
    positions, texcoords = [], []
    polys, uv_polys = [], []
    any_vt = False
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                texcoords.append([float(parts[1]), float(parts[2])])
            elif parts[0] == "f":
                vi, ti = [], []
                for token in parts[1:]:
                    fields = token.split("/")
                    vi.append(int(fields[0]) - 1)
                    if len(fields) > 1 and fields[1]:
                        ti.append(int(fields[1]) - 1)
                        any_vt = True
                    else:
                        ti.append(-1)
                polys.append(vi)
                uv_polys.append(ti)
    if not positions or not polys:
        raise ValueError(f"empty mesh: {path}")
    faces, uv_idx = _triangulate(polys, uv_polys if any_vt else None)
    uv = None
    if uv_idx is not None:
        tc = np.asarray(texcoords, dtype=np.float64)
        uv = np.zeros((len(faces), 3, 2))
        for fi, corners in enumerate(uv_idx):
            for ci, t in enumerate(corners):
                if t < 0:
                    raise ValueError("mixed textured/untextured faces in OBJ")
                uv[fi, ci] = tc[t]
    vertices = _normalize_mesh(np.asarray(positions, dtype=np.float64))
    return Mesh(vertices=vertices, faces=np.asarray(faces), uv=uv)


def load_mesh_json(path) -> Mesh:
    with open(path) as f:
        data = json.load(f)
    vertices = np.asarray(data["vertices"], dtype=np.float64)
    polys = [list(f) for f in data["faces"]]
    uv_raw = data.get("uv")
    faces, _ = _triangulate(polys, None)
    if len(vertices) == 0 or len(faces) == 0:
        raise ValueError(f"empty mesh: {path}")
    uv = None
    if uv_raw is not None:
        uv = np.asarray(uv_raw, dtype=np.float64)
        if uv.shape != (len(faces), 3, 2):
            raise ValueError("uv must be per-corner with shape (faces, 3, 2)")
    return Mesh(vertices=_normalize_mesh(vertices), faces=np.asarray(faces), uv=uv)


def load_mesh(path) -> Mesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".obj":
        return load_obj(path)
    if path.suffix.lower() == ".json":
        return load_mesh_json(path)
    raise ValueError(f"unsupported mesh format: {path.suffix}")


def save_obj(mesh: Mesh, path, mtl_name: str | None = None, texture_name: str | None = None):
    path = Path(path)
    lines = []
    if mtl_name:
        lines.append(f"mtllib {mtl_name}")
        lines.append("usemtl baked")
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.8f} {v[1]:.8f} {v[2]:.8f}")
    if mesh.uv is not None:
        for fuv in mesh.uv:
            for uv in fuv:
                lines.append(f"vt {uv[0]:.8f} {uv[1]:.8f}")
        for fi, face in enumerate(mesh.faces):
            t = 3 * fi
            lines.append(f"f {face[0]+1}/{t+1} {face[1]+1}/{t+2} {face[2]+1}/{t+3}")
    else:
        for face in mesh.faces:
            lines.append(f"f {face[0]+1} {face[1]+1} {face[2]+1}")
    path.write_text("\n".join(lines) + "\n")
    if mtl_name and texture_name:
        mtl_path = path.parent / mtl_name
        mtl_path.write_text(
            "newmtl baked\nKa 1.0 1.0 1.0\nKd 1.0 1.0 1.0\n"
            f"map_Kd {texture_name}\n")


# ---------------------------------------------------------------------------
# cameras


def sample_camera(rng: np.random.Generator, policy: CameraPolicy) -> Camera:
    az = np.deg2rad(rng.uniform(*policy.azimuth_deg))
    el = np.deg2rad(rng.uniform(*policy.elevation_deg))
    radius = rng.uniform(*policy.radius)
    fov = rng.uniform(*policy.fov_y_deg)
    position = radius * np.array([
        np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return Camera(position=position, target=np.zeros(3), up=np.array([0.0, 0.0, 1.0]),
                  fov_y=fov, width=policy.width, height=policy.height)


# ---------------------------------------------------------------------------
# rasterization


def _project(cam: Camera, points_cam: np.ndarray):
    """Camera-space points -> pixel coordinates and positive view depth."""
    depth = -points_cam[..., 2]
    tan_half = np.tan(np.deg2rad(cam.fov_y) / 2.0)
    aspect = cam.width / cam.height
    safe = np.maximum(depth, 1e-12)
    x_ndc = points_cam[..., 0] / (safe * tan_half * aspect)
    y_ndc = points_cam[..., 1] / (safe * tan_half)
    px = (x_ndc * 0.5 + 0.5) * cam.width
    py = (0.5 - y_ndc * 0.5) * cam.height
    return px, py, depth


def rasterize(mesh: Mesh, cam: Camera):
    """Z-buffered coverage. Returns (face_id, barycentric, depth) per pixel.

    Barycentrics are perspective-correct (computed on screen, corrected by
    1/depth) so interpolated attributes live on the 3D triangle.
    """
    H, W = cam.height, cam.width
    face_id = np.full((H, W), -1, dtype=np.int64)
    bary = np.zeros((H, W, 3))
    zbuf = np.full((H, W), np.inf)

    pts_cam = cam.to_camera_space(mesh.vertices)
    px, py, depth = _project(cam, pts_cam)

    xs = np.arange(W) + 0.5
    ys = np.arange(H) + 0.5

    for fi, face in enumerate(mesh.faces):
        d = depth[face]
        if np.any(d <= 1e-9):
            continue  # behind or at the camera plane
        x = px[face]
        y = py[face]
        x0, x1 = x.min(), x.max()
        y0, y1 = y.min(), y.max()
        cx0 = max(int(np.floor(x0 - 0.5)), 0)
        cx1 = min(int(np.ceil(x1 + 0.5)), W - 1)
        cy0 = max(int(np.floor(y0 - 0.5)), 0)
        cy1 = min(int(np.ceil(y1 + 0.5)), H - 1)
        if cx0 > cx1 or cy0 > cy1:
            continue
        gx = xs[cx0:cx1 + 1]
        gy = ys[cy0:cy1 + 1]
        PX, PY = np.meshgrid(gx, gy)

        # signed areas for screen-space barycentrics
        det = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
        if abs(det) < 1e-14:
            continue
        w0 = ((x[1] - PX) * (y[2] - PY) - (x[2] - PX) * (y[1] - PY)) / det
        w1 = ((x[2] - PX) * (y[0] - PY) - (x[0] - PX) * (y[2] - PY)) / det
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue

        # perspective correction
        inv_d = 1.0 / d
        denom = w0 * inv_d[0] + w1 * inv_d[1] + w2 * inv_d[2]
        b0 = w0 * inv_d[0] / denom
        b1 = w1 * inv_d[1] / denom
        b2 = w2 * inv_d[2] / denom
        z = b0 * d[0] + b1 * d[1] + b2 * d[2]

        sub_z = zbuf[cy0:cy1 + 1, cx0:cx1 + 1]
        win = inside & (z < sub_z)
        if not win.any():
            continue
        sub_z[win] = z[win]
        face_id[cy0:cy1 + 1, cx0:cx1 + 1][win] = fi
        sub_b = bary[cy0:cy1 + 1, cx0:cx1 + 1]
        sub_b[win] = np.stack([b0[win], b1[win], b2[win]], axis=-1)

    return face_id, bary, zbuf


def _surface_positions(mesh: Mesh, face_id, bary):
    mask = face_id >= 0
    pos = np.zeros(face_id.shape + (3,))
    if mask.any():
        tri = mesh.vertices[mesh.faces[face_id[mask]]]   # (N, 3, 3)
        pos[mask] = (bary[mask][:, :, None] * tri).sum(axis=1)
    return pos, mask


def render_color(mesh: Mesh, tex_field, cam: Camera,
                 background=DEFAULT_BACKGROUND) -> RenderedView:
    face_id, bary, _ = rasterize(mesh, cam)
    pos, mask = _surface_positions(mesh, face_id, bary)
    color = np.empty(face_id.shape + (3,))
    color[:] = np.asarray(background, dtype=np.float64)
    if mask.any():
        color[mask] = field_mod.query(tex_field, pos[mask])
    return RenderedView(color=color, surface_position=pos, mask=mask,
                        face_id=face_id, barycentric=bary)


def render_view_gradient(view: RenderedView, d_color: np.ndarray, tex_field) -> np.ndarray:
    """Route an upstream image gradient into field parameters.

    Geometry is fixed: only the per-pixel field queries carry gradient, and
    uncovered pixels contribute nothing.
    """
    d_color = np.asarray(d_color, dtype=np.float64)
    if d_color.shape != view.color.shape:
        raise ValueError("d_color shape mismatch")
    mask = view.mask
    if not mask.any():
        return np.zeros(tex_field.num_params)
    return field_mod.backward(tex_field, view.surface_position[mask], d_color[mask])


def render_geometry_maps(mesh: Mesh, cam: Camera,
                         normal_fill=(0.0, 0.0, 0.0)) -> GeometryMaps:
    face_id, bary, zbuf = rasterize(mesh, cam)
    mask = face_id >= 0
    depth = np.zeros(face_id.shape)
    if mask.any():
        z = zbuf[mask]
        zmin, zmax = z.min(), z.max()
        if zmax - zmin < 1e-12:
            depth[mask] = 0.5
        else:
            depth[mask] = (z - zmin) / (zmax - zmin)
    normal = np.empty(face_id.shape + (3,))
    normal[:] = np.asarray(normal_fill, dtype=np.float64)
    if mask.any():
        fn = mesh.face_normals()
        n_cam = cam.rotate_to_camera(fn[face_id[mask]])
        flip = n_cam[:, 2] < 0
        n_cam[flip] *= -1.0
        normal[mask] = n_cam
    return GeometryMaps(depth=depth, normal=normal)


def render_textured(mesh: Mesh, texture: np.ndarray, cam: Camera,
                    background=DEFAULT_BACKGROUND) -> RenderedView:
    """Render with a baked texture via nearest-texel lookup (needs per-corner UVs)."""
    if mesh.uv is None:
        raise ValueError("mesh has no UVs")
    face_id, bary, _ = rasterize(mesh, cam)
    pos, mask = _surface_positions(mesh, face_id, bary)
    color = np.empty(face_id.shape + (3,))
    color[:] = np.asarray(background, dtype=np.float64)
    if mask.any():
        uv = (bary[mask][:, :, None] * mesh.uv[face_id[mask]]).sum(axis=1)
        R_h, R_w = texture.shape[0], texture.shape[1]
        tx = np.clip((uv[:, 0] * R_w).astype(np.int64), 0, R_w - 1)
        ty = np.clip(((1.0 - uv[:, 1]) * R_h).astype(np.int64), 0, R_h - 1)
        texel = texture[ty, tx]
        if texel.dtype == np.uint8:
            texel = texel.astype(np.float64) / 255.0
        color[mask] = texel
    return RenderedView(color=color, surface_position=pos, mask=mask,
                        face_id=face_id, barycentric=bary)


# ---------------------------------------------------------------------------
# export


def export_depth_png(maps: GeometryMaps, path) -> None:
    img = np.clip(maps.depth, 0.0, 1.0)
    Image.fromarray((img * 65535.0 + 0.5).astype(np.uint16)).save(path)


def export_normal_png(maps: GeometryMaps, path) -> None:
    img = np.clip((maps.normal + 1.0) / 2.0, 0.0, 1.0)
    Image.fromarray((img * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)
