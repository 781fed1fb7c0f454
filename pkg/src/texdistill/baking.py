"""Bake the optimized texture field into a UV texture map, with edge padding.

Texel convention: texel (row iy, col ix) covers UV rectangle
[ix/R, (ix+1)/R) x ((R-1-iy)/R, (R-iy)/R], i.e. v increases upward while rows
grow downward, matching common image/OBJ conventions. A texel is covered when
its center lies inside a UV triangle; on overlapping charts the highest face
index wins.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np
from PIL import Image

from . import field as field_mod
from .geometry import Mesh

DEFAULT_RESOLUTION = 1024
DEFAULT_PAD_ITERATIONS = 8


@dataclass
class TextureImage:
    pixels: np.ndarray   # (R, R, 3) uint8
    resolution: int

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")


@dataclass
class CoverageMask:
    mask: np.ndarray     # (R, R) bool


def ensure_uv(mesh: Mesh, atlas_hook=None) -> Mesh:
    """Return the mesh with per-corner UVs, generating them via the hook if absent.

    The hook receives the mesh and must return a (faces, 3, 2) UV array in
    [0, 1]; it is the boundary to external atlas tools.
    """
    if mesh.uv is not None:
        return mesh
    if atlas_hook is None:
        raise ValueError("mesh has no UVs and no atlas hook is configured")
    uv = np.asarray(atlas_hook(mesh), dtype=np.float64)
    if uv.shape != (mesh.num_faces, 3, 2):
        raise ValueError("atlas hook must return per-corner UVs, shape (F, 3, 2)")
    if uv.min() < -1e-12 or uv.max() > 1.0 + 1e-12:
        raise ValueError("atlas hook produced UVs outside [0, 1]")
    return Mesh(vertices=mesh.vertices, faces=mesh.faces,
                uv=np.clip(uv, 0.0, 1.0), vertex_normals=mesh.vertex_normals)


def grid_chart_atlas(mesh: Mesh, margin: float = 0.12) -> np.ndarray:
    """Built-in atlas hook: one small square chart per triangle on a grid.

    Wasteful but overlap-free by construction; good enough for tests and for
    meshes without authored UVs when no external unwrapper is available.
    """
    F = mesh.num_faces
    n = int(np.ceil(np.sqrt(F)))
    cell = 1.0 / n
    inset = margin * cell
    uv = np.zeros((F, 3, 2))
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    for fi in range(F):
        cx, cy = fi % n, fi // n
        origin = np.array([cx * cell + inset, cy * cell + inset])
        span = cell - 2 * inset
        uv[fi] = origin + corners * span
    return uv


def _quantize(colors: np.ndarray) -> np.ndarray:
    """8-bit quantization, round half away from zero."""
    return np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def bake(tex_field: field_mod.TextureField, mesh: Mesh,
         resolution: int = DEFAULT_RESOLUTION) -> tuple[TextureImage, CoverageMask]:
    """Rasterize triangles in UV space and sample the field per covered texel."""
    if mesh.uv is None:
        raise ValueError("mesh has no UVs; call ensure_uv first")
    R = resolution
    face_id = np.full((R, R), -1, dtype=np.int64)
    bary = np.zeros((R, R, 3))

    for fi in range(mesh.num_faces):
        uv = mesh.uv[fi]
        # texel-center coordinates of the face's bounding box
        tx = uv[:, 0] * R
        ty = (1.0 - uv[:, 1]) * R
        cx0 = max(int(np.floor(tx.min() - 0.5)), 0)
        cx1 = min(int(np.ceil(tx.max() + 0.5)), R - 1)
        cy0 = max(int(np.floor(ty.min() - 0.5)), 0)
        cy1 = min(int(np.ceil(ty.max() + 0.5)), R - 1)
        if cx0 > cx1 or cy0 > cy1:
            continue
        PX, PY = np.meshgrid(np.arange(cx0, cx1 + 1) + 0.5,
                             np.arange(cy0, cy1 + 1) + 0.5)
        det = (tx[1] - tx[0]) * (ty[2] - ty[0]) - (tx[2] - tx[0]) * (ty[1] - ty[0])
        if abs(det) < 1e-14:
            continue
        w0 = ((tx[1] - PX) * (ty[2] - PY) - (tx[2] - PX) * (ty[1] - PY)) / det
        w1 = ((tx[2] - PX) * (ty[0] - PY) - (tx[0] - PX) * (ty[2] - PY)) / det
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        # later (higher) face index wins on overlap: plain overwrite in order
        face_id[cy0:cy1 + 1, cx0:cx1 + 1][inside] = fi
        sub = bary[cy0:cy1 + 1, cx0:cx1 + 1]
        sub[inside] = np.stack([w0[inside], w1[inside], w2[inside]], axis=-1)

    mask = face_id >= 0
    pixels = np.zeros((R, R, 3), dtype=np.uint8)
    if mask.any():
        tri = mesh.vertices[mesh.faces[face_id[mask]]]
        pos = (bary[mask][:, :, None] * tri).sum(axis=1)
        pixels[mask] = _quantize(field_mod.query(tex_field, pos))
    return TextureImage(pixels=pixels, resolution=R), CoverageMask(mask=mask)


def edge_pad(texture: TextureImage, coverage: CoverageMask,
             iterations: int = DEFAULT_PAD_ITERATIONS) -> TextureImage:
    """Dilate chart colors outward: each uncovered texel with covered
    8-neighbors takes their mean and becomes covered. Covered texels never change."""
    if texture.pixels.shape[:2] != coverage.mask.shape:
        raise ValueError("texture/mask shape mismatch")
    pix = texture.pixels.astype(np.float64)
    mask = coverage.mask.copy()
    shifts = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    for _ in range(iterations):
        acc = np.zeros_like(pix)
        cnt = np.zeros(mask.shape)
        for dy, dx in shifts:
            shifted = np.zeros(mask.shape, dtype=bool)
            src = np.zeros_like(pix)
            ys = slice(max(dy, 0), mask.shape[0] + min(dy, 0))
            yd = slice(max(-dy, 0), mask.shape[0] + min(-dy, 0))
            xs = slice(max(dx, 0), mask.shape[1] + min(dx, 0))
            xd = slice(max(-dx, 0), mask.shape[1] + min(-dx, 0))
            shifted[yd, xd] = mask[ys, xs]
            src[yd, xd] = pix[ys, xs]
            acc += np.where(shifted[:, :, None], src, 0.0)
            cnt += shifted
        grow = (~mask) & (cnt > 0)
        if not grow.any():
            break
        pix[grow] = acc[grow] / cnt[grow][:, None]
        mask |= grow
    out = texture.pixels.copy()
    new = mask & ~coverage.mask
    out[new] = _quantize(pix[new] / 255.0)
    return TextureImage(pixels=out, resolution=texture.resolution)


def save_texture_png(texture: TextureImage, path) -> None:
    Image.fromarray(texture.pixels, mode="RGB").save(path)


def load_texture_png(path) -> TextureImage:
    arr = np.asarray(Image.open(path).convert("RGB"))
    return TextureImage(pixels=arr.copy(), resolution=arr.shape[0])
