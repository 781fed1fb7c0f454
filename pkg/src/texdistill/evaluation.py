"""Style-fidelity and semantic-alignment metrics over rendered views.

Ships deterministic offline stand-ins for the heavy models: a fixed
random-convolution feature extractor and a hashed-embedding provider. Real
VGG/CLIP-style models plug in through the same two interfaces.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import geometry

CLIP_SCORE_WEIGHT = 2.5


class FeatureExtractor:
    """Interface: image (H, W, 3) in [0, 1] -> list of (C_j, H_j, W_j) maps."""

    def activations(self, image: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError


class EmbeddingProvider:
    """Interface: shared-space image and text embeddings of fixed dimension."""

    dimension: int

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def embed_text(self, text: str) -> np.ndarray:
        raise NotImplementedError


class SyntheticConvExtractor(FeatureExtractor):
    """Fixed seeded 3x3 convolution stack with ReLU and stride-2 downsampling.

    Not a trained network; exists so the whole metric path runs offline and
    deterministically.
    """

    def __init__(self, layer_channels=(8, 16), seed: int = 7):
        rng = np.random.default_rng(seed)
        self.kernels = []
        c_in = 3
        for c_out in layer_channels:
            k = rng.standard_normal((c_out, c_in, 3, 3)) / np.sqrt(9 * c_in)
            self.kernels.append(k)
            c_in = c_out

    def activations(self, image: np.ndarray) -> list[np.ndarray]:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != 3:
            raise ValueError("image must be (H, W, 3)")
        x = np.moveaxis(x, 2, 0)  # (C, H, W)
        out = []
        for k in self.kernels:
            x = _conv3x3_valid(x, k)
            x = np.maximum(x, 0.0)
            out.append(x.copy())
            x = x[:, ::2, ::2]
        return out


def _conv3x3_valid(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    c_out, c_in, _, _ = kernels.shape
    C, H, W = x.shape
    if C != c_in or H < 3 or W < 3:
        raise ValueError("feature map too small for 3x3 convolution")
    # im2col over the 3x3 window
    cols = np.stack([x[:, dy:H - 2 + dy, dx:W - 2 + dx]
                     for dy in range(3) for dx in range(3)], axis=1)  # (C, 9, H-2, W-2)
    cols = cols.reshape(C * 9, H - 2, W - 2)
    kmat = kernels.reshape(c_out, c_in, 9).reshape(c_out, c_in * 9)
    return np.einsum("oc,chw->ohw", kmat, cols)


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic mock: SHA-256 of the input bytes seeds a unit vector."""

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def _vector(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
        v = np.random.default_rng(seed).standard_normal(self.dimension)
        return v / np.linalg.norm(v)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        arr = np.ascontiguousarray(np.asarray(image, dtype=np.float64))
        return self._vector(b"img:" + arr.tobytes())

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(b"txt:" + text.encode("utf-8"))


# ---------------------------------------------------------------------------
# metrics


def gram_matrix(feature_map: np.ndarray) -> np.ndarray:
    """Channel-correlation matrix normalized by C * H * W."""
    f = np.asarray(feature_map, dtype=np.float64)
    if f.ndim != 3 or 0 in f.shape:
        raise ValueError("feature map must be non-empty (C, H, W)")
    C, H, W = f.shape
    flat = f.reshape(C, H * W)
    return flat @ flat.T / (C * H * W)


def gram_distance(reference_image: np.ndarray, rendered_images,
                  extractor: FeatureExtractor) -> float:
    """Mean (over layers, then over rendered views) squared Frobenius distance
    between Gram matrices of the reference and each rendering."""
    rendered_images = list(rendered_images)
    if not rendered_images:
        raise ValueError("need at least one rendered image")
    ref_grams = [gram_matrix(a) for a in extractor.activations(reference_image)]
    totals = []
    for img in rendered_images:
        grams = [gram_matrix(a) for a in extractor.activations(img)]
        if len(grams) != len(ref_grams):
            raise ValueError("extractor layer count mismatch")
        per_layer = [float(np.sum((gr - gi) ** 2))
                     for gr, gi in zip(ref_grams, grams)]
        totals.append(np.mean(per_layer))
    return float(np.mean(totals))


def clip_score(text_embedding: np.ndarray, image_embedding: np.ndarray) -> float:
    """Clamped, scaled cosine similarity in [0, 2.5]."""
    c = np.asarray(text_embedding, dtype=np.float64)
    v = np.asarray(image_embedding, dtype=np.float64)
    nc, nv = np.linalg.norm(c), np.linalg.norm(v)
    if nc == 0.0 or nv == 0.0:
        raise ValueError("zero embedding vector")
    return CLIP_SCORE_WEIGHT * max(float(c @ v) / (nc * nv), 0.0)


def default_eval_cameras(width: int = 128, height: int = 128,
                         radius: float = 2.0, fov_y: float = 45.0):
    """Four azimuths at slight elevation, looking at the origin."""
    cams = []
    for az_deg in (0.0, 90.0, 180.0, 270.0):
        az = np.deg2rad(az_deg)
        el = np.deg2rad(15.0)
        pos = radius * np.array([np.cos(el) * np.cos(az),
                                 np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(geometry.Camera(position=pos, target=np.zeros(3),
                                    up=np.array([0.0, 0.0, 1.0]),
                                    fov_y=fov_y, width=width, height=height))
    return cams


def evaluate_result(mesh: geometry.Mesh, texture, reference_image: np.ndarray,
                    prompt: str, cameras, extractor: FeatureExtractor,
                    provider: EmbeddingProvider, output_path=None) -> dict:
    """Render the textured mesh from each camera; report style distance to the
    reference and mean semantic alignment with the prompt."""
    if texture is None:
        raise ValueError("missing texture")
    tex_pixels = texture.pixels if hasattr(texture, "pixels") else np.asarray(texture)
    views = [geometry.render_textured(mesh, tex_pixels, cam).color for cam in cameras]
    text_emb = provider.embed_text(prompt)
    per_view = []
    for i, img in enumerate(views):
        d_gm = gram_distance(reference_image, [img], extractor)
        score = clip_score(text_emb, provider.embed_image(img))
        per_view.append({"view": i, "gram_distance": d_gm, "clip_score": score})
    record = {
        "schema_version": 1,
        "prompt": prompt,
        "num_views": len(views),
        "gram_distance": gram_distance(reference_image, views, extractor),
        "clip_score": float(np.mean([v["clip_score"] for v in per_view])),
        "per_view": per_view,
    }
    if output_path is not None:
        with open(output_path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return record
