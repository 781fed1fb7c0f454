"""Trainable neural color field: multiresolution hash-grid encoding + small MLP head.

The field maps 3D surface positions in [-0.5, 0.5]^3 to RGB colors in (0, 1)^3.
Forward and backward passes are analytic (no autodiff framework); parameters
live in a single flat float64 array so optimizers and checkpoints stay trivial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

# Fixed odd multipliers for the spatial hash (one per axis; first axis uses 1
# implicitly via the dense fallback ordering, here all three are explicit).
_HASH_PRIMES = (73856093, 19349663, 83492791)

_CHECKPOINT_MAGIC = "texdistill-field"
_CHECKPOINT_VERSION = 1

_CORNER_OFFSETS = np.array(
    [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1],
     [1, 0, 0], [1, 0, 1], [1, 1, 0], [1, 1, 1]],
    dtype=np.int64,
)


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 8
    base_resolution: int = 16
    growth_factor: float = 1.5
    features_per_level: int = 2
    table_size_log2: int = 16
    mlp_hidden: tuple = (32, 32)

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.features_per_level < 1:
            raise ValueError("features_per_level must be >= 1")
        if self.growth_factor <= 1.0:
            raise ValueError("growth_factor must be > 1")
        if self.base_resolution < 1:
            raise ValueError("base_resolution must be >= 1")

    def level_resolution(self, level: int) -> int:
        return int(np.floor(self.base_resolution * self.growth_factor ** level))

    def level_rows(self, level: int) -> int:
        """Rows in the feature table at `level`.

        Levels whose dense corner grid fits in the hash table are stored
        densely (collision-free); larger levels use the full hash table.
        """
        corners = self.level_resolution(level) + 1
        return min(corners ** 3, 2 ** self.table_size_log2)

    @property
    def encoding_dim(self) -> int:
        return self.levels * self.features_per_level

    def to_dict(self) -> dict:
        return {
            "levels": self.levels,
            "base_resolution": self.base_resolution,
            "growth_factor": self.growth_factor,
            "features_per_level": self.features_per_level,
            "table_size_log2": self.table_size_log2,
            "mlp_hidden": list(self.mlp_hidden),
        }

    @staticmethod
    def from_dict(d: dict) -> "HashGridConfig":
        d = dict(d)
        d["mlp_hidden"] = tuple(d.get("mlp_hidden", (32, 32)))
        return HashGridConfig(**d)


def spatial_hash(cells: np.ndarray, resolution: int, table_size: int) -> np.ndarray:
    """Map integer corner coordinates (N, 3) to table slots.

    Dense regime (all corners fit): row-major indexing, no collisions.
    Otherwise: XOR of per-axis prime products, modulo table size.
    """
    cells = np.asarray(cells, dtype=np.int64)
    corners = resolution + 1
    if corners ** 3 <= table_size:
        return cells[..., 0] * corners * corners + cells[..., 1] * corners + cells[..., 2]
    c = cells.astype(np.uint64)
    h = (c[..., 0] * np.uint64(_HASH_PRIMES[0])
         ^ c[..., 1] * np.uint64(_HASH_PRIMES[1])
         ^ c[..., 2] * np.uint64(_HASH_PRIMES[2]))
    return (h % np.uint64(table_size)).astype(np.int64)


def _layer_dims(config: HashGridConfig):
    dims = [config.encoding_dim, *config.mlp_hidden, 3]
    return list(zip(dims[1:], dims[:-1]))  # (fan_out, fan_in) per layer


class TextureField:
    """Parameter container with precomputed slices into a flat array."""

    def __init__(self, config: HashGridConfig, params: np.ndarray):
        self.config = config
        self.params = np.asarray(params, dtype=np.float64)
        self._build_slices()
        if self.params.shape != (self.num_params,):
            raise ValueError(
                f"expected {self.num_params} parameters, got {self.params.shape}")

    def _build_slices(self):
        cfg = self.config
        offset = 0
        self.table_slices = []
        for lvl in range(cfg.levels):
            n = cfg.level_rows(lvl) * cfg.features_per_level
            self.table_slices.append(slice(offset, offset + n))
            offset += n
        self.layer_slices = []  # (W_slice, b_slice, fan_out, fan_in)
        for fan_out, fan_in in _layer_dims(cfg):
            w = slice(offset, offset + fan_out * fan_in)
            offset += fan_out * fan_in
            b = slice(offset, offset + fan_out)
            offset += fan_out
            self.layer_slices.append((w, b, fan_out, fan_in))
        self.num_params = offset

    def table(self, level: int) -> np.ndarray:
        cfg = self.config
        return self.params[self.table_slices[level]].reshape(
            cfg.level_rows(level), cfg.features_per_level)

    def layer(self, i: int):
        w, b, fan_out, fan_in = self.layer_slices[i]
        return self.params[w].reshape(fan_out, fan_in), self.params[b]

    def zeros_like_gradient(self) -> np.ndarray:
        return np.zeros(self.num_params, dtype=np.float64)


def num_params(config: HashGridConfig) -> int:
    n = sum(config.level_rows(l) * config.features_per_level
            for l in range(config.levels))
    for fan_out, fan_in in _layer_dims(config):
        n += fan_out * fan_in + fan_out
    return n


def init_field(config: HashGridConfig, seed: int) -> TextureField:
    rng = np.random.default_rng(seed)
    parts = []
    for lvl in range(config.levels):
        n = config.level_rows(lvl) * config.features_per_level
        parts.append(rng.uniform(-1e-4, 1e-4, size=n))
    for fan_out, fan_in in _layer_dims(config):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
        parts.append(np.zeros(fan_out))
    return TextureField(config, np.concatenate(parts))


def _clamp_points(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    return np.clip(points, -0.5, 0.5)


def _level_lookup(field: TextureField, x01: np.ndarray, level: int):
    """Indices (N, 8) and trilinear weights (N, 8) for one level."""
    cfg = field.config
    res = cfg.level_resolution(level)
    u = x01 * res
    i0 = np.minimum(np.floor(u).astype(np.int64), res - 1)
    frac = u - i0
    corners = i0[:, None, :] + _CORNER_OFFSETS[None, :, :]  # (N, 8, 3)
    idx = spatial_hash(corners, res, 2 ** cfg.table_size_log2)
    w = np.where(_CORNER_OFFSETS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
    weights = w.prod(axis=2)
    return idx, weights


def encode(field: TextureField, points: np.ndarray) -> np.ndarray:
    """Pre-MLP hash-grid features, (N, levels * features_per_level)."""
    points = _clamp_points(points)
    x01 = points + 0.5
    feats = []
    for lvl in range(field.config.levels):
        idx, weights = _level_lookup(field, x01, lvl)
        tab = field.table(lvl)
        feats.append((tab[idx] * weights[:, :, None]).sum(axis=1))
    return np.concatenate(feats, axis=1)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(field: TextureField, points: np.ndarray):
    points = _clamp_points(points)
    x01 = points + 0.5
    lookups = []
    feats = []
    for lvl in range(field.config.levels):
        idx, weights = _level_lookup(field, x01, lvl)
        lookups.append((idx, weights))
        feats.append((field.table(lvl)[idx] * weights[:, :, None]).sum(axis=1))
    h = np.concatenate(feats, axis=1)
    acts = [h]
    pre = None
    n_layers = len(field.layer_slices)
    for i in range(n_layers):
        W, b = field.layer(i)
        pre = acts[-1] @ W.T + b
        if i < n_layers - 1:
            acts.append(np.maximum(pre, 0.0))
    colors = _sigmoid(pre)
    return colors, (lookups, acts, pre, colors)


def query(field: TextureField, points: np.ndarray) -> np.ndarray:
    """Evaluate the color field at (N, 3) positions; returns (N, 3) in (0, 1)."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return np.zeros((0, 3))
    colors, _ = _forward(field, points)
    return colors


def backward(field: TextureField, points: np.ndarray, d_colors: np.ndarray) -> np.ndarray:
    """Analytic parameter gradient of sum(d_colors * query(points)).

    Returns a flat array congruent with field.params. No gradient w.r.t.
    the input points.
    """
    points = np.asarray(points, dtype=np.float64)
    d_colors = np.asarray(d_colors, dtype=np.float64)
    if d_colors.shape != (points.shape[0], 3):
        raise ValueError("d_colors shape must match points batch")
    grad = field.zeros_like_gradient()
    if points.size == 0:
        return grad
    _, (lookups, acts, pre, colors) = _forward(field, points)

    cfg = field.config
    n_layers = len(field.layer_slices)
    d_z = d_colors * colors * (1.0 - colors)
    for i in range(n_layers - 1, -1, -1):
        W, _ = field.layer(i)
        w_sl, b_sl, fan_out, fan_in = field.layer_slices[i]
        grad[w_sl] += (d_z.T @ acts[i]).ravel()
        grad[b_sl] += d_z.sum(axis=0)
        d_h = d_z @ W
        if i > 0:
            d_z = d_h * (acts[i] > 0.0)
    d_feat = d_h  # (N, levels * F)

    F = cfg.features_per_level
    for lvl in range(cfg.levels):
        idx, weights = lookups[lvl]
        d_lvl = d_feat[:, lvl * F:(lvl + 1) * F]           # (N, F)
        contrib = weights[:, :, None] * d_lvl[:, None, :]  # (N, 8, F)
        tab_grad = np.zeros((cfg.level_rows(lvl), F))
        np.add.at(tab_grad, idx.ravel(), contrib.reshape(-1, F))
        grad[field.table_slices[lvl]] += tab_grad.ravel()
    return grad


def save_checkpoint(field: TextureField, path) -> None:
    header = {
        "format": _CHECKPOINT_MAGIC,
        "version": _CHECKPOINT_VERSION,
        "config": field.config.to_dict(),
        "dtype": "float64",
        "count": field.num_params,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(field.params.astype("<f8").tobytes())


def load_checkpoint(path) -> TextureField:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a texture-field checkpoint: {path}")
        if header.get("version") != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        config = HashGridConfig.from_dict(header["config"])
        params = np.frombuffer(f.read(), dtype="<f8")
    if params.size != header["count"]:
        raise ValueError("checkpoint truncated")
    return TextureField(config, params.copy())
