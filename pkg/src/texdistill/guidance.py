"""Guidance composition: style/content disentanglement and noise-direction deltas.

Covers the orthogonal content-removal projection, the naive-subtraction
baseline, classifier-free guidance, the standalone style guidance term, the
fully composed update direction (interval + CFG-with-negative-prompt + style),
and both score-distillation directions (single-step and interval-based).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import (ConditioningBundle, DenoiserBackend, DiffusionState,
                        NoiseSchedule, add_noise, pseudo_gt)

# Cross-attention layer identifiers eligible for style injection.
LAYER_CATALOG = (
    "down_blocks.1.attentions.0",
    "down_blocks.2",
    "mid_block.attention.0",
    "up_block.0",
    "up_block.1",
    "up_block.2",
    "up_block.3",
)

_MINIMAL = ("down_blocks.2", "mid_block.attention.0", "up_block.1")
_EXTENDED = _MINIMAL + ("down_blocks.1.attentions.0",
                        "up_block.0", "up_block.2", "up_block.3")

LAYER_SET_PRESETS = {
    "instantstyle-minimal": _MINIMAL,
    "styletex-extended": tuple(sorted(set(_EXTENDED))),
    "all": LAYER_CATALOG,
}


def resolve_layer_set(name_or_layers) -> tuple:
    if isinstance(name_or_layers, str):
        if name_or_layers not in LAYER_SET_PRESETS:
            raise KeyError(f"unknown layer-set preset '{name_or_layers}'")
        return LAYER_SET_PRESETS[name_or_layers]
    layers = tuple(name_or_layers)
    unknown = [l for l in layers if l not in LAYER_CATALOG]
    if unknown:
        raise ValueError(f"layers not in catalog: {unknown}")
    return layers


@dataclass(frozen=True)
class GuidanceWeights:
    lambda_cfg: float = 7.5
    lambda_style: float = 7.5

    def __post_init__(self):
        if not (np.isfinite(self.lambda_cfg) and np.isfinite(self.lambda_style)):
            raise ValueError("guidance weights must be finite")


@dataclass(frozen=True)
class StyleEmbeddings:
    f_g: np.ndarray  # reference-image embedding
    f_c: np.ndarray  # content-text embedding
    f_s: np.ndarray  # decoupled style feature


def odcr(f_g: np.ndarray, f_c: np.ndarray) -> np.ndarray:
    """Remove the content-aligned component of the image embedding.

    f_s = f_g - <f_g, f_c> / ||f_c||^2 * f_c
    """
    f_g = np.asarray(f_g, dtype=np.float64)
    f_c = np.asarray(f_c, dtype=np.float64)
    if f_g.shape != f_c.shape:
        raise ValueError("embedding dimensions differ")
    denom = float(f_c @ f_c)
    if denom == 0.0:
        raise ValueError("zero content embedding: projection undefined")
    return f_g - (float(f_g @ f_c) / denom) * f_c


def naive_subtraction(f_g: np.ndarray, f_c: np.ndarray, strength: float) -> np.ndarray:
    """Plain feature subtraction baseline (kept for ablation parity)."""
    f_g = np.asarray(f_g, dtype=np.float64)
    f_c = np.asarray(f_c, dtype=np.float64)
    if f_g.shape != f_c.shape:
        raise ValueError("embedding dimensions differ")
    return f_g - strength * f_c


def make_style_embeddings(f_g: np.ndarray, f_c: np.ndarray) -> StyleEmbeddings:
    return StyleEmbeddings(f_g=np.asarray(f_g, dtype=np.float64),
                           f_c=np.asarray(f_c, dtype=np.float64),
                           f_s=odcr(f_g, f_c))


# ---------------------------------------------------------------------------
# noise-direction deltas


def _check_shapes(*arrays):
    shape = np.asarray(arrays[0]).shape
    for a in arrays[1:]:
        if np.asarray(a).shape != shape:
            raise ValueError("shape mismatch between noise predictions")


def cfg_delta(eps_uncond_t, eps_uncond_prev, eps_cond_t,
              weights: GuidanceWeights) -> np.ndarray:
    """Interval term plus classifier-free guidance toward the text condition."""
    _check_shapes(eps_uncond_t, eps_uncond_prev, eps_cond_t)
    return (np.asarray(eps_uncond_t) - np.asarray(eps_uncond_prev)) \
        + weights.lambda_cfg * (np.asarray(eps_cond_t) - np.asarray(eps_uncond_t))


def style_delta(eps_style_t, eps_uncond_t, weights: GuidanceWeights) -> np.ndarray:
    """Push from the unstylized score toward the style-conditioned one."""
    _check_shapes(eps_style_t, eps_uncond_t)
    return weights.lambda_style * (np.asarray(eps_style_t) - np.asarray(eps_uncond_t))


def full_delta(x_t, x_prev, t: int, t_prev: int, cond: ConditioningBundle,
               backend: DenoiserBackend, schedule: NoiseSchedule,
               weights: GuidanceWeights) -> np.ndarray:
    """The fully composed update direction on an inversion-trajectory pair:

        eps(x_t; t) - eps(x_prev; t_prev)
      + lambda_cfg  * (eps(x_t; t, y) - eps(x_t; t, y_ref))
      + lambda_style * (eps_style(x_t; t, y, f_s) - eps(x_t; t))

    Five backend evaluations; the unconditional prediction at t is shared by
    the interval and style terms. The style evaluation is skipped (four calls)
    only when lambda_style is 0 and no style feature is supplied.
    """
    uncond = cond.unconditional()
    eps_uncond_t = backend.predict_noise(x_t, t, uncond)
    eps_uncond_prev = backend.predict_noise(x_prev, t_prev, uncond)
    eps_cond_t = backend.predict_noise(x_t, t, cond.with_text(cond.text))
    eps_neg_t = backend.predict_noise(x_t, t, cond.with_text(cond.negative_text))

    delta = (eps_uncond_t - eps_uncond_prev) \
        + weights.lambda_cfg * (eps_cond_t - eps_neg_t)

    if cond.style is not None:
        eps_style_t = backend.predict_noise(x_t, t, cond.with_style())
        delta = delta + style_delta(eps_style_t, eps_uncond_t, weights)
    elif weights.lambda_style != 0.0:
        raise ValueError("lambda_style != 0 but no style feature in conditioning")
    return delta


def sds_direction(x0, t: int, eps, cond: ConditioningBundle,
                  backend: DenoiserBackend, schedule: NoiseSchedule) -> np.ndarray:
    """Single-step distillation residual: predicted noise minus injected noise."""
    x_t = add_noise(x0, t, eps, schedule)
    eps_hat = backend.predict_noise(x_t, t, cond)
    return eps_hat - np.asarray(eps, dtype=np.float64)


def sds_residual_form(x0, t: int, eps, cond: ConditioningBundle,
                      backend: DenoiserBackend, schedule: NoiseSchedule) -> np.ndarray:
    """Equivalent pseudo-GT view of the residual: (x0 - x0_hat) / gamma(t)."""
    x_t = add_noise(x0, t, eps, schedule)
    eps_hat = backend.predict_noise(x_t, t, cond)
    x0_hat = pseudo_gt(x_t, t, eps_hat, schedule)
    return (np.asarray(x0, dtype=np.float64) - x0_hat) / schedule.gamma(t)


def ism_direction(trajectory: list[DiffusionState], cond: ConditioningBundle,
                  backend: DenoiserBackend, schedule: NoiseSchedule) -> np.ndarray:
    """Interval direction: conditioned prediction at the trajectory head minus
    the unconditioned prediction at the previous trajectory state."""
    if len(trajectory) < 2:
        raise ValueError("trajectory needs at least 2 states")
    head, prev = trajectory[-1], trajectory[-2]
    eps_cond = backend.predict_noise(head.x, head.t, cond.with_text(cond.text))
    eps_prev = backend.predict_noise(prev.x, prev.t, cond.unconditional())
    return eps_cond - eps_prev
