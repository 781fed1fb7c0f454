"""Assemble the conditioning inputs: embeddings, style decoupling, prompt pair."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .diffusion import ConditioningBundle, StyleConditioning
from .evaluation import EmbeddingProvider
from .guidance import StyleEmbeddings, odcr, resolve_layer_set


@dataclass(frozen=True)
class PromptPair:
    y: str       # full prompt: subject + style phrase
    y_ref: str   # content-only description of the reference image

    def __post_init__(self):
        if not self.y or not self.y_ref:
            raise ValueError("both prompts must be non-empty")


def load_reference_image(path) -> np.ndarray:
    """8-bit RGB reference image as float in [0, 1]; providers own any resizing."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return arr


def prepare_conditioning(reference_image: np.ndarray, prompts: PromptPair,
                         provider: EmbeddingProvider,
                         layer_set) -> tuple[ConditioningBundle, StyleEmbeddings]:
    """Embed the reference image and content prompt, decouple the style feature,
    and build the conditioning bundle for distillation."""
    layers = resolve_layer_set(layer_set)
    f_g = np.asarray(provider.embed_image(reference_image), dtype=np.float64)
    f_c = np.asarray(provider.embed_text(prompts.y_ref), dtype=np.float64)
    if f_g.shape != f_c.shape:
        raise ValueError("provider image/text embedding dimensions differ")
    f_s = odcr(f_g, f_c)
    embeddings = StyleEmbeddings(f_g=f_g, f_c=f_c, f_s=f_s)
    bundle = ConditioningBundle(
        text=prompts.y,
        negative_text=prompts.y_ref,
        style=StyleConditioning(feature=f_s.copy(), layer_set=layers),
    )
    return bundle, embeddings
