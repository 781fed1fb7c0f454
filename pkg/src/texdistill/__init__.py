"""Style-guided texture distillation toolkit.

Optimizes a neural color field over a mesh against a diffusion prior using
interval-based score distillation with classifier-free and style guidance,
then bakes the field into a UV texture map and scores the result.
"""

__version__ = "0.1.0"
