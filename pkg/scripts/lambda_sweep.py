#!/usr/bin/env python3
"""Sweep the two guidance weights on the toy setup and tabulate the outcome.

For each (lambda_cfg, lambda_style) pair the script distills a small field,
renders a probe view, and reports the mean rendered color next to the
saturation corner predicted from the combined guidance push. Useful for
eyeballing how the two weights trade off before pointing the pipeline at a
real backend.
"""

import argparse
import sys

import numpy as np

from texdistill import diffusion, field, geometry, meshes, pipeline
from texdistill.guidance import GuidanceWeights


def run_one(lambda_cfg, lambda_style, target, shift, iterations, size, seed):
    schedule = diffusion.make_schedule(1000)
    shape = (size, size, 3)
    oracle = diffusion.make_analytic_oracle(np.full(shape, 0.5), 0.0, schedule)
    oracle.register_prompt("target", np.broadcast_to(target, shape).copy())
    style = diffusion.StyleConditioning(feature=shift) if lambda_style else None
    cond = diffusion.ConditioningBundle(text="target", style=style)

    mesh = meshes.cube_mesh()
    tex_field = field.init_field(field.HashGridConfig(
        levels=2, base_resolution=4, growth_factor=2.0,
        features_per_level=2, table_size_log2=8, mlp_hidden=(8,)), seed)
    config = pipeline.DistillConfig(
        weights=GuidanceWeights(lambda_cfg, lambda_style),
        iterations=iterations, learning_rate=0.02,
        camera_policy=geometry.CameraPolicy(width=size, height=size), seed=seed)
    pipeline.distill(mesh, tex_field, oracle, cond, config, schedule)

    probe = geometry.Camera(position=np.array([2.0, 0.5, 0.3]),
                            target=np.zeros(3), up=np.array([0.0, 0.0, 1.0]),
                            fov_y=45.0, width=size, height=size)
    view = geometry.render_color(mesh, tex_field, probe)
    return view.color[view.mask].mean(axis=0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cfg", default="0,1,4",
                    help="comma-separated lambda_cfg values")
    ap.add_argument("--style", default="0,1,4",
                    help="comma-separated lambda_style values")
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    target = np.array([1.0, 0.0, 0.0])
    shift = np.array([0.0, 0.0, 1.5])
    base = np.full(3, 0.5)

    print(f"{'l_cfg':>6} {'l_style':>8} {'rendered mean':>24} {'predicted corner':>20}")
    for lc in (float(v) for v in args.cfg.split(",")):
        for ls in (float(v) for v in args.style.split(",")):
            mean = run_one(lc, ls, target, shift, args.iterations,
                           args.size, args.seed)
            push = lc * (target - base) + ls * (target + shift - base)
            corner = np.where(push > 0, 1.0, np.where(push < 0, 0.0, 0.5))
            print(f"{lc:6g} {ls:8g} "
                  f"[{mean[0]:.3f} {mean[1]:.3f} {mean[2]:.3f}]".rjust(33)
                  + f"[{corner[0]:.1f} {corner[1]:.1f} {corner[2]:.1f}]".rjust(21))
    return 0


if __name__ == "__main__":
    sys.exit(main())
