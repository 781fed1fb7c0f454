"""Command-line entry points: generate, bake, eval.

Output directory layout for a generate run:
    config.yaml      resolved configuration
    reports.jsonl    per-iteration step reports
    field.ckpt       texture-field checkpoint
    texture.png      baked (and padded) UV texture
    mesh.obj/.mtl    mesh with UVs referencing the texture
    MANIFEST.json    completed stages + artifact hashes
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import baking, config as config_mod, conditioning, diffusion, evaluation, \
    field as field_mod, geometry, pipeline

LOCK_NAME = ".texdistill.lock"
STAGES = ("conditioning", "distill", "bake", "export")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _config_hash(cfg) -> str:
    return hashlib.sha256(
        json.dumps(config_mod.to_dict(cfg), sort_keys=True).encode()).hexdigest()


class Manifest:
    def __init__(self, path: Path, config_hash: str):
        self.path = path
        self.data = {"config_hash": config_hash, "stages": [], "artifacts": {}}
        if path.exists():
            old = json.loads(path.read_text())
            if old.get("config_hash") == config_hash:
                self.data = old

    def done(self, stage: str) -> bool:
        return stage in self.data["stages"]

    def complete(self, stage: str, artifacts: dict[str, Path]):
        if stage not in self.data["stages"]:
            self.data["stages"].append(stage)
        for name, p in artifacts.items():
            self.data["artifacts"][name] = {"path": p.name, "sha256": _sha256(p)}
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))


def _make_provider(eval_cfg):
    if eval_cfg.provider == "mock-hash":
        return evaluation.HashEmbeddingProvider(eval_cfg.provider_dimension)
    raise ValueError(f"unknown embedding provider '{eval_cfg.provider}'")


def _make_extractor(eval_cfg):
    if eval_cfg.extractor == "synthetic-conv":
        return evaluation.SyntheticConvExtractor()
    raise ValueError(f"unknown feature extractor '{eval_cfg.extractor}'")


def run_generate(cfg: config_mod.RunConfig) -> Path:
    """Execute conditioning -> distill -> bake -> export under cfg.output_dir."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    if lock.exists():
        raise RuntimeError(f"output directory is locked by another run: {lock}")
    lock.write_text(str(cfg.seed))
    try:
        return _run_generate_locked(cfg, out)
    finally:
        lock.unlink(missing_ok=True)


def _run_generate_locked(cfg, out: Path):
    manifest = Manifest(out / "MANIFEST.json", _config_hash(cfg))
    config_mod.save(cfg, out / "config.yaml")

    schedule = diffusion.make_schedule(
        cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end,
        cfg.schedule.kind)
    backend = diffusion.create_backend(cfg.backend, schedule, cfg.backend_options)
    mesh = geometry.load_mesh(cfg.mesh)

    provider = _make_provider(cfg.eval)
    ref_image = conditioning.load_reference_image(cfg.reference_image)
    prompts = conditioning.PromptPair(y=cfg.prompt, y_ref=cfg.content_prompt)
    bundle, _ = conditioning.prepare_conditioning(
        ref_image, prompts, provider, cfg.layer_set)
    manifest.complete("conditioning", {})

    ckpt_path = out / "field.ckpt"
    if manifest.done("distill") and ckpt_path.exists():
        tex_field = field_mod.load_checkpoint(ckpt_path)
    else:
        tex_field = field_mod.init_field(field_mod.HashGridConfig(), cfg.seed)
        dist_cfg = dataclasses.replace(cfg.distill, seed=cfg.seed)
        if dist_cfg.weights.lambda_style == 0.0:
            bundle = dataclasses.replace(bundle, style=None)
        reports_path = out / "reports.jsonl"
        with open(reports_path, "w") as rf:
            def emit(report):
                rf.write(json.dumps(dataclasses.asdict(report)) + "\n")
            pipeline.distill(mesh, tex_field, backend, bundle, dist_cfg,
                             schedule, report_callback=emit)
        field_mod.save_checkpoint(tex_field, ckpt_path)
        manifest.complete("distill", {"checkpoint": ckpt_path,
                                      "reports": reports_path})

    tex_path = out / "texture.png"
    if not (manifest.done("bake") and tex_path.exists()):
        hook = baking.grid_chart_atlas if cfg.baking.atlas == "auto" else None
        mesh_uv = baking.ensure_uv(mesh, atlas_hook=hook)
        texture, coverage = baking.bake(tex_field, mesh_uv, cfg.baking.resolution)
        texture = baking.edge_pad(texture, coverage, cfg.baking.pad_iterations)
        baking.save_texture_png(texture, tex_path)
        manifest.complete("bake", {"texture": tex_path})
    else:
        mesh_uv = baking.ensure_uv(
            mesh, atlas_hook=baking.grid_chart_atlas if cfg.baking.atlas == "auto" else None)

    obj_path = out / "mesh.obj"
    geometry.save_obj(mesh_uv, obj_path, mtl_name="mesh.mtl",
                      texture_name="texture.png")
    manifest.complete("export", {"mesh": obj_path, "mtl": out / "mesh.mtl"})
    return out


def cmd_generate(args) -> int:
    try:
        cfg = config_mod.load(args.config)
    except (ValueError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.backend is not None:
        cfg = dataclasses.replace(cfg, backend=args.backend)

    runs = [cfg]
    if args.sweep_cfg or args.sweep_style:
        cfgs = [float(v) for v in (args.sweep_cfg or "").split(",") if v] \
            or [cfg.distill.weights.lambda_cfg]
        styles = [float(v) for v in (args.sweep_style or "").split(",") if v] \
            or [cfg.distill.weights.lambda_style]
        runs = []
        base_out = Path(cfg.output_dir)
        for lc in cfgs:
            for ls in styles:
                weights = dataclasses.replace(cfg.distill.weights,
                                              lambda_cfg=lc, lambda_style=ls)
                runs.append(dataclasses.replace(
                    cfg,
                    distill=dataclasses.replace(cfg.distill, weights=weights),
                    output_dir=str(base_out / f"cfg{lc:g}_style{ls:g}")))

    for run_cfg in runs:
        try:
            out = run_generate(run_cfg)
        except Exception as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"generated: {out}")
    return 0


def cmd_bake(args) -> int:
    try:
        tex_field = field_mod.load_checkpoint(args.checkpoint)
        mesh = geometry.load_mesh(args.mesh)
        mesh = baking.ensure_uv(mesh, atlas_hook=baking.grid_chart_atlas
                                if args.atlas == "auto" else None)
        texture, coverage = baking.bake(tex_field, mesh, args.resolution)
        texture = baking.edge_pad(texture, coverage, args.pad_iterations)
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        baking.save_texture_png(texture, out)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"baked: {out} ({args.resolution}x{args.resolution})")
    return 0


def cmd_eval(args) -> int:
    try:
        result = Path(args.result)
        mesh_path = result / "mesh.obj"
        tex_path = result / "texture.png"
        if not mesh_path.exists() or not tex_path.exists():
            raise FileNotFoundError(f"result dir must contain mesh.obj and texture.png: {result}")
        mesh = geometry.load_mesh(mesh_path)
        texture = baking.load_texture_png(tex_path)
        ref_image = conditioning.load_reference_image(args.reference)
        provider = evaluation.HashEmbeddingProvider(args.provider_dimension)
        extractor = evaluation.SyntheticConvExtractor()
        cameras = evaluation.default_eval_cameras(width=args.view_size,
                                                  height=args.view_size)
        record = evaluation.evaluate_result(
            mesh, texture, ref_image, args.prompt, cameras, extractor, provider,
            output_path=result / "metrics.jsonl")
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"gram_distance: {record['gram_distance']:.6f}")
    print(f"clip_score: {record['clip_score']:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="texdistill",
                                description="Style-guided texture distillation")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run the full distillation pipeline")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--backend", default=None)
    g.add_argument("--sweep-cfg", default=None,
                   help="comma-separated lambda_cfg values for a guidance-scale sweep")
    g.add_argument("--sweep-style", default=None,
                   help="comma-separated lambda_style values for a guidance-scale sweep")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("bake", help="bake a checkpoint into a UV texture")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--mesh", required=True)
    b.add_argument("--resolution", type=int, default=baking.DEFAULT_RESOLUTION)
    b.add_argument("--pad-iterations", type=int, default=baking.DEFAULT_PAD_ITERATIONS)
    b.add_argument("--atlas", choices=("auto", "none"), default="auto")
    b.add_argument("--output", default="texture.png")
    b.set_defaults(func=cmd_bake)

    e = sub.add_parser("eval", help="compute style/semantic metrics for a result")
    e.add_argument("--result", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--prompt", required=True)
    e.add_argument("--view-size", type=int, default=128)
    e.add_argument("--provider-dimension", type=int, default=64)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
