import json

import numpy as np
import pytest
import yaml
from PIL import Image

from texdistill import cli, meshes


@pytest.fixture
def workdir(tmp_path):
    meshes.write_cube_obj(tmp_path / "cube.obj")
    ref = np.random.default_rng(0).integers(0, 256, (16, 16, 3)).astype(np.uint8)
    Image.fromarray(ref).save(tmp_path / "ref.png")
    return tmp_path


def write_config(workdir, name="run.yaml", **overrides):
    cfg = {
        "mesh": str(workdir / "cube.obj"),
        "reference_image": str(workdir / "ref.png"),
        "prompt": "a cube, mosaic style",
        "content_prompt": "a cube",
        "output_dir": str(workdir / "out"),
        "seed": 3,
        "backend": "analytic",
        "backend_options": {"shape": [16, 16, 3], "mu": [0.5, 0.5, 0.5],
                            "prompts": {"a cube, mosaic style": [0.8, 0.2, 0.2]}},
        "distill": {
            "iterations": 4,
            "weights": {"lambda_cfg": 1.0, "lambda_style": 0.5},
            "camera_policy": {"width": 16, "height": 16},
        },
        "baking": {"resolution": 32, "pad_iterations": 2},
    }
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    path = workdir / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_generate_end_to_end(workdir, capsys):
    cfg_path = write_config(workdir)
    assert cli.main(["generate", "--config", str(cfg_path)]) == 0
    out = workdir / "out"
    for name in ("config.yaml", "reports.jsonl", "field.ckpt", "texture.png",
                 "mesh.obj", "mesh.mtl", "MANIFEST.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "MANIFEST.json").read_text())
    assert manifest["stages"] == list(cli.STAGES)
    reports = [json.loads(l) for l in (out / "reports.jsonl").read_text().splitlines()]
    assert len(reports) == 4
    assert not (out / cli.LOCK_NAME).exists()
    assert "generated" in capsys.readouterr().out


def test_generate_deterministic_across_runs(workdir):
    a = write_config(workdir, name="a.yaml", output_dir=str(workdir / "a"))
    b = write_config(workdir, name="b.yaml", output_dir=str(workdir / "b"))
    assert cli.main(["generate", "--config", str(a)]) == 0
    assert cli.main(["generate", "--config", str(b)]) == 0
    for name in ("field.ckpt", "texture.png"):
        assert (workdir / "a" / name).read_bytes() == \
            (workdir / "b" / name).read_bytes(), name


def test_generate_seed_override_changes_output(workdir):
    a = write_config(workdir, name="a.yaml", output_dir=str(workdir / "a"))
    b = write_config(workdir, name="b.yaml", output_dir=str(workdir / "b"))
    assert cli.main(["generate", "--config", str(a)]) == 0
    assert cli.main(["generate", "--config", str(b), "--seed", "4"]) == 0
    assert (workdir / "a" / "field.ckpt").read_bytes() != \
        (workdir / "b" / "field.ckpt").read_bytes()


def test_generate_resume_skips_distill(workdir):
    cfg_path = write_config(workdir)
    assert cli.main(["generate", "--config", str(cfg_path)]) == 0
    out = workdir / "out"
    ckpt = (out / "field.ckpt").read_bytes()
    stamp = (out / "reports.jsonl").stat().st_mtime_ns
    assert cli.main(["generate", "--config", str(cfg_path)]) == 0
    assert (out / "field.ckpt").read_bytes() == ckpt
    # distillation not re-run: reports untouched
    assert (out / "reports.jsonl").stat().st_mtime_ns == stamp


def test_generate_lock_blocks_concurrent_run(workdir, capsys):
    cfg_path = write_config(workdir)
    out = workdir / "out"
    out.mkdir()
    (out / cli.LOCK_NAME).write_text("held")
    assert cli.main(["generate", "--config", str(cfg_path)]) == 1
    assert "locked" in capsys.readouterr().err
    assert (out / cli.LOCK_NAME).read_text() == "held"


def test_generate_bad_config_exits_nonzero(workdir, capsys):
    bad = workdir / "bad.yaml"
    bad.write_text("mesh: x\n")
    assert cli.main(["generate", "--config", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err
    assert cli.main(["generate", "--config", str(workdir / "none.yaml")]) == 1


def test_generate_sweep_layout(workdir):
    cfg_path = write_config(workdir, distill={"iterations": 2})
    assert cli.main(["generate", "--config", str(cfg_path),
                     "--sweep-cfg", "1,2", "--sweep-style", "0.5"]) == 0
    out = workdir / "out"
    for sub in ("cfg1_style0.5", "cfg2_style0.5"):
        assert (out / sub / "texture.png").exists()


def test_bake_subcommand(workdir):
    cfg_path = write_config(workdir)
    assert cli.main(["generate", "--config", str(cfg_path)]) == 0
    out_tex = workdir / "rebaked.png"
    assert cli.main(["bake",
                     "--checkpoint", str(workdir / "out" / "field.ckpt"),
                     "--mesh", str(workdir / "cube.obj"),
                     "--resolution", "32", "--pad-iterations", "2",
                     "--output", str(out_tex)]) == 0
    # same checkpoint, mesh, and settings reproduce the generate-run texture
    assert out_tex.read_bytes() == (workdir / "out" / "texture.png").read_bytes()


def test_bake_missing_checkpoint(workdir, capsys):
    assert cli.main(["bake", "--checkpoint", str(workdir / "no.ckpt"),
                     "--mesh", str(workdir / "cube.obj"),
                     "--output", str(workdir / "t.png")]) == 1
    assert "error:" in capsys.readouterr().err


def test_eval_subcommand(workdir, capsys):
    cfg_path = write_config(workdir)
    assert cli.main(["generate", "--config", str(cfg_path)]) == 0
    assert cli.main(["eval", "--result", str(workdir / "out"),
                     "--reference", str(workdir / "ref.png"),
                     "--prompt", "a cube, mosaic style",
                     "--view-size", "32"]) == 0
    out = capsys.readouterr().out
    assert "gram_distance:" in out and "clip_score:" in out
    metrics = (workdir / "out" / "metrics.jsonl").read_text().splitlines()
    record = json.loads(metrics[-1])
    assert record["num_views"] == 4
    assert 0.0 <= record["clip_score"] <= 2.5


def test_eval_missing_result(workdir, capsys):
    assert cli.main(["eval", "--result", str(workdir / "nothing"),
                     "--reference", str(workdir / "ref.png"),
                     "--prompt", "p"]) == 1
    assert "error:" in capsys.readouterr().err
