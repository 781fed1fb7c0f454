import pytest

from texdistill import config as C
from texdistill.guidance import GuidanceWeights


def minimal_dict(**kw):
    d = {
        "mesh": "cube.obj",
        "reference_image": "ref.png",
        "prompt": "a cube, mosaic style",
        "content_prompt": "a cube",
        "output_dir": "out",
    }
    d.update(kw)
    return d


def test_defaults_roundtrip():
    cfg = C.from_dict(minimal_dict())
    assert cfg.distill.weights.lambda_cfg == 7.5
    assert cfg.distill.weights.lambda_style == 7.5
    assert cfg.schedule.T == 1000
    assert cfg.baking.resolution == 1024
    assert cfg.layer_set == "styletex-extended"
    again = C.from_dict(C.to_dict(cfg))
    assert again == cfg


def test_yaml_roundtrip(tmp_path):
    cfg = C.from_dict(minimal_dict(
        seed=7,
        distill={"iterations": 12,
                 "weights": {"lambda_cfg": 2.0, "lambda_style": 0.5},
                 "camera_policy": {"width": 16, "height": 16,
                                   "radius": [2.0, 2.0]},
                 "adam_betas": [0.8, 0.99]},
    ))
    path = tmp_path / "c.yaml"
    C.save(cfg, path)
    loaded = C.load(path)
    assert loaded == cfg
    assert loaded.distill.adam_betas == (0.8, 0.99)
    assert loaded.distill.camera_policy.radius == (2.0, 2.0)


def test_unknown_fields_rejected():
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(bogus=1))
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(distill={"bogus": 1}))
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(distill={"weights": {"bogus": 1}}))


def test_missing_required_fields():
    d = minimal_dict()
    del d["mesh"]
    with pytest.raises(ValueError):
        C.from_dict(d)


def test_validation_rules():
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(schema_version=99))
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(layer_set="nope"))
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(
            distill={"timestep_policy": {"min_t": 900, "max_t": 100}}))
    with pytest.raises(ValueError):
        C.from_dict(minimal_dict(prompt=""))


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        C.load(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ValueError):
        C.load(bad)


def test_validate_direct():
    cfg = C.from_dict(minimal_dict())
    assert C.validate(cfg) is cfg
