import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from texdistill import baking as B
from texdistill import evaluation as E
from texdistill import field as F
from texdistill import meshes


def test_gram_matrix_brute_force():
    rng = np.random.default_rng(0)
    f = rng.standard_normal((4, 5, 6))
    g = E.gram_matrix(f)
    C, H, W = f.shape
    brute = np.zeros((C, C))
    for i in range(C):
        for j in range(C):
            brute[i, j] = (f[i] * f[j]).sum() / (C * H * W)
    np.testing.assert_allclose(g, brute, atol=1e-12)


def test_gram_matrix_properties():
    rng = np.random.default_rng(1)
    f = rng.standard_normal((6, 8, 8))
    g = E.gram_matrix(f)
    np.testing.assert_allclose(g, g.T, atol=0)
    eig = np.linalg.eigvalsh(g)
    assert eig.min() >= -1e-12
    with pytest.raises(ValueError):
        E.gram_matrix(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        E.gram_matrix(np.zeros((0, 4, 4)))


def test_gram_distance_zero_on_identical():
    rng = np.random.default_rng(2)
    img = rng.uniform(0, 1, (32, 32, 3))
    ext = E.SyntheticConvExtractor()
    assert E.gram_distance(img, [img, img], ext) == 0.0


def test_gram_distance_positive_on_different():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, (32, 32, 3))
    b = rng.uniform(0, 1, (32, 32, 3))
    ext = E.SyntheticConvExtractor()
    assert E.gram_distance(a, [b], ext) > 0.0


def test_gram_distance_mean_structure():
    # distance over views is the mean of single-view distances
    rng = np.random.default_rng(4)
    ref = rng.uniform(0, 1, (24, 24, 3))
    views = [rng.uniform(0, 1, (24, 24, 3)) for _ in range(3)]
    ext = E.SyntheticConvExtractor()
    combined = E.gram_distance(ref, views, ext)
    singles = [E.gram_distance(ref, [v], ext) for v in views]
    np.testing.assert_allclose(combined, np.mean(singles), rtol=1e-12)
    with pytest.raises(ValueError):
        E.gram_distance(ref, [], ext)


def test_synthetic_extractor_shapes_and_determinism():
    ext = E.SyntheticConvExtractor(layer_channels=(8, 16))
    img = np.random.default_rng(5).uniform(0, 1, (32, 32, 3))
    acts = ext.activations(img)
    assert [a.shape for a in acts] == [(8, 30, 30), (16, 13, 13)]
    assert np.all(acts[0] >= 0.0)
    acts2 = E.SyntheticConvExtractor(layer_channels=(8, 16)).activations(img)
    for a, b in zip(acts, acts2):
        assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        ext.activations(np.zeros((32, 32)))


def test_clip_score_bounds_and_clamp():
    v = np.array([1.0, 0.0])
    assert E.clip_score(v, v) == pytest.approx(2.5)
    assert E.clip_score(v, -v) == 0.0
    assert E.clip_score(v, np.array([1.0, 1.0])) == pytest.approx(
        2.5 / np.sqrt(2))
    with pytest.raises(ValueError):
        E.clip_score(v, np.zeros(2))


def test_hash_provider_deterministic_and_distinct():
    p = E.HashEmbeddingProvider(dimension=32)
    img = np.random.default_rng(6).uniform(0, 1, (8, 8, 3))
    a, b = p.embed_image(img), p.embed_image(img)
    assert np.array_equal(a, b)
    assert a.shape == (32,)
    np.testing.assert_allclose(np.linalg.norm(a), 1.0, atol=1e-12)
    assert not np.allclose(p.embed_text("x"), p.embed_text("y"))
    # image and text spaces are salted apart
    assert not np.allclose(p.embed_text("x"), p.embed_image(img))


def test_gram_psd_on_many_maps():
    rng = np.random.default_rng(7)
    for _ in range(100):
        c = int(rng.integers(1, 8))
        h = int(rng.integers(1, 10))
        w = int(rng.integers(1, 10))
        g = E.gram_matrix(rng.standard_normal((c, h, w)))
        assert np.linalg.eigvalsh(g).min() >= -1e-10


def test_default_eval_cameras():
    cams = E.default_eval_cameras(width=64, height=48)
    assert len(cams) == 4
    for cam in cams:
        assert cam.width == 64 and cam.height == 48
        np.testing.assert_allclose(np.linalg.norm(cam.position), 2.0, atol=1e-12)


def test_evaluate_result_record(tmp_path, cube_uv, small_field):
    tex, cov = B.bake(small_field, cube_uv, resolution=64)
    tex = B.edge_pad(tex, cov, 4)
    ref = np.random.default_rng(8).uniform(0, 1, (32, 32, 3))
    out = tmp_path / "eval.jsonl"
    record = E.evaluate_result(
        cube_uv, tex, ref, "a cube", E.default_eval_cameras(32, 32),
        E.SyntheticConvExtractor(), E.HashEmbeddingProvider(16), out)
    assert record["schema_version"] == 1
    assert record["num_views"] == 4
    assert record["gram_distance"] >= 0.0
    assert 0.0 <= record["clip_score"] <= 2.5
    assert len(record["per_view"]) == 4
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0]) == record
    # appending keeps earlier records
    E.evaluate_result(cube_uv, tex, ref, "a cube",
                      E.default_eval_cameras(32, 32),
                      E.SyntheticConvExtractor(), E.HashEmbeddingProvider(16), out)
    assert len(out.read_text().strip().splitlines()) == 2


def test_evaluate_result_missing_texture(cube_uv):
    with pytest.raises(ValueError):
        E.evaluate_result(cube_uv, None, np.zeros((8, 8, 3)), "p", [],
                          E.SyntheticConvExtractor(), E.HashEmbeddingProvider())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(3, 12), st.integers(3, 12),
       st.integers(0, 10 ** 6))
def test_gram_matrix_psd_property(c, h, w, seed):
    f = np.random.default_rng(seed).standard_normal((c, h, w))
    g = E.gram_matrix(f)
    assert np.linalg.eigvalsh(g).min() >= -1e-10
    assert g.shape == (c, c)
