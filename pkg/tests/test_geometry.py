import numpy as np
import pytest

from texdistill import field as F
from texdistill import geometry as G
from texdistill import meshes


def test_load_obj_normalizes(tmp_path):
    path = tmp_path / "cube.obj"
    meshes.write_cube_obj(path, scale=7.0)
    mesh = G.load_mesh(path)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    np.testing.assert_allclose((hi - lo).max(), 1.0, atol=1e-12)
    np.testing.assert_allclose((lo + hi) / 2.0, 0.0, atol=1e-12)
    assert mesh.num_faces == 12
    assert mesh.uv.shape == (12, 3, 2)


def test_load_obj_quads_triangulated(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = G.load_mesh(path)
    assert mesh.num_faces == 2
    assert mesh.uv is None


def test_load_mesh_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(
        '{"vertices": [[0,0,0],[2,0,0],[2,2,0],[0,2,0]], "faces": [[0,1,2,3]]}')
    mesh = G.load_mesh(path)
    assert mesh.num_faces == 2
    assert abs(mesh.vertices.max() - 0.5) < 1e-12


def test_load_mesh_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        G.load_mesh(tmp_path / "nope.obj")
    bad = tmp_path / "m.stl"
    bad.write_text("x")
    with pytest.raises(ValueError):
        G.load_mesh(bad)


def test_save_obj_roundtrip(tmp_path, cube_uv):
    path = tmp_path / "out.obj"
    G.save_obj(cube_uv, path, mtl_name="out.mtl", texture_name="tex.png")
    loaded = G.load_mesh(path)
    np.testing.assert_allclose(loaded.vertices, cube_uv.vertices, atol=1e-7)
    np.testing.assert_allclose(loaded.uv, cube_uv.uv, atol=1e-7)
    assert "map_Kd tex.png" in (tmp_path / "out.mtl").read_text()


def test_camera_basis_orthonormal(front_camera):
    r, u, b = front_camera._basis
    for a in (r, u, b):
        np.testing.assert_allclose(np.linalg.norm(a), 1.0, atol=1e-12)
    assert abs(r @ u) < 1e-12 and abs(r @ b) < 1e-12 and abs(u @ b) < 1e-12


def test_camera_space_convention(front_camera):
    # camera at +2x looking at origin: origin sits 2 units in front (-z)
    p = front_camera.to_camera_space(np.zeros((1, 3)))
    np.testing.assert_allclose(p, [[0.0, 0.0, -2.0]], atol=1e-12)
    # world +z is screen up for this camera
    up = front_camera.rotate_to_camera(np.array([[0.0, 0.0, 1.0]]))
    np.testing.assert_allclose(up, [[0.0, 1.0, 0.0]], atol=1e-12)


def test_camera_degenerate_position():
    with pytest.raises(ValueError):
        G.Camera(position=np.zeros(3), target=np.zeros(3),
                 up=np.array([0.0, 0.0, 1.0]), fov_y=45.0)


def test_sample_camera_within_policy():
    policy = G.CameraPolicy(azimuth_deg=(10.0, 20.0), elevation_deg=(5.0, 6.0),
                            radius=(2.0, 2.1), fov_y_deg=(45.0, 45.0))
    rng = np.random.default_rng(0)
    for _ in range(20):
        cam = G.sample_camera(rng, policy)
        r = np.linalg.norm(cam.position)
        assert 2.0 <= r <= 2.1
        el = np.rad2deg(np.arcsin(cam.position[2] / r))
        assert 5.0 <= el <= 6.0 + 1e-9
        az = np.rad2deg(np.arctan2(cam.position[1], cam.position[0]))
        assert 10.0 - 1e-9 <= az <= 20.0 + 1e-9


def test_rasterize_centered_cube_coverage(cube, front_camera):
    face_id, bary, zbuf = rasterize_result = G.rasterize(cube, front_camera)
    mask = face_id >= 0
    # unit cube, near face 1.5 units from the camera, 45 deg fov: the facing
    # square spans ~0.8 of the frame per axis
    frac = mask.mean()
    assert 0.5 < frac < 0.8
    H, W = mask.shape
    assert mask[H // 2, W // 2]
    assert not mask[0, 0]
    # covered barycentrics sum to one
    np.testing.assert_allclose(bary[mask].sum(axis=1), 1.0, atol=1e-9)
    assert np.isfinite(zbuf[mask]).all()


def test_rasterize_zbuffer_picks_near_face(front_camera):
    near = meshes.quad_mesh(axis="x", offset=0.3)
    far = meshes.quad_mesh(axis="x", offset=-0.3)
    combined = G.Mesh(
        vertices=np.vstack([near.vertices, far.vertices]),
        faces=np.vstack([near.faces, far.faces + 4]))
    face_id, _, _ = G.rasterize(combined, front_camera)
    covered = face_id[face_id >= 0]
    assert covered.size
    assert np.all(covered < 2)  # only the near quad wins


def test_perspective_correct_barycentrics(front_camera):
    # a quad tilted in depth: interpolated 3D position must land on the plane
    v = np.array([[0.4, -0.5, -0.5], [-0.4, 0.5, -0.5],
                  [-0.4, 0.5, 0.5], [0.4, -0.5, 0.5]])
    mesh = G.Mesh(vertices=v, faces=np.array([[0, 1, 2], [0, 2, 3]]))
    face_id, bary, _ = G.rasterize(mesh, front_camera)
    mask = face_id >= 0
    tri = mesh.vertices[mesh.faces[face_id[mask]]]
    pos = (bary[mask][:, :, None] * tri).sum(axis=1)
    # plane: x = 0.4 - 0.8 * (y + 0.5)
    np.testing.assert_allclose(pos[:, 0], 0.4 - 0.8 * (pos[:, 1] + 0.5), atol=1e-9)


def test_render_color_background_and_field(cube, small_field, front_camera):
    view = G.render_color(cube, small_field, front_camera, background=(0.1, 0.2, 0.3))
    bg = view.color[~view.mask]
    np.testing.assert_allclose(bg, np.broadcast_to([0.1, 0.2, 0.3], bg.shape), atol=0)
    expect = F.query(small_field, view.surface_position[view.mask])
    np.testing.assert_allclose(view.color[view.mask], expect, atol=0)


def test_render_view_gradient_matches_direct_backward(cube, small_field, front_camera):
    view = G.render_color(cube, small_field, front_camera)
    rng = np.random.default_rng(3)
    d = rng.standard_normal(view.color.shape)
    grad = G.render_view_gradient(view, d, small_field)
    direct = F.backward(small_field, view.surface_position[view.mask],
                        d[view.mask])
    np.testing.assert_allclose(grad, direct, atol=0)


def test_render_view_gradient_ignores_background(cube, small_field, front_camera):
    view = G.render_color(cube, small_field, front_camera)
    d = np.ones(view.color.shape)
    d_masked = d.copy()
    d_masked[~view.mask] = 123.0  # background gradient must not matter
    a = G.render_view_gradient(view, d, small_field)
    b = G.render_view_gradient(view, d_masked, small_field)
    np.testing.assert_allclose(a, b, atol=0)


def test_geometry_maps_face_on_quad(front_camera):
    mesh = meshes.quad_mesh(axis="x")
    maps = G.render_geometry_maps(mesh, front_camera)
    face_id, _, _ = G.rasterize(mesh, front_camera)
    mask = face_id >= 0
    # flat facing quad: constant depth remaps to 0.5, normal is (0, 0, 1)
    np.testing.assert_allclose(maps.depth[mask], 0.5, atol=1e-12)
    n = maps.normal[mask]
    np.testing.assert_allclose(n, np.broadcast_to([0.0, 0.0, 1.0], n.shape), atol=1e-9)
    np.testing.assert_allclose(maps.normal[~mask], 0.0, atol=0)


def test_geometry_maps_depth_range(cube, front_camera):
    maps = G.render_geometry_maps(cube, front_camera)
    face_id, _, _ = G.rasterize(cube, front_camera)
    mask = face_id >= 0
    d = maps.depth[mask]
    assert d.min() == 0.0 and d.max() == 1.0
    assert np.all((d >= 0.0) & (d <= 1.0))
    assert np.all(maps.depth[~mask] == 0.0)


def test_geometry_maps_normals_face_camera(cube, front_camera):
    maps = G.render_geometry_maps(cube, front_camera)
    face_id, _, _ = G.rasterize(cube, front_camera)
    mask = face_id >= 0
    assert np.all(maps.normal[mask][:, 2] >= 0.0)
    np.testing.assert_allclose(np.linalg.norm(maps.normal[mask], axis=1),
                               1.0, atol=1e-9)


def test_export_geometry_pngs(tmp_path, cube, front_camera):
    from PIL import Image
    maps = G.render_geometry_maps(cube, front_camera)
    G.export_depth_png(maps, tmp_path / "d.png")
    G.export_normal_png(maps, tmp_path / "n.png")
    d = Image.open(tmp_path / "d.png")
    n = Image.open(tmp_path / "n.png")
    assert d.size == (64, 64) and n.size == (64, 64)
    assert n.mode == "RGB"


def test_render_textured_solid_texture(cube_uv, front_camera):
    tex = np.full((32, 32, 3), 200, dtype=np.uint8)
    view = G.render_textured(cube_uv, tex, front_camera)
    np.testing.assert_allclose(view.color[view.mask], 200.0 / 255.0, atol=0)


def test_render_textured_requires_uv(cube, front_camera):
    with pytest.raises(ValueError):
        G.render_textured(cube, np.zeros((8, 8, 3), dtype=np.uint8), front_camera)
