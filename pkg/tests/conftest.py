import numpy as np
import pytest

from texdistill import diffusion, field, meshes
from texdistill.geometry import Camera


@pytest.fixture
def small_field_config():
    return field.HashGridConfig(levels=2, base_resolution=4, growth_factor=2.0,
                                features_per_level=2, table_size_log2=8,
                                mlp_hidden=(8,))


@pytest.fixture
def small_field(small_field_config):
    f = field.init_field(small_field_config, seed=11)
    # push parameters away from the tiny init so pre-activations clear the
    # rectifier kinks (finite differences need a locally smooth loss)
    rng = np.random.default_rng(99)
    f.params = f.params + 0.3 * rng.standard_normal(f.num_params)
    return f


@pytest.fixture
def cube():
    return meshes.cube_mesh()


@pytest.fixture
def cube_uv():
    return meshes.cube_mesh(with_uv=True)


@pytest.fixture
def schedule():
    return diffusion.make_schedule(1000)


@pytest.fixture
def front_camera():
    return Camera(position=np.array([2.0, 0.0, 0.0]), target=np.zeros(3),
                  up=np.array([0.0, 0.0, 1.0]), fov_y=45.0, width=64, height=64)
