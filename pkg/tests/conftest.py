import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from scene_model import CameraView, GaussianScene, SyntheticSceneConfig, generate_synthetic_scene  # noqa: E402


def make_camera(camera_id=1, width=11, height=11, focal=100.0, rotation=None, translation=None, **kwargs):
    """Camera at the origin looking down +z unless a pose is given; principal point at the image centre."""
    rotation = np.eye(3) if rotation is None else rotation
    translation = np.zeros(3) if translation is None else translation
    return CameraView(camera_id, focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height,
                      rotation, translation, **kwargs)


def make_scene(positions, scales=0.1, opacities=1.0, frame=None):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = positions.shape[0]
    scales = np.broadcast_to(np.asarray(scales, dtype=np.float64), (n, 3)) if np.ndim(scales) < 2 else scales
    opacities = np.broadcast_to(np.asarray(opacities, dtype=np.float64), (n,))
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    return GaussianScene(positions, scales, rotations, opacities, frame)


SMALL_CONFIG = dict(gaussian_count=800, cluster_count=3, camera_count=9, width=64, height=48, layout="scattered",
                    altitude=60.0, cluster_spread=6.0)


@pytest.fixture(scope="session")
def small_world():
    """(scene, cameras) of a small clustered synthetic scene with a fitted frame."""
    return generate_synthetic_scene(SyntheticSceneConfig(**SMALL_CONFIG), seed=3)


@pytest.fixture(scope="session")
def skewed_world():
    """Two clusters with a 4:1 mass ratio."""
    cfg = SyntheticSceneConfig(gaussian_count=1200, cluster_count=2, cluster_masses=[4.0, 1.0], camera_count=16,
                               width=64, height=48, background_fraction=0.05, layout="scattered", altitude=60.0,
                               cluster_spread=6.0)
    return generate_synthetic_scene(cfg, seed=11)
