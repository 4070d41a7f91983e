"""Shared helpers for the test suite."""

import numpy as np
import pytest

from submaploc.geometry import RigidTransform


def random_rotation(rng):
    """Uniform-ish random rotation from a QR decomposition with sign fix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def random_transform(rng, translation_scale=10.0):
    return RigidTransform(rotation=random_rotation(rng),
                          translation=rng.uniform(-translation_scale,
                                                  translation_scale, 3))


def rotation_about_z(angle_deg):
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_x(angle_deg):
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@pytest.fixture(scope="session")
def small_world():
    """One modest synthetic world shared by the slower integration tests."""
    from submaploc.evalharness import SyntheticWorldConfig, generate_world
    cfg = SyntheticWorldConfig(seed=3, extent=40.0, n_landmark_surfaces=40,
                               trajectory_length=30.0, scan_points=1024)
    return generate_world(cfg)
