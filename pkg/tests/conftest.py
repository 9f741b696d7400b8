import numpy as np
import pytest

from radodom.geometry import Pose, se3_exp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, max_angle=np.pi / 2, max_trans=5.0, time=None) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    xi = np.concatenate([rng.uniform(-max_trans, max_trans, 3), axis * rng.uniform(0, max_angle)])
    return se3_exp(xi, time)


def assert_pose_close(a: Pose, b: Pose, tol=1e-9):
    np.testing.assert_allclose(a.R, b.R, atol=tol)
    np.testing.assert_allclose(a.t, b.t, atol=tol)
