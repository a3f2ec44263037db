import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autocollect.geometry import (
    PointCloud,
    Pose,
    compose,
    invert,
    pose_distance,
    transform_points,
)


def random_pose(rng: np.random.Generator) -> Pose:
    rotvec = rng.normal(size=3)
    norm = np.linalg.norm(rotvec)
    if norm > np.pi - 1e-3:
        rotvec *= (np.pi - 1e-3) / norm
    return Pose.from_rotvec(rotvec, rng.uniform(-1, 1, size=3))


def test_identity_compose_is_neutral():
    p = Pose.from_rotvec([0.1, -0.2, 0.3], [1.0, 2.0, 3.0])
    assert compose(Pose.identity(), p).almost_equal(p)
    assert compose(p, Pose.identity()).almost_equal(p)


def test_compose_with_inverse_gives_identity():
    p = Pose.from_rotvec([0.4, 0.1, -0.9], [0.2, -0.5, 0.7])
    assert compose(p, invert(p)).almost_equal(Pose.identity())


def test_pure_translation_composition_adds():
    step = Pose.from_translation([1.0, 0.0, 0.0])
    out = compose(step, step)
    np.testing.assert_allclose(out.translation, [2.0, 0.0, 0.0], atol=1e-12)


def test_invert_identity_and_translation():
    assert invert(Pose.identity()).almost_equal(Pose.identity())
    p = Pose.from_translation([1.0, 2.0, 3.0])
    np.testing.assert_allclose(invert(p).translation, [-1.0, -2.0, -3.0], atol=1e-12)


def test_invert_z_rotation():
    p = Pose.from_rotvec([0.0, 0.0, np.pi / 2])
    expected = Pose.from_rotvec([0.0, 0.0, -np.pi / 2])
    assert invert(p).almost_equal(expected)


def test_transform_points_identity_and_rotation():
    cloud = PointCloud(np.array([[1.0, 0.0, 0.0]]), np.array([3]))
    same = transform_points(cloud, Pose.identity())
    np.testing.assert_allclose(same.positions, cloud.positions)
    rot = Pose.from_rotvec([0.0, 0.0, np.pi / 2])
    turned = transform_points(cloud, rot)
    np.testing.assert_allclose(turned.positions, [[0.0, 1.0, 0.0]], atol=1e-9)
    assert turned.labels.tolist() == [3]


def test_transform_points_round_trip():
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.normal(size=(50, 3)), rng.integers(0, 5, size=50))
    p = random_pose(rng)
    back = transform_points(transform_points(cloud, p), invert(p))
    np.testing.assert_allclose(back.positions, cloud.positions, atol=1e-9)


def test_pose_distance_cases():
    p = Pose.from_rotvec([0.3, 0.0, 0.1], [0.5, 0.5, 0.5])
    assert pose_distance(p, p) == (0.0, 0.0)

    q = Pose.from_rotvec([0.3, 0.0, 0.1], [0.55, 0.5, 0.5])
    dt, dr = pose_distance(p, q)
    assert dt == pytest.approx(0.05, abs=1e-12)
    assert dr == pytest.approx(0.0, abs=1e-12)

    flip = Pose.from_rotvec([np.pi, 0.0, 0.0], [0.5, 0.5, 0.5])
    base = Pose.from_translation([0.5, 0.5, 0.5])
    dt, dr = pose_distance(base, flip)
    assert dt == pytest.approx(0.0, abs=1e-12)
    assert dr == pytest.approx(np.pi, abs=1e-9)


def test_quaternion_canonicalized_to_positive_w():
    p = Pose(np.zeros(3), np.array([-0.5, 0.5, 0.5, 0.5]))
    assert p.rotation[0] > 0
    assert np.linalg.norm(p.rotation) == pytest.approx(1.0, abs=1e-12)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        Pose(np.zeros(2), np.array([1.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.inf, 0.0, 0.0]]), np.array([1]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((2, 3)), np.array([-1, 0]))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_composition_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_pose(rng) for _ in range(3))
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    dt, dr = pose_distance(left, right)
    assert dt < 1e-9 and dr < 1e-9


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_invert_is_involution(seed):
    rng = np.random.default_rng(seed)
    p = random_pose(rng)
    assert invert(invert(p)).almost_equal(p)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_transform_preserves_pairwise_distances(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(20, 3))
    cloud = PointCloud(pts, np.arange(20))
    moved = transform_points(cloud, random_pose(rng))
    d_before = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
    d_after = np.linalg.norm(
        moved.positions[:, None] - moved.positions[None, :], axis=-1)
    np.testing.assert_allclose(d_after, d_before, atol=1e-9)


def test_cloud_list_round_trip():
    cloud = PointCloud(np.array([[0.1, 0.2, 0.3], [4.0, 5.0, 6.0]]), np.array([0, 7]))
    again = PointCloud.from_list(cloud.to_list())
    np.testing.assert_array_equal(again.positions, cloud.positions)
    np.testing.assert_array_equal(again.labels, cloud.labels)
    assert PointCloud.from_list([]).positions.shape == (0, 3)
