import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacepose.errors import BehindCameraError, DegenerateGroundTruthError, InvalidInputError
from spacepose.geometry import (
    CameraIntrinsics,
    Pose,
    geodesic_angle,
    matrix_to_quat,
    pose_error_rotation,
    pose_error_translation,
    project,
    quat_conjugate,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_matrix,
    random_quaternion,
)

K = CameraIntrinsics(fx=1000, fy=1000, cx=512, cy=512, width=1024, height=1024)
QZ90 = np.array([math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4)])

quats = st.tuples(*[st.floats(-1, 1) for _ in range(4)]).filter(lambda q: np.linalg.norm(q) > 0.1)


def test_identity_quaternion_gives_identity_matrix():
    assert np.array_equal(quat_to_matrix([1, 0, 0, 0]), np.eye(3))


def test_half_turn_about_x():
    np.testing.assert_allclose(quat_to_matrix([0, 1, 0, 0]), np.diag([1.0, -1.0, -1.0]), atol=1e-15)


def test_quarter_turn_about_z_first_row():
    R = quat_to_matrix(QZ90)
    np.testing.assert_allclose(R[0], [0, -1, 0], atol=1e-12)
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_zero_quaternion_rejected():
    with pytest.raises(InvalidInputError):
        quat_to_matrix([0, 0, 0, 0])


@given(quats)
def test_rotation_matrix_is_proper_orthonormal(q):
    R = quat_to_matrix(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1) < 1e-9


@given(quats)
def test_antipodal_quaternions_share_matrix(q):
    q = np.asarray(q)
    assert np.array_equal(quat_to_matrix(q), quat_to_matrix(-q))


@given(quats)
def test_matrix_to_quat_roundtrip(q):
    q = np.asarray(q) / np.linalg.norm(q)
    q2 = matrix_to_quat(quat_to_matrix(q))
    assert geodesic_angle(q, q2) < 1e-6


@pytest.mark.parametrize("p, q, expected", [
    ((0, 0, 0), (1, 0, 0, 0), (512, 512)),
    ((1, 0, 0), (1, 0, 0, 0), (712, 512)),
    ((1, 0, 0), tuple(QZ90), (512, 712)),
])
def test_project_worked_examples(p, q, expected):
    uv = project(K, Pose(np.array(q), [0, 0, 5]), np.array(p, dtype=float))
    np.testing.assert_allclose(uv, expected, atol=1e-9)


def test_project_behind_camera_raises():
    with pytest.raises(BehindCameraError):
        project(K, Pose.identity(), np.array([0.0, 0.0, 0.0]))
    with pytest.raises(BehindCameraError):
        project(K, Pose([1, 0, 0, 0], [0, 0, -2]), np.array([0.0, 0.0, 0.0]))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_project_equivariance(seed):
    rng = np.random.default_rng(seed)
    pose = Pose(random_quaternion(rng), [rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(5, 20)])
    p = rng.uniform(-1, 1, size=(5, 3))
    direct = project(K, pose, p)
    moved = project(K, Pose.identity(), p @ pose.R.T + pose.t)
    np.testing.assert_allclose(direct, moved, rtol=1e-9)


def test_intrinsics_validation():
    with pytest.raises(InvalidInputError):
        CameraIntrinsics(0, 100, 50, 50, 100, 100)
    with pytest.raises(InvalidInputError):
        CameraIntrinsics(100, 100, 150, 50, 100, 100)


def test_translation_error_examples():
    assert pose_error_translation([[0, 0, 10]], [[0, 0, 10]]) == 0
    assert pose_error_translation([[0, 0, 11]], [[0, 0, 10]]) == pytest.approx(0.1, abs=1e-12)
    pred = [[0, 0, 11], [0, 0, 13]]
    gt = [[0, 0, 10], [0, 0, 10]]
    assert pose_error_translation(pred, gt) == pytest.approx(0.2, abs=1e-12)


def test_translation_error_zero_ground_truth():
    with pytest.raises(DegenerateGroundTruthError):
        pose_error_translation([[1, 0, 0]], [[0, 0, 0]])


def test_rotation_error_examples():
    q = np.array([0.5, 0.5, 0.5, 0.5])
    assert pose_error_rotation([q], [q]) == 0
    assert pose_error_rotation([-q], [q]) == 0
    assert pose_error_rotation([QZ90], [[1, 0, 0, 0]]) == pytest.approx(math.pi / 2, abs=1e-9)


def test_rotation_error_rejects_non_unit():
    with pytest.raises(InvalidInputError):
        pose_error_rotation([[2, 0, 0, 0]], [[1, 0, 0, 0]])


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_rotation_error_symmetry_and_sign_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = random_quaternion(rng), random_quaternion(rng)
    e = pose_error_rotation([a], [b])
    assert pose_error_rotation([b], [a]) == pytest.approx(e, abs=1e-12)
    assert pose_error_rotation([-a], [b]) == pytest.approx(e, abs=1e-12)
    assert pose_error_rotation([a], [-b]) == pytest.approx(e, abs=1e-12)
    assert 0 <= e <= math.pi


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_composition_with_conjugate_is_identity(seed):
    q = random_quaternion(np.random.default_rng(seed))
    ident = quat_multiply(q, quat_conjugate(q))
    # arccos near 1 resolves angles only down to about 2*sqrt(2*eps) ~ 4e-8
    assert pose_error_rotation([ident], [[1, 0, 0, 0]]) < 1e-7


def test_axis_angle_matches_matrix():
    q = quat_from_axis_angle([0, 0, 1], math.pi / 2)
    np.testing.assert_allclose(q, QZ90, atol=1e-15)


def test_pose_dict_roundtrip():
    pose = Pose(random_quaternion(np.random.default_rng(3)), [0.1, -0.2, 7.0])
    back = Pose.from_dict(pose.to_dict())
    np.testing.assert_array_equal(back.t, pose.t)
    assert geodesic_angle(back.q, pose.q) < 1e-12
