import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from app.exceptions import BehindCamera
from app.schemas.camera import CameraMount, FisheyeIntrinsics
from app.services.geometry import (
    Pose, _distort, body_from_camera, camera_looking, fisheye_project,
    fisheye_unproject, incidence_angle, is_psd, quat_equal, quat_exp, quat_identity, quat_integrate,
    quat_log, quat_multiply, quat_to_rotmat, right_jacobian, rotmat_to_quat, symmetrize, yaw_from_quat,
)


def random_quat(rng):
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def test_integrate_zero_rate_is_identity():
    q = quat_integrate(quat_identity(), np.zeros(3), 0.1)
    assert quat_equal(q, quat_identity())


def test_integrate_half_turn_about_z():
    q = quat_integrate(quat_identity(), np.array([0.0, 0.0, math.pi]), 1.0)
    assert quat_equal(q, np.array([0.0, 0.0, 0.0, 1.0]))


def test_integrate_many_small_steps_matches_closed_form():
    omega = np.array([0.1, 0.2, 0.3])
    q = quat_identity()
    for _ in range(1000):
        q = quat_integrate(q, omega, 1e-3)
    assert quat_equal(q, quat_exp(omega), tol=1e-6)
    assert abs(np.linalg.norm(q) - 1.0) < 1e-9


def test_integrate_rejects_negative_dt():
    with pytest.raises(ValueError):
        quat_integrate(quat_identity(), np.zeros(3), -0.1)


def test_rotation_matrix_matches_scipy(rng):
    for _ in range(50):
        q = random_quat(rng)
        expected = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        assert np.allclose(quat_to_rotmat(q), expected, atol=1e-12)
        assert quat_equal(rotmat_to_quat(expected), q, tol=1e-9)


def test_exp_log_round_trip(rng):
    for _ in range(50):
        v = rng.uniform(-1.0, 1.0, 3)
        assert np.allclose(quat_log(quat_exp(v)), v, atol=1e-12)


def test_double_cover_equal():
    q = quat_exp(np.array([0.3, -0.2, 0.1]))
    assert quat_equal(q, -q)


def test_right_jacobian_first_order(rng):
    phi = rng.uniform(-1.0, 1.0, 3)
    d = 1e-6 * rng.standard_normal(3)
    lhs = quat_exp(phi + d)
    rhs = quat_multiply(quat_exp(phi), quat_exp(right_jacobian(phi) @ d))
    assert quat_equal(lhs, rhs, tol=1e-10)


def test_pose_inverse_composes_to_identity(rng):
    for _ in range(20):
        T = Pose(random_quat(rng), rng.standard_normal(3))
        assert T.inverse().compose(T).approx_equal(Pose.identity())
        assert T.compose(T.inverse()).approx_equal(Pose.identity())


def test_pose_composition_associative(rng):
    a, b, c = (Pose(random_quat(rng), rng.standard_normal(3)) for _ in range(3))
    assert a.compose(b).compose(c).approx_equal(a.compose(b.compose(c)), tol=1e-12)


def test_pose_transform_matches_matrix(rng):
    T = Pose(random_quat(rng), rng.standard_normal(3))
    points = rng.standard_normal((5, 3))
    expected = np.array([T.matrix @ p + T.translation for p in points])
    assert np.allclose(T.transform(points), expected)


def test_axial_point_projects_to_principal_point(intrinsics):
    px = fisheye_project(np.array([0.0, 0.0, 5.0]), intrinsics)
    assert np.allclose(px, [intrinsics.cx, intrinsics.cy])


def test_equidistant_radius_without_distortion(pinhole):
    theta = 0.6
    px = fisheye_project(np.array([math.sin(theta), 0.0, math.cos(theta)]), pinhole)
    assert px[0] - pinhole.cx == pytest.approx(pinhole.fx * theta, rel=1e-12)
    assert px[1] == pytest.approx(pinhole.cy)


def test_project_behind_camera_raises(intrinsics):
    with pytest.raises(BehindCamera):
        fisheye_project(np.array([0.1, 0.0, -1.0]), intrinsics)


def test_unproject_principal_point(intrinsics):
    assert np.allclose(fisheye_unproject(np.array([intrinsics.cx, intrinsics.cy]), intrinsics), [0.0, 0.0, 1.0])


def test_fisheye_round_trip(intrinsics, rng):
    worst_ray = 0.0
    worst_px = 0.0
    for _ in range(2000):
        theta = rng.uniform(0.0, 1.3)
        phi = rng.uniform(-math.pi, math.pi)
        ray = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
        px = fisheye_project(ray, intrinsics)
        back = fisheye_unproject(px, intrinsics)
        worst_ray = max(worst_ray, float(np.linalg.norm(back - ray)))
        worst_px = max(worst_px, float(np.linalg.norm(fisheye_project(back, intrinsics) - px)))
    assert worst_ray < 1e-9
    assert worst_px < 1e-9


def test_edge_pixel_unprojects_within_iteration_budget(intrinsics):
    theta_d = (intrinsics.width - 1 - intrinsics.cx) / intrinsics.fx
    theta, iterations = incidence_angle(theta_d, intrinsics.k)
    assert iterations <= 20
    assert _distort(theta, intrinsics.k) == pytest.approx(theta_d, abs=1e-12)


def test_strong_distortion_converges():
    K = FisheyeIntrinsics(fx=300.0, fy=300.0, cx=320.0, cy=240.0, k=(0.3, 0.0, 0.0, 0.0), width=640, height=480)
    ray = fisheye_unproject(np.array([639.0, 240.0]), K)
    assert abs(np.linalg.norm(ray) - 1.0) < 1e-12
    assert np.allclose(fisheye_project(ray, K), [639.0, 240.0], atol=1e-9)


def test_intrinsics_reject_principal_point_outside_image():
    with pytest.raises(ValueError):
        FisheyeIntrinsics(fx=300.0, fy=300.0, cx=700.0, cy=240.0, width=640, height=480)


def test_symmetrize_idempotent(rng):
    A = rng.standard_normal((4, 4))
    S = symmetrize(A)
    assert np.array_equal(symmetrize(S), S)


def test_is_psd(rng):
    A = rng.standard_normal((3, 3))
    assert is_psd(A @ A.T)
    assert not is_psd(np.diag([1.0, -1e-3, 2.0]))
    assert not is_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_camera_without_uptilt_looks_along_body_x():
    cam = body_from_camera(CameraMount(uptilt_deg=0.0))
    assert np.allclose(cam.matrix @ [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], atol=1e-12)
    # image x (right) is the body's -y
    assert np.allclose(cam.matrix @ [1.0, 0.0, 0.0], [0.0, -1.0, 0.0], atol=1e-12)


def test_camera_uptilt_raises_optical_axis():
    cam = body_from_camera(CameraMount(uptilt_deg=25.0))
    axis = cam.matrix @ [0.0, 0.0, 1.0]
    assert np.allclose(axis, [math.cos(math.radians(25.0)), 0.0, math.sin(math.radians(25.0))], atol=1e-12)


def test_camera_looking_along_yaw():
    cam = camera_looking([1.0, 2.0, 3.0], math.pi / 2)
    assert np.allclose(cam.matrix @ [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], atol=1e-12)
    assert np.allclose(cam.translation, [1.0, 2.0, 3.0])


def test_yaw_from_quat():
    q = quat_exp(np.array([0.0, 0.0, 0.7]))
    assert yaw_from_quat(q) == pytest.approx(0.7)
