"""Rotations, rigid transforms, the fisheye camera model and covariance helpers.

Conventions used everywhere in the package:

* world frame is z-up, gravity along -z;
* gate frame has x along the race direction through the opening, z up;
* quaternions are Hamilton, scalar first ``[w, x, y, z]`` and rotate body
  vectors into the world (``v_world = R(q) @ v_body``);
* attitude errors are right-multiplicative: ``q_true = q ⊗ Exp(dtheta)``.

Quaternions are plain ``numpy`` arrays of shape (4,) so the hot loops of the
simulator and the filters avoid object overhead.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import BehindCamera, NoConvergence
from app.schemas.camera import CameraMount, FisheyeIntrinsics

GRAVITY = 9.81
GRAVITY_VECTOR = np.array([0.0, 0.0, -GRAVITY])
E_Z = np.array([0.0, 0.0, 1.0])

UNPROJECT_MAX_ITERATIONS = 20
UNPROJECT_TOLERANCE = 1e-12


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    w0, x0, y0, z0 = q
    w1, x1, y1, z1 = r
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_exp(rotvec: np.ndarray) -> np.ndarray:
    """Unit quaternion of the rotation vector ``rotvec`` (axis * angle)."""
    angle = math.sqrt(rotvec[0] ** 2 + rotvec[1] ** 2 + rotvec[2] ** 2)
    if angle < 1e-12:
        q = np.array([1.0, 0.5 * rotvec[0], 0.5 * rotvec[1], 0.5 * rotvec[2]])
        return q / np.linalg.norm(q)
    s = math.sin(0.5 * angle) / angle
    return np.array([math.cos(0.5 * angle), s * rotvec[0], s * rotvec[1], s * rotvec[2]])


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector of ``q``, taking the shortest of the two covers."""
    if q[0] < 0.0:
        q = -q
    v = q[1:]
    v_norm = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    if v_norm < 1e-12:
        return 2.0 * v / q[0]
    angle = 2.0 * math.atan2(v_norm, q[0])
    return angle * v / v_norm


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotmat_to_quat(matrix: np.ndarray) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(matrix).as_quat()
    q = np.array([w, x, y, z])
    return q if w >= 0.0 else -q


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def yaw_from_quat(q: np.ndarray) -> float:
    w, x, y, z = q
    return math.atan2(2 * (x * y + w * z), 1 - 2 * (y * y + z * z))


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def quat_equal(q: np.ndarray, r: np.ndarray, tol: float = 1e-9) -> bool:
    """Rotation equality; ``q`` and ``-q`` describe the same rotation."""
    return min(np.linalg.norm(q - r), np.linalg.norm(q + r)) <= tol


def quat_integrate(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Advance ``q`` by body rates ``omega`` held constant for ``dt``."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    return quat_normalize(quat_multiply(q, quat_exp(np.asarray(omega, dtype=float) * dt)))


def right_jacobian(phi: np.ndarray) -> np.ndarray:
    """Right Jacobian of SO(3): Exp(phi + d) ~ Exp(phi) Exp(J_r(phi) d)."""
    theta = math.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    K = skew(phi)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * K + K @ K / 6.0
    return (
        np.eye(3)
        - (1.0 - math.cos(theta)) / theta ** 2 * K
        + (theta - math.sin(theta)) / theta ** 3 * K @ K
    )


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``target <- source``: ``x_target = R x_source + t``."""
    rotation: np.ndarray = field(default_factory=quat_identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, rotation_matrix: np.ndarray, translation: np.ndarray) -> "Pose":
        return cls(rotmat_to_quat(rotation_matrix), np.asarray(translation, dtype=float))

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_rotmat(self.rotation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(
            quat_normalize(quat_multiply(self.rotation, other.rotation)),
            self.translation + self.matrix @ other.translation,
        )

    def inverse(self) -> "Pose":
        inv = quat_conjugate(self.rotation)
        return Pose(inv, -(quat_to_rotmat(inv) @ self.translation))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map a point (3,) or a stack of points (N, 3)."""
        points = np.asarray(points, dtype=float)
        return points @ self.matrix.T + self.translation

    def approx_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return quat_equal(self.rotation, other.rotation, tol) and bool(
            np.linalg.norm(self.translation - other.translation) <= tol
        )


# Fisheye camera model

def load_intrinsics(path: str) -> FisheyeIntrinsics:
    with open(path) as f:
        return FisheyeIntrinsics.model_validate(json.load(f))


def _distort(theta: float, k) -> float:
    t2 = theta * theta
    return theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))


def fisheye_project(x_cam: np.ndarray, K: FisheyeIntrinsics) -> np.ndarray:
    x, y, z = (float(c) for c in x_cam)
    if z <= 0.0:
        raise BehindCamera(f"point {x_cam} is not in front of the camera")
    r = math.hypot(x, y)
    if r < 1e-15:
        return np.array([K.cx, K.cy])
    theta_d = _distort(math.atan2(r, z), K.k)
    return np.array([K.fx * theta_d * x / r + K.cx, K.fy * theta_d * y / r + K.cy])


def incidence_angle(theta_d: float, k) -> Tuple[float, int]:
    """Invert the distortion polynomial with Newton's method.

    Returns the incidence angle and the number of iterations used.
    """
    theta = theta_d
    for iteration in range(1, UNPROJECT_MAX_ITERATIONS + 1):
        t2 = theta * theta
        residual = _distort(theta, k) - theta_d
        slope = 1.0 + t2 * (3 * k[0] + t2 * (5 * k[1] + t2 * (7 * k[2] + t2 * 9 * k[3])))
        if slope <= 0.0:
            raise NoConvergence(f"distortion polynomial not monotonic at theta={theta:.4f}")
        step = residual / slope
        theta -= step
        if not 0.0 <= theta < math.pi:
            raise NoConvergence(f"incidence angle left the valid range (theta_d={theta_d:.4f})")
        if abs(step) < UNPROJECT_TOLERANCE:
            return theta, iteration
    raise NoConvergence(f"no convergence after {UNPROJECT_MAX_ITERATIONS} iterations")


def fisheye_unproject(px: np.ndarray, K: FisheyeIntrinsics) -> np.ndarray:
    """Unit bearing ray of a fisheye pixel."""
    mx = (px[0] - K.cx) / K.fx
    my = (px[1] - K.cy) / K.fy
    theta_d = math.hypot(mx, my)
    if theta_d < 1e-15:
        return np.array([0.0, 0.0, 1.0])
    theta, _ = incidence_angle(theta_d, K.k)
    s = math.sin(theta) / theta_d
    return np.array([s * mx, s * my, math.cos(theta)])


def pinhole_matrix(K: FisheyeIntrinsics) -> np.ndarray:
    """Camera matrix of the undistorted (pinhole-equivalent) image."""
    return np.array([[K.fx, 0.0, K.cx], [0.0, K.fy, K.cy], [0.0, 0.0, 1.0]])


def pinhole_project(points_cam: np.ndarray, K: FisheyeIntrinsics) -> np.ndarray:
    points_cam = np.atleast_2d(points_cam)
    u = K.fx * points_cam[:, 0] / points_cam[:, 2] + K.cx
    v = K.fy * points_cam[:, 1] / points_cam[:, 2] + K.cy
    return np.column_stack([u, v])


def undistort_pixel(px: np.ndarray, K: FisheyeIntrinsics) -> np.ndarray:
    ray = fisheye_unproject(px, K)
    if ray[2] <= 0.0:
        raise BehindCamera("ray does not reach the pinhole image plane")
    return pinhole_project(ray, K)[0]


# Covariance helpers

def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def min_eigenvalue(P: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(P))[0])


def is_psd(P: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.allclose(P, P.T, atol=tol)) and min_eigenvalue(P) >= -tol


# Camera extrinsics

# camera axes (x right, y down, z forward) expressed in the body frame (x forward, y left, z up)
CAMERA_AXES = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def body_from_camera(mount: CameraMount) -> Pose:
    """Camera extrinsics; a positive uptilt points the optical axis above the body x axis."""
    R = rot_y(-math.radians(mount.uptilt_deg)) @ CAMERA_AXES
    return Pose(rotmat_to_quat(R), np.asarray(mount.offset, dtype=float))


def world_from_camera(q: np.ndarray, p: np.ndarray, mount: CameraMount) -> Pose:
    return Pose(q, np.asarray(p, dtype=float)).compose(body_from_camera(mount))


def camera_looking(position, yaw: float, pitch_up: float = 0.0) -> Pose:
    """Camera at ``position`` whose optical axis points along ``yaw``, tilted up by ``pitch_up``."""
    R = rot_z(yaw) @ rot_y(-pitch_up) @ CAMERA_AXES
    return Pose(rotmat_to_quat(R), np.asarray(position, dtype=float))
