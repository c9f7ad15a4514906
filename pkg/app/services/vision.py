"""Synthetic gate-corner detector and the planar PnP solver.

The detector stands in for a learned corner network: it projects the known
inner corners of every gate, culls what a camera could not see, and corrupts
the rest with pixel noise and whole-gate dropout. PnP initialises from the
homography of the four planar correspondences and refines the pose with
Levenberg-Marquardt on the reprojection error.
"""
import logging
import math
from dataclasses import replace
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy.optimize import least_squares

from app.exceptions import (
    BehindCamera, DegenerateConfiguration, FarBehind, NoConvergence, RaceSimError,
)
from app.models.vision import CornerDetection, GateMeasurement
from app.schemas.camera import CameraMount, FisheyeIntrinsics
from app.schemas.track import INNER_HALF_SIZE, Gate, GateMap
from app.schemas.vision import VisionConfig
from app.services.geometry import (
    Pose, body_from_camera, camera_looking, fisheye_project, fisheye_unproject, pinhole_project,
    quat_exp, quat_from_yaw, quat_to_rotmat, rot_z, rotmat_to_quat, undistort_pixel,
)

logger = logging.getLogger(__name__)

MIN_DEPTH = 0.1
LM_MAX_ITERATIONS = 50
# least_squares counts the finite-difference evaluations of the 6 parameters
LM_MAX_NFEV = LM_MAX_ITERATIONS * 7
MC_MAX_FAILURE_RATIO = 0.2
MIRROR_Y = np.diag([1.0, -1.0, 1.0])


def gate_pose(gate: Gate) -> Pose:
    """world <- gate."""
    return Pose(quat_from_yaw(gate.yaw_rad), gate.position)


def project_gate(world_from_cam: Pose, gate: Gate, K: FisheyeIntrinsics, distorted: bool = False) -> np.ndarray:
    """Noise-free corner pixels of ``gate``; raises BehindCamera if a corner is not in front."""
    corners_cam = world_from_cam.inverse().transform(gate.corners_world())
    if np.any(corners_cam[:, 2] <= MIN_DEPTH):
        raise BehindCamera(f"gate {gate.id} is not in front of the camera")
    if distorted:
        return np.array([fisheye_project(c, K) for c in corners_cam])
    return pinhole_project(corners_cam, K)


def _inside_image(px: np.ndarray, K: FisheyeIntrinsics) -> bool:
    return bool(np.all((px[:, 0] >= 0) & (px[:, 0] < K.width) & (px[:, 1] >= 0) & (px[:, 1] < K.height)))


def detect_gates(
    true_cam_pose: Pose,
    gate_map: GateMap,
    K: FisheyeIntrinsics,
    sigma_px: float,
    dropout: float,
    rng: np.random.Generator,
    max_range: float = 20.0,
    distorted: bool = False,
) -> List[CornerDetection]:
    """Corner detections of every gate a camera at ``true_cam_pose`` (world <- camera) sees."""
    detections = []
    cam_position = true_cam_pose.translation
    for gate in gate_map.gates:
        # draw for every gate so culling never shifts the random stream
        drop = rng.random() < dropout
        noise = sigma_px * rng.standard_normal((4, 2))

        offset = cam_position - gate.position
        if offset @ gate.normal >= 0.0:
            continue
        if np.linalg.norm(offset) > max_range:
            continue
        try:
            px = project_gate(true_cam_pose, gate, K, distorted)
        except BehindCamera:
            continue
        if not _inside_image(px, K) or drop:
            continue
        detections.append(CornerDetection(gate.id, px + noise, np.ones(4, dtype=bool), distorted))
    return detections


def _normalized(det: CornerDetection, K: FisheyeIntrinsics) -> np.ndarray:
    """Corner pixels on the pinhole-equivalent image."""
    px = np.asarray(det.corners, dtype=float)
    if not np.all(np.isfinite(px)):
        raise DegenerateConfiguration("non-finite corner pixels")
    if det.distorted:
        px = np.array([undistort_pixel(p, K) for p in px])
    return px


def _check_degenerate(points: np.ndarray, tol: float = 1e-9):
    for i in range(4):
        for j in range(i + 1, 4):
            if np.linalg.norm(points[i] - points[j]) < tol:
                raise DegenerateConfiguration("duplicate corners")
    for i in range(4):
        a, b, c = (points[(i + k) % 4] for k in range(3))
        area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area < tol:
            raise DegenerateConfiguration("collinear corners")


def homography_dlt(plane: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Homography mapping plane points (N, 2) to image points (N, 2), N >= 4."""
    rows = []
    for (X, Y), (x, y) in zip(plane, image):
        rows.append([X, Y, 1.0, 0.0, 0.0, 0.0, -x * X, -x * Y, -x])
        rows.append([0.0, 0.0, 0.0, X, Y, 1.0, -y * X, -y * Y, -y])
    _, _, Vt = np.linalg.svd(np.asarray(rows))
    return Vt[-1].reshape(3, 3)


def decompose_homography(H: np.ndarray) -> Pose:
    """camera <- gate from H ~ [r_y r_z t] (gate plane is x = 0), gate in front of the camera."""
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    scale = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    if scale * h3[2] < 0.0:
        scale = -scale
    r_y = scale * h1
    r_z = scale * h2
    R = np.column_stack([np.cross(r_y, r_z), r_y, r_z])
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, 2] = -U[:, 2]
        R = U @ Vt
    return Pose(rotmat_to_quat(R), scale * h3)


def _reprojection(params: np.ndarray, R0: np.ndarray, points: np.ndarray, pixels: np.ndarray, K) -> np.ndarray:
    R = R0 @ quat_to_rotmat(quat_exp(params[:3]))
    cam = points @ R.T + params[3:]
    return (pinhole_project(cam, K) - pixels).ravel()


def solve_pnp(det: CornerDetection, gate: Gate, K: FisheyeIntrinsics, t: float = 0.0) -> GateMeasurement:
    pixels = _normalized(det, K)
    normalized = np.column_stack([(pixels[:, 0] - K.cx) / K.fx, (pixels[:, 1] - K.cy) / K.fy])
    _check_degenerate(normalized)

    points = gate.corners_gate()
    initial = decompose_homography(homography_dlt(points[:, 1:], normalized))
    R0 = initial.matrix

    result = least_squares(
        _reprojection, np.concatenate([np.zeros(3), initial.translation]),
        args=(R0, points, pixels, K),
        method="lm", xtol=1e-10, ftol=1e-12, max_nfev=LM_MAX_NFEV,
    )
    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        raise NoConvergence(f"LM refinement failed for gate {gate.id}: {result.message}")

    rotation = rotmat_to_quat(R0 @ quat_to_rotmat(quat_exp(result.x[:3])))
    pose = Pose(rotation, result.x[3:].copy())
    if np.any(pose.transform(points)[:, 2] <= 0.0):
        raise FarBehind(f"solution places gate {gate.id} behind the camera")
    rms = float(np.sqrt(np.mean(result.fun.reshape(4, 2) ** 2) * 2.0))
    return GateMeasurement(t, gate.id, pose, rms)


def implied_camera_pose(meas: GateMeasurement, gate: Gate) -> Pose:
    """world <- camera implied by a gate measurement and the known gate pose."""
    return gate_pose(gate).compose(meas.camera_from_gate.inverse())


def implied_body_pose(meas: GateMeasurement, gate: Gate, mount: CameraMount) -> Pose:
    return implied_camera_pose(meas, gate).compose(body_from_camera(mount).inverse())


def estimate_R_montecarlo(
    gate: Gate,
    cam_pose: Pose,
    K: FisheyeIntrinsics,
    sigma_px: float,
    n_samples: int = 100,
    seed: int = 0,
    distorted: bool = False,
) -> np.ndarray:
    """Sample covariance of the world-frame camera position recovered by PnP under pixel noise."""
    if n_samples < 30:
        raise ValueError("n_samples must be at least 30")
    if sigma_px == 0.0:
        return np.zeros((3, 3))

    clean = project_gate(cam_pose, gate, K, distorted)
    positions = []
    last_error: Optional[RaceSimError] = None
    for child in np.random.SeedSequence(seed).spawn(n_samples):
        rng = np.random.default_rng(child)
        det = CornerDetection(gate.id, clean + sigma_px * rng.standard_normal((4, 2)), distorted=distorted)
        try:
            meas = solve_pnp(det, gate, K)
        except RaceSimError as exc:
            last_error = exc
            continue
        positions.append(implied_camera_pose(meas, gate).translation)

    failures = n_samples - len(positions)
    if failures > MC_MAX_FAILURE_RATIO * n_samples:
        raise last_error
    return np.cov(np.asarray(positions).T)


class MeasurementCovarianceTable:
    """Monte-Carlo position covariance on a grid of gate distances and view angles.

    Entries are computed in the gate frame with the camera at azimuth ``a`` off
    the approach axis, on the -y side for positive ``a``. Lookups interpolate
    bilinearly, mirror across the gate's xz plane for negative azimuths and
    rotate into the world by the gate yaw.
    """

    def __init__(self, distances, covariances, floor: float = 0.0, view_angles=(0.0,)):
        self.distances = np.asarray(distances, dtype=float)
        self.view_angles = np.asarray(view_angles, dtype=float)
        covariances = np.asarray(covariances, dtype=float)
        if covariances.ndim == 3:
            covariances = covariances[:, None]
        self.covariances = covariances
        self.floor = floor

    @classmethod
    def build(cls, K: FisheyeIntrinsics, cfg: VisionConfig, seed: int = 0, half_size: float = INNER_HALF_SIZE):
        gate = Gate(id="calibration", center=[0.0, 0.0, 0.0], yaw_rad=0.0, half_size=half_size)
        angles = [math.radians(a) for a in cfg.mc_view_angles_deg]
        grid = np.zeros((len(cfg.mc_distances), len(angles), 3, 3))
        for i, d in enumerate(cfg.mc_distances):
            for j, a in enumerate(angles):
                cam = camera_looking([-d * math.cos(a), -d * math.sin(a), 0.0], a)
                grid[i, j] = estimate_R_montecarlo(
                    gate, cam, K, cfg.sigma_px, cfg.mc_samples,
                    seed=seed + i * len(angles) + j, distorted=cfg.distorted,
                )
        logger.info(
            "measurement covariance table: sigma=%.2f px, std %.3f m at %.1f m .. %.3f m at %.1f m, %d view angles",
            cfg.sigma_px,
            math.sqrt(np.trace(grid[0, 0]) / 3.0), cfg.mc_distances[0],
            math.sqrt(np.trace(grid[-1, 0]) / 3.0), cfg.mc_distances[-1],
            len(angles),
        )
        return cls(cfg.mc_distances, grid, cfg.covariance_floor, angles)

    @classmethod
    def cached(cls, K: FisheyeIntrinsics, cfg: VisionConfig, half_size: float = INNER_HALF_SIZE):
        """Table built once per process for a given camera and vision config."""
        return _cached_table(K.model_dump_json(), cfg.model_dump_json(), half_size)

    def lookup(self, distance: float, gate_yaw: float, view_angle: float = 0.0) -> np.ndarray:
        n_d, n_a = self.covariances.shape[:2]
        flat = self.covariances.reshape(n_d, n_a, 9)
        by_angle = np.array([
            [np.interp(distance, self.distances, flat[:, j, k]) for k in range(9)] for j in range(n_a)
        ])
        R_gate = np.array([np.interp(abs(view_angle), self.view_angles, by_angle[:, k]) for k in range(9)])
        R_gate = R_gate.reshape(3, 3)
        if view_angle < 0.0:
            R_gate = MIRROR_Y @ R_gate @ MIRROR_Y
        Rz = rot_z(gate_yaw)
        return Rz @ R_gate @ Rz.T + self.floor * np.eye(3)


@lru_cache(maxsize=8)
def _cached_table(K_json: str, cfg_json: str, half_size: float) -> MeasurementCovarianceTable:
    cfg = VisionConfig.model_validate_json(cfg_json)
    K = FisheyeIntrinsics.model_validate_json(K_json)
    return MeasurementCovarianceTable.build(K, cfg, seed=cfg.calibration_seed, half_size=half_size)


def view_angle(meas: GateMeasurement) -> float:
    """Signed azimuth of the camera off the gate's approach axis, positive on the gate's -y side."""
    c = meas.camera_from_gate.inverse().translation
    return math.atan2(-c[1], -c[0])


def _bearing(px: np.ndarray, K: FisheyeIntrinsics, distorted: bool) -> np.ndarray:
    if distorted:
        return fisheye_unproject(px, K)
    ray = np.array([(px[0] - K.cx) / K.fx, (px[1] - K.cy) / K.fy, 1.0])
    return ray / np.linalg.norm(ray)


def associate_detection(
    det: CornerDetection,
    est_cam_pose: Pose,
    gate_map: GateMap,
    K: FisheyeIntrinsics,
    bearing_gate_deg: float = 30.0,
) -> Optional[str]:
    """Gate id whose predicted centre bearing is nearest to the detected one, or None."""
    observed = _bearing(np.mean(det.corners, axis=0), K, det.distorted)
    cam_from_world = est_cam_pose.inverse()
    best_id, best_angle = None, math.inf
    for gate in gate_map.gates:
        center = cam_from_world.transform(gate.position)
        if center[2] <= MIN_DEPTH:
            continue
        predicted = center / np.linalg.norm(center)
        angle = math.acos(min(1.0, max(-1.0, float(observed @ predicted))))
        if angle < best_angle:
            best_id, best_angle = gate.id, angle
    if best_id is None or best_angle > math.radians(bearing_gate_deg):
        return None
    return best_id


def measure_gates(
    detections: List[CornerDetection],
    gate_map: GateMap,
    K: FisheyeIntrinsics,
    cfg: VisionConfig,
    t: float,
    est_cam_pose: Optional[Pose] = None,
) -> List[GateMeasurement]:
    """Solve PnP for every usable detection of a frame and apply the RMS gate."""
    measurements = []
    for det in detections:
        if cfg.association == "nearest":
            if est_cam_pose is None:
                raise ValueError("nearest association needs an estimated camera pose")
            gate_id = associate_detection(det, est_cam_pose, gate_map, K, cfg.bearing_gate_deg)
            if gate_id is None:
                logger.warning("t=%.3f: detection discarded, no gate within %.0f deg", t, cfg.bearing_gate_deg)
                continue
            det = replace(det, gate_id=gate_id)
        gate = gate_map.gate(det.gate_id)
        try:
            meas = solve_pnp(det, gate, K, t)
        except (BehindCamera, DegenerateConfiguration, NoConvergence, FarBehind) as exc:
            logger.warning("t=%.3f: PnP failed for gate %s: %s", t, det.gate_id, exc)
            continue
        if meas.rms_px > cfg.max_rms_px:
            logger.warning("t=%.3f: gate %s discarded, reprojection RMS %.2f px", t, det.gate_id, meas.rms_px)
            continue
        measurements.append(meas)
    return measurements
