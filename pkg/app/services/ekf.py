"""Error-state EKF fusing 500 Hz IMU with drift-corrected VIO poses.

Nominal state: attitude q, position p, velocity v, gyro bias b_omega and
accelerometer bias b_a. The filter runs on a 15-dimensional error state

    [dtheta (3), dp (3), dv (3), db_omega (3), db_a (3)]

with attitude errors on the right (q_true = q * Exp(dtheta)). Only attitude
and position are measured; velocity and biases are corrected through the
cross-covariances.
"""
import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from app.exceptions import (
    FilterDiverged, NonMonotonicTime, SingularInnovation, StaleMeasurement,
)
from app.models.sensors import ImuSample
from app.models.state import NavState, PoseMeasurement
from app.schemas.filters import EkfConfig
from app.services.geometry import (
    GRAVITY_VECTOR, quat_conjugate, quat_exp, quat_integrate, quat_log, quat_multiply,
    quat_normalize, quat_to_rotmat, right_jacobian, skew, symmetrize,
)

logger = logging.getLogger(__name__)

ATT, POS, VEL, BG, BA = (slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15))
OBSERVED = np.hstack([np.eye(6), np.zeros((6, 9))])


def propagate_nominal(s: NavState, imu: ImuSample, dt: float) -> NavState:
    R = quat_to_rotmat(s.q)
    omega = imu.omega - s.b_omega
    a = R @ (imu.a - s.b_a) + GRAVITY_VECTOR
    return NavState(
        t=s.t + dt,
        q=quat_integrate(s.q, omega, dt),
        p=s.p + s.v * dt + 0.5 * a * dt * dt,
        v=s.v + a * dt,
        b_omega=s.b_omega.copy(),
        b_a=s.b_a.copy(),
        P=s.P.copy(),
    )


def transition_matrices(s: NavState, imu: ImuSample, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Error-state transition F (15x15) and noise Jacobian W (15x12).

    Noise order: accelerometer white noise, gyro white noise, accelerometer
    bias walk, gyro bias walk.
    """
    R = quat_to_rotmat(s.q)
    phi = (imu.omega - s.b_omega) * dt
    a_skew = skew(imu.a - s.b_a)
    Jr = right_jacobian(phi)

    F = np.eye(15)
    F[ATT, ATT] = quat_to_rotmat(quat_exp(phi)).T
    F[ATT, BG] = -Jr * dt
    F[POS, ATT] = -0.5 * R @ a_skew * dt * dt
    F[POS, VEL] = np.eye(3) * dt
    F[POS, BA] = -0.5 * R * dt * dt
    F[VEL, ATT] = -R @ a_skew * dt
    F[VEL, BA] = -R * dt

    W = np.zeros((15, 12))
    W[POS, 0:3] = -0.5 * R * dt * dt
    W[VEL, 0:3] = -R * dt
    W[ATT, 3:6] = -Jr * dt
    W[BA, 6:9] = np.eye(3)
    W[BG, 9:12] = np.eye(3)
    return F, W


def process_noise(cfg: EkfConfig, dt: float) -> np.ndarray:
    return np.diag(np.concatenate([
        np.full(3, cfg.accel_noise_density ** 2 / dt),
        np.full(3, cfg.gyro_noise_density ** 2 / dt),
        np.full(3, cfg.accel_bias_random_walk ** 2 * dt),
        np.full(3, cfg.gyro_bias_random_walk ** 2 * dt),
    ]))


def inject(s: NavState, dx: np.ndarray) -> NavState:
    """Nominal state plus error ``dx``."""
    return NavState(
        t=s.t,
        q=quat_normalize(quat_multiply(s.q, quat_exp(dx[ATT]))),
        p=s.p + dx[POS],
        v=s.v + dx[VEL],
        b_omega=s.b_omega + dx[BG],
        b_a=s.b_a + dx[BA],
        P=s.P.copy(),
    )


def difference(a: NavState, b: NavState) -> np.ndarray:
    """Error state taking ``b`` to ``a``, the inverse of :func:`inject`."""
    return np.concatenate([
        quat_log(quat_multiply(quat_conjugate(b.q), a.q)),
        a.p - b.p, a.v - b.v, a.b_omega - b.b_omega, a.b_a - b.b_a,
    ])


def _check_biases(s: NavState, cfg: EkfConfig):
    if np.linalg.norm(s.b_omega) >= cfg.max_gyro_bias or np.linalg.norm(s.b_a) >= cfg.max_accel_bias:
        raise FilterDiverged(
            f"bias estimate out of bounds at t={s.t:.3f}: "
            f"|b_omega|={np.linalg.norm(s.b_omega):.3f}, |b_a|={np.linalg.norm(s.b_a):.3f}"
        )


def propagate_imu(s: NavState, imu: ImuSample, cfg: EkfConfig) -> NavState:
    if imu.t < s.t:
        raise NonMonotonicTime(f"IMU sample at t={imu.t:.4f} precedes filter time {s.t:.4f}")
    dt = imu.t - s.t
    if dt == 0.0:
        return s.copy()
    F, W = transition_matrices(s, imu, dt)
    nxt = propagate_nominal(s, imu, dt)
    nxt.t = imu.t
    nxt.P = symmetrize(F @ s.P @ F.T + W @ process_noise(cfg, dt) @ W.T)
    return nxt


def measurement_covariance(cfg: EkfConfig) -> np.ndarray:
    return np.diag([cfg.attitude_sigma ** 2] * 3 + [cfg.position_sigma ** 2] * 3)


def update_pose(s: NavState, m: PoseMeasurement, cfg: EkfConfig) -> NavState:
    if abs(s.t - m.t) > cfg.max_staleness:
        raise StaleMeasurement(f"pose at t={m.t:.4f} is {s.t - m.t:+.4f} s from filter time {s.t:.4f}")

    residual = np.concatenate([quat_log(quat_multiply(quat_conjugate(s.q), m.q)), m.p - s.p])
    H = OBSERVED
    R = measurement_covariance(cfg)
    S = H @ s.P @ H.T + R
    try:
        factor = linalg.cho_factor(symmetrize(S))
    except linalg.LinAlgError as exc:
        raise SingularInnovation(f"innovation covariance not invertible: {exc}") from exc
    K = linalg.cho_solve(factor, H @ s.P).T
    dx = K @ residual

    I_KH = np.eye(15) - K @ H
    P = I_KH @ s.P @ I_KH.T + K @ R @ K.T

    nxt = inject(s, dx)
    G = np.eye(15)
    G[ATT, ATT] = np.eye(3) - 0.5 * skew(dx[ATT])
    nxt.P = symmetrize(G @ P @ G.T)
    _check_biases(nxt, cfg)
    return nxt


class ErrorStateEkf:
    """Single-owner filter; the harness feeds IMU and pose events in time order."""

    def __init__(self, initial: NavState, cfg: EkfConfig = None):
        self.cfg = cfg or EkfConfig()
        self.state = initial

    @classmethod
    def from_pose(cls, t: float, q: np.ndarray, p: np.ndarray, v: np.ndarray = None, cfg: EkfConfig = None):
        cfg = cfg or EkfConfig()
        sigmas = np.repeat(np.asarray(cfg.initial_sigmas, dtype=float), 3)
        initial = NavState(
            t=t, q=np.asarray(q, dtype=float).copy(), p=np.asarray(p, dtype=float).copy(),
            v=np.zeros(3) if v is None else np.asarray(v, dtype=float).copy(),
            P=np.diag(sigmas ** 2),
        )
        return cls(initial, cfg)

    def propagate(self, imu: ImuSample) -> NavState:
        self.state = propagate_imu(self.state, imu, self.cfg)
        return self.state

    def update(self, m: PoseMeasurement) -> NavState:
        self.state = update_pose(self.state, m, self.cfg)
        return self.state
