"""Three-state Kalman filter on the translational drift of the VIO position.

The drift is modelled as a random walk (F = I) with process noise
Q = I * dt^4 / 4 * sigma_a^2. Every camera frame propagates the filter and
stacks all accepted gate measurements into one joint update.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from app.exceptions import SingularInnovation
from app.models.sensors import VioSample
from app.models.state import DriftState
from app.schemas.filters import DriftFilterConfig
from app.services.geometry import symmetrize, wrap_angle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriftObservation:
    """z = p_vio - p_gate_implied for one gate; R is its 3x3 covariance."""
    z: np.ndarray
    R: np.ndarray
    gate_id: str = ""


def process_noise(dt: float, sigma_a2: float) -> np.ndarray:
    return np.eye(3) * 0.25 * dt ** 4 * sigma_a2


def propagate(s: DriftState, dt: float, sigma_a2: float = 8.0) -> DriftState:
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    return DriftState(s.x.copy(), s.P + process_noise(dt, sigma_a2), s.t + dt)


def update(s: DriftState, z: np.ndarray, H: np.ndarray, R: np.ndarray) -> DriftState:
    """Joint Kalman update with stacked measurements ``z`` (3N,), ``H`` (3N, 3), ``R`` (3N, 3N)."""
    S = H @ s.P @ H.T + R
    try:
        factor = linalg.cho_factor(symmetrize(S))
    except linalg.LinAlgError as exc:
        raise SingularInnovation(f"innovation covariance not invertible: {exc}") from exc
    K = linalg.cho_solve(factor, H @ s.P).T
    x = s.x + K @ (z - H @ s.x)
    P = symmetrize((np.eye(3) - K @ H) @ s.P)
    return DriftState(x, P, s.t)


def stack(observations: Sequence[DriftObservation]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = np.concatenate([o.z for o in observations])
    H = np.vstack([np.eye(3)] * len(observations))
    R = linalg.block_diag(*[o.R for o in observations])
    return z, H, R


def mahalanobis(s: DriftState, obs: DriftObservation) -> float:
    innovation = obs.z - s.x
    S = s.P + obs.R
    return float(innovation @ np.linalg.solve(S, innovation))


def reinitialize(observations: Sequence[DriftObservation], t: float) -> DriftState:
    """Drift state from the observations alone: information-weighted mean and its covariance."""
    information = sum(np.linalg.inv(o.R) for o in observations)
    P = symmetrize(np.linalg.inv(information))
    x = P @ sum(np.linalg.solve(o.R, o.z) for o in observations)
    return DriftState(x, P, t)


def correct_vio(vio: VioSample, s: DriftState) -> VioSample:
    return VioSample(vio.t, vio.q, vio.p - s.x, vio.v)


class DriftKalmanFilter:
    """Owns the drift state across camera frames."""

    def __init__(self, cfg: DriftFilterConfig = None):
        self.cfg = cfg or DriftFilterConfig()
        self.state = DriftState()
        self.threshold = chi2.ppf(self.cfg.gate_chi2_p, df=3)
        self.consecutive_rejections = 0
        self.accepted = 0
        self.rejected = 0

    @property
    def estimate(self) -> np.ndarray:
        return self.state.x

    def propagate_to(self, t: float) -> DriftState:
        dt = max(t - self.state.t, 0.0)
        self.state = propagate(self.state, dt, self.cfg.sigma_a2)
        return self.state

    def yaw_consistent(self, pnp_yaw: float, vio_yaw: float) -> bool:
        return abs(wrap_angle(pnp_yaw - vio_yaw)) <= math.radians(self.cfg.yaw_outlier_deg)

    def process_frame(self, t: float, observations: List[DriftObservation]) -> DriftState:
        """Propagate to ``t`` and update with every observation that passes the gates."""
        self.propagate_to(t)
        if not observations:
            return self.state

        accepted = observations
        if self.cfg.gating:
            accepted = [o for o in observations if mahalanobis(self.state, o) <= self.threshold]
            if not accepted:
                self.consecutive_rejections += 1
                if self.consecutive_rejections > self.cfg.max_consecutive_rejections:
                    logger.warning(
                        "t=%.3f: %d frames rejected in a row, re-acquiring drift",
                        t, self.consecutive_rejections - 1,
                    )
                    self.state = reinitialize(observations, t)
                    self.consecutive_rejections = 0
                    self.accepted += len(observations)
                    return self.state
                else:
                    self.rejected += len(observations)
                    logger.warning("t=%.3f: %d gate measurement(s) failed the Mahalanobis gate", t, len(observations))
                    return self.state
            else:
                self.rejected += len(observations) - len(accepted)

        z, H, R = stack(accepted)
        prior = self.state.x
        self.state = update(self.state, z, H, R)
        self.consecutive_rejections = 0
        self.accepted += len(accepted)
        logger.debug(
            "t=%.3f: drift update with %d gate(s), step %.3f m",
            t, len(accepted), float(np.linalg.norm(self.state.x - prior)),
        )
        return self.state

    def correct(self, vio: VioSample) -> VioSample:
        return correct_vio(vio, self.state)