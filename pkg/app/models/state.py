from dataclasses import dataclass, field

import numpy as np

from app.services.geometry import quat_from_yaw, quat_identity


@dataclass(frozen=True)
class TrueState:
    """Ground truth of the simulated vehicle."""
    t: float
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    rotor_thrusts: np.ndarray
    # world-frame acceleration produced by the last integration step
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # integral term of the inner rate loop
    rate_integral: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def at_rest(cls, p, yaw: float = 0.0, t: float = 0.0) -> "TrueState":
        return cls(
            t=t,
            q=quat_from_yaw(yaw),
            p=np.asarray(p, dtype=float),
            v=np.zeros(3),
            omega=np.zeros(3),
            rotor_thrusts=np.zeros(4),
        )

    @classmethod
    def hovering(cls, p, hover_thrust: float, yaw: float = 0.0, t: float = 0.0) -> "TrueState":
        return cls(
            t=t,
            q=quat_from_yaw(yaw),
            p=np.asarray(p, dtype=float),
            v=np.zeros(3),
            omega=np.zeros(3),
            rotor_thrusts=np.full(4, hover_thrust / 4.0),
        )

    def is_finite(self) -> bool:
        return all(
            bool(np.all(np.isfinite(x)))
            for x in (self.q, self.p, self.v, self.omega, self.rotor_thrusts, self.a)
        ) and np.isfinite(self.t)


@dataclass
class NavState:
    """Error-state EKF output: nominal state plus 15x15 error covariance.

    Error ordering: attitude (3), position (3), velocity (3), gyro bias (3),
    accelerometer bias (3).
    """
    t: float
    q: np.ndarray = field(default_factory=quat_identity)
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    P: np.ndarray = field(default_factory=lambda: np.zeros((15, 15)))

    def copy(self) -> "NavState":
        return NavState(
            self.t, self.q.copy(), self.p.copy(), self.v.copy(),
            self.b_omega.copy(), self.b_a.copy(), self.P.copy(),
        )


@dataclass(frozen=True)
class DriftState:
    """Translational VIO drift estimate. Starts at zero with zero covariance."""
    x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    P: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    t: float = 0.0


@dataclass(frozen=True)
class PredictedState:
    """Pose and velocity advanced across the command delay."""
    t: float
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class PoseMeasurement:
    """Drift-corrected pose fed to the EKF; its covariance is static per configuration."""
    t: float
    q: np.ndarray
    p: np.ndarray
