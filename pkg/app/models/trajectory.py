from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.services.geometry import GRAVITY_VECTOR, quat_conjugate, quat_log, quat_multiply, quat_normalize


@dataclass(frozen=True)
class Waypoint:
    position: np.ndarray
    gate_id: str
    side: str   # "pre" or "post"; "start" and "end" for race boundary points


@dataclass(frozen=True)
class ReferenceWindow:
    """Reference sampled on the controller's horizon nodes."""
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    acc: np.ndarray
    omega: np.ndarray


@dataclass
class ReferenceTrajectory:
    """Uniformly sampled [t, q, p, v] reference.

    Accelerations and body rates are derived from the samples on construction,
    so loaded and generated trajectories behave identically.
    """
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray
    closed: bool = False
    time_scale: Optional[float] = None
    # time of every waypoint along the reference, when generated from waypoints
    knot_times: Optional[np.ndarray] = None
    acc: np.ndarray = field(init=False)
    omega: np.ndarray = field(init=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if len(self.t) > 1:
            self.acc = np.gradient(self.v, self.t, axis=0)
        else:
            self.acc = np.zeros_like(self.v)
        self.omega = np.zeros_like(self.p)
        for k in range(len(self.t) - 1):
            dq = quat_multiply(quat_conjugate(self.q[k]), self.q[k + 1])
            self.omega[k] = quat_log(dq) / (self.t[k + 1] - self.t[k])
        if len(self.t) > 1:
            self.omega[-1] = self.omega[-2]

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def lap_time(self) -> float:
        return float(self.t[-1])

    @property
    def thrust_accel(self) -> np.ndarray:
        """Mass-normalised thrust magnitude ||a - g|| per sample."""
        return np.linalg.norm(self.acc - GRAVITY_VECTOR, axis=1)

    def _locate(self, times: np.ndarray):
        times = np.asarray(times, dtype=float)
        if self.closed and self.lap_time > 0.0:
            times = np.mod(times - self.t[0], self.lap_time - self.t[0]) + self.t[0]
        times = np.clip(times, self.t[0], self.t[-1])
        idx = np.clip(np.searchsorted(self.t, times, side="right") - 1, 0, max(len(self.t) - 2, 0))
        if len(self.t) > 1:
            frac = (times - self.t[idx]) / (self.t[idx + 1] - self.t[idx])
        else:
            frac = np.zeros_like(times)
        return idx, np.clip(frac, 0.0, 1.0)

    def window(self, t0: float, horizon: float, nodes: int) -> ReferenceWindow:
        times = t0 + np.linspace(0.0, horizon, nodes + 1)
        idx, frac = self._locate(times)
        nxt = np.minimum(idx + 1, len(self.t) - 1)
        w = frac[:, None]

        def lerp(x):
            return (1.0 - w) * x[idx] + w * x[nxt]

        q0, q1 = self.q[idx], self.q[nxt].copy()
        q1[np.sum(q0 * q1, axis=1) < 0.0] *= -1.0
        q = np.array([quat_normalize(row) for row in (1.0 - w) * q0 + w * q1])
        return ReferenceWindow(times, lerp(self.p), lerp(self.v), q, lerp(self.acc), lerp(self.omega))

    def sample(self, t: float) -> ReferenceWindow:
        return self.window(t, 0.0, 0)

    def positions(self, times) -> np.ndarray:
        """Reference positions at arbitrary ``times``, linearly interpolated."""
        idx, frac = self._locate(np.asarray(times, dtype=float))
        nxt = np.minimum(idx + 1, len(self.t) - 1)
        return (1.0 - frac[:, None]) * self.p[idx] + frac[:, None] * self.p[nxt]
