"""Waypoints from the gate map, reference CSV I/O and the surrogate generator.

The surrogate is a minimum-snap spline: degree-7 segments with continuity
through the sixth derivative, which is the unconstrained minimum-snap optimum
for fixed segment times. Segment times are scaled globally until the peak
mass-normalised thrust reaches a fixed fraction of the thrust-to-weight cap.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Set

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve

from app.exceptions import InfeasibleTrajectory, NoConvergence, ParseError
from app.models.trajectory import ReferenceTrajectory, Waypoint
from app.schemas.track import GateMap
from app.schemas.trajectory import TrajectoryConfig
from app.services.geometry import GRAVITY, GRAVITY_VECTOR, rotmat_to_quat, wrap_angle

logger = logging.getLogger(__name__)

DEGREE = 7
N_COEFFS = DEGREE + 1
CONTINUITY = 6
REST_DERIVATIVES = 3
MIN_SPACING = 0.01
CSV_COLUMNS = ["t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz"]


def place_waypoints(
    gate_map: GateMap,
    split_s_ids: Optional[Set[str]] = None,
    cfg: Optional[TrajectoryConfig] = None,
) -> List[Waypoint]:
    """Two waypoints per gate on its normal line, before and after the opening."""
    cfg = cfg or TrajectoryConfig()
    if split_s_ids is None:
        split_s_ids = gate_map.split_s_ids
    waypoints = []
    for gate in gate_map.gates:
        post = cfg.split_s_post_offset if gate.id in split_s_ids else cfg.post_offset
        waypoints.append(Waypoint(gate.position - cfg.pre_offset * gate.normal, gate.id, "pre"))
        waypoints.append(Waypoint(gate.position + post * gate.normal, gate.id, "post"))
    return waypoints


def _derivative_row(n: int, tau: float) -> np.ndarray:
    row = np.zeros(N_COEFFS)
    for k in range(n, N_COEFFS):
        row[k] = math.factorial(k) / math.factorial(k - n) * tau ** (k - n)
    return row


@dataclass
class MinSnapSpline:
    """Piecewise polynomial in normalised segment time; ``coeffs`` is (segments, 8, 3)."""
    coeffs: np.ndarray
    durations: np.ndarray
    closed: bool

    @property
    def knot_times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def duration(self) -> float:
        return float(np.sum(self.durations))

    def scaled(self, alpha: float) -> "MinSnapSpline":
        return MinSnapSpline(self.coeffs, self.durations * alpha, self.closed)

    def evaluate(self, times, derivative: int = 0) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        knots = self.knot_times
        times = np.clip(times, 0.0, knots[-1])
        seg = np.clip(np.searchsorted(knots, times, side="right") - 1, 0, len(self.durations) - 1)
        T = self.durations[seg]
        tau = (times - knots[seg]) / T
        out = np.zeros((len(times), 3))
        for k in range(derivative, N_COEFFS):
            factor = math.factorial(k) / math.factorial(k - derivative)
            out += (factor * tau ** (k - derivative))[:, None] * self.coeffs[seg, k, :]
        return out / (T ** derivative)[:, None]


def fit_min_snap(positions: np.ndarray, durations: np.ndarray, closed: bool) -> MinSnapSpline:
    """Solve the C6 degree-7 interpolation system through ``positions``.

    Open splines start and end at rest (first three derivatives zero).
    """
    positions = np.asarray(positions, dtype=float)
    n_seg = len(positions) if closed else len(positions) - 1
    durations = np.asarray(durations, dtype=float)
    if len(durations) != n_seg:
        raise ValueError(f"expected {n_seg} segment durations, got {len(durations)}")

    size = N_COEFFS * n_seg
    A = sparse.lil_matrix((size, size))
    b = np.zeros((size, 3))
    row = 0
    p0, p1 = _derivative_row(0, 0.0), _derivative_row(0, 1.0)
    for i in range(n_seg):
        cols = slice(N_COEFFS * i, N_COEFFS * (i + 1))
        A[row, cols] = p0
        b[row] = positions[i]
        A[row + 1, cols] = p1
        b[row + 1] = positions[(i + 1) % len(positions)]
        row += 2

    joints = n_seg if closed else n_seg - 1
    for i in range(joints):
        j = (i + 1) % n_seg
        ratio = durations[i] / durations[j]
        for n in range(1, CONTINUITY + 1):
            A[row, N_COEFFS * i:N_COEFFS * (i + 1)] = _derivative_row(n, 1.0)
            A[row, N_COEFFS * j:N_COEFFS * (j + 1)] = -(ratio ** n) * _derivative_row(n, 0.0)
            row += 1

    if not closed:
        last = n_seg - 1
        for n in range(1, REST_DERIVATIVES + 1):
            A[row, 0:N_COEFFS] = _derivative_row(n, 0.0)
            A[row + 1, N_COEFFS * last:N_COEFFS * (last + 1)] = _derivative_row(n, 1.0)
            row += 2

    coeffs = spsolve(A.tocsc(), b)
    return MinSnapSpline(np.asarray(coeffs).reshape(n_seg, N_COEFFS, 3), durations, closed)


def _positions(waypoints) -> np.ndarray:
    if len(waypoints) and isinstance(waypoints[0], Waypoint):
        return np.array([w.position for w in waypoints], dtype=float)
    return np.asarray(waypoints, dtype=float)


def _base_durations(positions: np.ndarray, closed: bool) -> np.ndarray:
    nxt = np.roll(positions, -1, axis=0) if closed else positions[1:]
    distances = np.linalg.norm(nxt - positions[: len(nxt)], axis=1)
    if np.any(distances < MIN_SPACING):
        i = int(np.argmin(distances))
        raise InfeasibleTrajectory(f"waypoints {i} and {(i + 1) % len(positions)} are {distances[i]:.4f} m apart")
    durations = np.sqrt(distances)
    if not closed:
        durations[0] *= 2.0
        durations[-1] *= 2.0
    return durations


def _peak_thrust(base_acc: np.ndarray, alpha: float) -> float:
    return float(np.max(np.linalg.norm(base_acc / alpha ** 2 - GRAVITY_VECTOR, axis=1)))


def find_time_scale(spline: MinSnapSpline, target: float, tolerance: float, samples_per_segment: int) -> float:
    """Global time scale at which the peak thrust acceleration equals ``target``."""
    tau = np.linspace(0.0, 1.0, samples_per_segment)
    base_acc = np.vstack([
        np.array([spline.coeffs[i].T @ _derivative_row(2, s) for s in tau]) / spline.durations[i] ** 2
        for i in range(len(spline.durations))
    ])

    lo, hi = 1.0, 1.0
    for _ in range(60):
        if _peak_thrust(base_acc, hi) <= target:
            break
        hi *= 2.0
    else:
        raise NoConvergence("could not bracket the time scale from above")
    for _ in range(60):
        if _peak_thrust(base_acc, lo) >= target:
            break
        lo *= 0.5
    else:
        raise NoConvergence("could not bracket the time scale from below")

    for _ in range(100):
        mid = 0.5 * (lo + hi)
        peak = _peak_thrust(base_acc, mid)
        if abs(peak - target) <= tolerance * target:
            return mid
        if peak > target:
            lo = mid
        else:
            hi = mid
    raise NoConvergence(f"time-scale bisection did not reach {target:.2f} m/s^2")


def _yaw_profile(v: np.ndarray, dt: float, rate_limit: float, initial_yaw: float) -> np.ndarray:
    yaw = np.zeros(len(v))
    current = initial_yaw
    step = rate_limit * dt
    for k in range(len(v)):
        if math.hypot(v[k, 0], v[k, 1]) > 0.5:
            target = math.atan2(v[k, 1], v[k, 0])
            current += float(np.clip(wrap_angle(target - current), -step, step))
        yaw[k] = current
    return yaw


def attitude_from_thrust(acc: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    """Quaternions whose z axis is the thrust direction and whose heading follows ``yaw``."""
    quats = np.zeros((len(acc), 4))
    y_prev = np.array([0.0, 1.0, 0.0])
    q_prev = None
    for k in range(len(acc)):
        z_b = acc[k] - GRAVITY_VECTOR
        z_b = z_b / np.linalg.norm(z_b)
        x_c = np.array([math.cos(yaw[k]), math.sin(yaw[k]), 0.0])
        y_b = np.cross(z_b, x_c)
        norm = np.linalg.norm(y_b)
        y_b = y_prev if norm < 1e-3 else y_b / norm
        x_b = np.cross(y_b, z_b)
        q = rotmat_to_quat(np.column_stack([x_b, y_b, z_b]))
        if q_prev is not None and q @ q_prev < 0.0:
            q = -q
        quats[k] = q
        y_prev, q_prev = y_b, q
    return quats


def generate_surrogate(
    waypoints,
    twr_gen: float = 3.8,
    dt: float = 0.01,
    closed: bool = True,
    cfg: Optional[TrajectoryConfig] = None,
    initial_yaw: Optional[float] = None,
) -> ReferenceTrajectory:
    cfg = cfg or TrajectoryConfig(twr_gen=twr_gen, dt=dt)
    positions = _positions(waypoints)
    if len(positions) < 2:
        raise InfeasibleTrajectory("at least two waypoints are required")

    spline = fit_min_snap(positions, _base_durations(positions, closed), closed)
    target = cfg.accel_margin * twr_gen * GRAVITY
    alpha = find_time_scale(spline, target, cfg.tolerance, cfg.samples_per_segment)
    # round the duration up to whole samples so the reference is uniformly spaced
    n_samples = math.ceil(spline.duration * alpha / dt - 1e-9)
    alpha = n_samples * dt / spline.duration
    spline = spline.scaled(alpha)

    times = np.arange(n_samples + 1) * dt
    p = spline.evaluate(times)
    v = spline.evaluate(times, 1)
    acc = spline.evaluate(times, 2)
    if closed:
        p[-1], v[-1], acc[-1] = p[0], v[0], acc[0]
    if initial_yaw is None:
        delta = positions[1] - positions[0]
        initial_yaw = math.atan2(delta[1], delta[0])
    yaw = _yaw_profile(v, dt, cfg.yaw_rate_limit, initial_yaw)
    q = attitude_from_thrust(acc, yaw)

    traj = ReferenceTrajectory(times, q, p, v, closed=closed, time_scale=alpha, knot_times=spline.knot_times)
    peak = float(np.max(np.linalg.norm(acc - GRAVITY_VECTOR, axis=1)))
    logger.info(
        "surrogate trajectory: %d waypoints, lap time %.3f s, peak thrust %.2f m/s^2 (cap %.2f), scale %.4f",
        len(positions), traj.lap_time, peak, twr_gen * GRAVITY, alpha,
    )
    return traj


def save_trajectory(traj: ReferenceTrajectory, path: str):
    df = pd.DataFrame(np.column_stack([traj.t, traj.q, traj.p, traj.v]), columns=CSV_COLUMNS)
    df.to_csv(path, index=False)


def load_trajectory(path: str, twr_cap: float = 3.8, closed: bool = False) -> ReferenceTrajectory:
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read trajectory {path}: {exc}") from exc

    missing = [c for c in CSV_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"trajectory {path} is missing columns: {', '.join(missing)}")
    values = df[CSV_COLUMNS].apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1) | ~np.isfinite(values.to_numpy()).all(axis=1)
    if bad.any():
        raise ParseError(f"malformed row {int(np.argmax(bad.to_numpy())) + 1} in {path}")
    if len(values) < 2:
        raise ParseError(f"trajectory {path} needs at least two samples")

    data = values.to_numpy(dtype=float)
    t = data[:, 0]
    steps = np.diff(t)
    if np.any(steps <= 0.0):
        raise ParseError(f"time not strictly increasing at row {int(np.argmax(steps <= 0.0)) + 2} in {path}")
    if np.max(np.abs(steps - steps[0])) > 1e-6 * max(1.0, t[-1]):
        raise ParseError(f"non-uniform sample spacing in {path}")
    q = data[:, 1:5]
    norms = np.linalg.norm(q, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-3):
        raise ParseError(f"non-unit quaternion at row {int(np.argmax(np.abs(norms - 1.0) > 1e-3)) + 1} in {path}")

    traj = ReferenceTrajectory(t, q / norms[:, None], data[:, 5:8], data[:, 8:11], closed=closed)
    check_feasible(traj, twr_cap)
    return traj


def check_feasible(traj: ReferenceTrajectory, twr_cap: float, eps: float = 1e-6):
    thrust = traj.thrust_accel
    worst = int(np.argmax(thrust))
    cap = twr_cap * GRAVITY
    if thrust[worst] > cap + eps:
        raise InfeasibleTrajectory(
            f"thrust acceleration {thrust[worst]:.2f} m/s^2 at t={traj.t[worst]:.3f} exceeds cap {cap:.2f}"
        )


def consistency_error(traj: ReferenceTrajectory) -> float:
    """Largest gap between the finite difference of p and the stored v."""
    fd = np.diff(traj.p, axis=0) / np.diff(traj.t)[:, None]
    mid_v = 0.5 * (traj.v[1:] + traj.v[:-1])
    return float(np.max(np.linalg.norm(fd - mid_v, axis=1)))


def lap_waypoints(gate_map: GateMap, laps: int, cfg: Optional[TrajectoryConfig] = None) -> List[Waypoint]:
    """Open race course from a standstill in front of the first gate.

    The course runs ``laps`` times around the map, crosses the first gate once
    more to close the last lap and ends ``run_out`` metres past it.
    """
    cfg = cfg or TrajectoryConfig()
    per_gate = place_waypoints(gate_map, cfg=cfg)
    first = gate_map.gates[0]
    start = Waypoint(first.position - 0.5 * first.normal, first.id, "start")
    course = [start, per_gate[1]]
    for _ in range(laps):
        course.extend(per_gate[2:])
        course.extend(per_gate[:2])
    end = per_gate[1].position + cfg.run_out * first.normal
    course.append(Waypoint(end, first.id, "end"))
    return course

