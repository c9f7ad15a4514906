"""Receding-horizon CTBR tracking controller and command-delay predictor.

The nominal model inside the controller is attitude kinematics driven by the
commanded body rates plus point-mass translation under collective thrust; the
rate loop and rotor dynamics stay on the plant side. The optimal control
problem is solved by iterative LQR on a 9-dimensional error state
[dp, dv, dtheta] with box-clamped inputs [collective, body rates]. The
per-node passes are compiled in ``app.services.ilqr``.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import InfeasibleBounds, SolverDiverged
from app.models.control import CtbrCommand
from app.models.state import PredictedState
from app.models.trajectory import ReferenceTrajectory, ReferenceWindow
from app.schemas.controller import ControllerConfig
from app.schemas.quad import QuadParams
from app.services import ilqr
from app.services.geometry import E_Z, GRAVITY_VECTOR, quat_integrate, quat_to_rotmat

logger = logging.getLogger(__name__)

LINE_SEARCH = (1.0, 0.5, 0.25, 0.1)
MAX_FAILURES = 3
PREDICT_STEP = 0.001


@dataclass
class SolveResult:
    command: CtbrCommand
    inputs: np.ndarray          # (N, 4) collective, body rates
    cost: float
    iterations: int
    converged: bool
    solve_time: float = 0.0


@dataclass
class Rollout:
    p: np.ndarray
    v: np.ndarray
    q: np.ndarray


def predict_delay(state, recent_commands: Sequence[Tuple[float, CtbrCommand]], delay: float, mass: float) -> PredictedState:
    """Advance ``state`` across ``delay`` with a point-mass model driven by the queued commands.

    ``recent_commands`` holds (time the command takes effect on the plant, command)
    pairs; the latest command is held beyond the buffer.
    """
    q = np.asarray(state.q, dtype=float).copy()
    p = np.asarray(state.p, dtype=float).copy()
    v = np.asarray(state.v, dtype=float).copy()
    if delay <= 0.0:
        return PredictedState(state.t, q, p, v)

    buffer = sorted(recent_commands, key=lambda item: item[0])
    steps = max(1, math.ceil(delay / PREDICT_STEP - 1e-9))
    h = delay / steps
    hover = CtbrCommand.hover(mass)
    for i in range(steps):
        t = state.t + i * h
        cmd = None
        for t_apply, candidate in buffer:
            if t_apply <= t + 1e-12:
                cmd = candidate
            else:
                break
        if cmd is None:
            cmd = buffer[0][1] if buffer else hover
        a = (cmd.collective / mass) * (quat_to_rotmat(q) @ E_Z) + GRAVITY_VECTOR
        p = p + v * h + 0.5 * a * h * h
        v = v + a * h
        q = quat_integrate(q, cmd.body_rates, h)
    return PredictedState(state.t + delay, q, p, v)


def _as_array(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


class TrackingController:
    """Stateful iLQR tracker; keeps the previous solution for warm starts."""

    def __init__(self, params: QuadParams, cfg: Optional[ControllerConfig] = None):
        self.params = params
        self.cfg = cfg or ControllerConfig()
        self.thrust_max = self.cfg.thrust_max or params.max_thrust
        if self.cfg.thrust_min >= self.thrust_max:
            raise InfeasibleBounds(f"thrust bounds [{self.cfg.thrust_min}, {self.thrust_max}] are empty")
        if self.thrust_max > params.max_thrust + 1e-9:
            raise InfeasibleBounds(f"thrust_max {self.thrust_max:.2f} N exceeds the airframe's {params.max_thrust:.2f} N")
        if not self.cfg.thrust_min <= params.hover_thrust <= self.thrust_max:
            raise InfeasibleBounds("hover thrust lies outside the thrust bounds")
        if self.cfg.rate_max > params.max_rate:
            raise InfeasibleBounds(f"rate bound {self.cfg.rate_max} exceeds the rate loop limit {params.max_rate}")

        w = self.cfg
        self.Q = np.diag(np.concatenate([w.position_weight, w.velocity_weight, w.attitude_weight])).astype(np.float64)
        self.Q_terminal = w.terminal_factor * self.Q
        self.R = np.diag([w.thrust_weight] + [w.rate_weight] * 3).astype(np.float64)
        self.lower = np.array([w.thrust_min] + [-w.rate_max] * 3, dtype=np.float64)
        self.upper = np.array([self.thrust_max] + [w.rate_max] * 3, dtype=np.float64)
        self.h = w.node_dt
        self.N = w.nodes
        self.mass = float(params.mass)
        self._previous: Optional[Tuple[float, np.ndarray]] = None
        self.telemetry: List[dict] = []

    def reset(self):
        self._previous = None

    def reference_inputs(self, ref: ReferenceWindow) -> np.ndarray:
        thrust = self.params.mass * np.linalg.norm(ref.acc[: self.N] - GRAVITY_VECTOR, axis=1)
        u = np.column_stack([thrust, ref.omega[: self.N]])
        return _as_array(np.clip(u, self.lower, self.upper))

    def _warm_start(self, t: float, u_ref: np.ndarray) -> np.ndarray:
        if self._previous is None:
            return u_ref.copy()
        t_prev, u_prev = self._previous
        grid = t_prev + self.h * np.arange(self.N)
        times = t + self.h * np.arange(self.N)
        u = np.column_stack([np.interp(times, grid, u_prev[:, j]) for j in range(4)])
        beyond = times > grid[-1] + 1e-12
        u[beyond] = u_ref[beyond]
        return u

    def _cost(self, x: Rollout, inputs: np.ndarray, ref: ReferenceWindow, u_ref: np.ndarray) -> float:
        e = ilqr.tracking_errors(x.p, x.v, x.q, ref.p, ref.v, ref.q)
        return float(ilqr.cost(e, inputs - u_ref, self.Q, self.Q_terminal, self.R))

    def optimize(self, state: PredictedState, ref: ReferenceWindow) -> SolveResult:
        started = time.perf_counter()
        ref = ReferenceWindow(
            ref.t, _as_array(ref.p), _as_array(ref.v), _as_array(ref.q), ref.acc, ref.omega,
        )
        u_ref = self.reference_inputs(ref)
        inputs = _as_array(np.clip(self._warm_start(state.t, u_ref), self.lower, self.upper))
        x = Rollout(*ilqr.rollout(_as_array(state.p), _as_array(state.v), _as_array(state.q), inputs, self.h, self.mass))
        cost = self._cost(x, inputs, ref, u_ref)

        mu = 1e-6
        failures = 0
        converged = False
        iterations = 0
        for iterations in range(1, self.cfg.max_iterations + 1):
            e = ilqr.tracking_errors(x.p, x.v, x.q, ref.p, ref.v, ref.q)
            Ks, ds, expected = ilqr.backward_pass(
                x.q, inputs, e, u_ref, self.Q, self.Q_terminal, self.R, self.h, self.mass, mu,
            )
            if expected < 1e-10 * (1.0 + cost):
                converged = True
                break
            accepted = False
            for alpha in LINE_SEARCH:
                p, v, q, inputs_new = ilqr.forward_pass(
                    x.p, x.v, x.q, inputs, Ks, ds, alpha, self.lower, self.upper, self.h, self.mass,
                )
                x_new = Rollout(p, v, q)
                cost_new = self._cost(x_new, inputs_new, ref, u_ref)
                if cost_new < cost:
                    x, inputs = x_new, inputs_new
                    converged = cost - cost_new < 1e-9 * (1.0 + cost)
                    cost = cost_new
                    accepted = True
                    break
            if accepted:
                failures = 0
                mu = max(mu * 0.1, 1e-9)
                if converged:
                    break
            elif expected < 1e-6 * (1.0 + cost):
                converged = True
                break
            else:
                failures += 1
                mu *= 10.0
                if failures >= MAX_FAILURES:
                    raise SolverDiverged(f"cost did not decrease for {failures} iterations at t={state.t:.3f}")

        self._previous = (state.t, inputs.copy())
        u0 = np.clip(inputs[0], self.lower, self.upper)
        elapsed = time.perf_counter() - started
        command = CtbrCommand(float(u0[0]), u0[1:].copy())
        return SolveResult(command, inputs, cost, iterations, converged, elapsed)

    def solve(self, state: PredictedState, traj: ReferenceTrajectory) -> CtbrCommand:
        ref = traj.window(state.t, self.cfg.horizon, self.N)
        result = self.optimize(state, ref)
        row = {"t": state.t, "cost": result.cost, "iterations": result.iterations, "converged": result.converged}
        if self.cfg.record_solve_time:
            row["solve_time"] = result.solve_time
        self.telemetry.append(row)
        logger.debug("solve t=%.3f cost=%.4f iterations=%d", state.t, result.cost, result.iterations)
        return result.command
