"""Rigid-body quadrotor plant with an emulated flight-controller rate loop.

The plant accepts collective thrust and body-rate commands, closes a PID on
the gyro rates, allocates rotor thrusts through an X-configuration mixer and
integrates Newton-Euler dynamics with semi-implicit Euler.
"""
import logging
import math

import numpy as np

from app.exceptions import NonFinite
from app.models.control import CtbrCommand
from app.models.state import TrueState
from app.schemas.quad import QuadParams
from app.services.geometry import E_Z, GRAVITY_VECTOR, quat_integrate, quat_to_rotmat

logger = logging.getLogger(__name__)

MAX_STEP = 0.002

# Rotor layout (body x forward, y left): front-left, rear-right, front-right, rear-left.
# Diagonal pairs share a spin direction.
ROTOR_X = np.array([1.0, -1.0, 1.0, -1.0])
ROTOR_Y = np.array([1.0, -1.0, -1.0, 1.0])
ROTOR_SPIN = np.array([-1.0, -1.0, 1.0, 1.0])


def _moment_arm(params: QuadParams) -> float:
    return params.arm_length / math.sqrt(2.0)


def allocation_matrix(params: QuadParams) -> np.ndarray:
    """Maps rotor thrusts to [collective, roll, pitch, yaw torque]."""
    a = _moment_arm(params)
    return np.vstack([
        np.ones(4),
        a * ROTOR_Y,
        -a * ROTOR_X,
        params.yaw_torque_coefficient * ROTOR_SPIN,
    ])


def body_torques(rotor_thrusts: np.ndarray, params: QuadParams) -> np.ndarray:
    a = _moment_arm(params)
    return np.array([
        a * (ROTOR_Y @ rotor_thrusts),
        -a * (ROTOR_X @ rotor_thrusts),
        params.yaw_torque_coefficient * (ROTOR_SPIN @ rotor_thrusts),
    ])


def mixer(collective: float, torques: np.ndarray, params: QuadParams) -> np.ndarray:
    """Allocate rotor thrusts, shedding yaw authority first on saturation."""
    a = _moment_arm(params)
    f_max = params.max_rotor_thrust
    base = collective / 4.0 + ROTOR_Y * torques[0] / (4 * a) - ROTOR_X * torques[1] / (4 * a)
    yaw = ROTOR_SPIN * torques[2] / (4 * params.yaw_torque_coefficient)
    thrusts = base + yaw
    if np.all(thrusts >= 0.0) and np.all(thrusts <= f_max):
        return thrusts

    scale = 1.0
    for b, y in zip(base, yaw):
        if y > 0.0:
            scale = min(scale, (f_max - b) / y)
        elif y < 0.0:
            scale = min(scale, -b / y)
    scale = min(max(scale, 0.0), 1.0)
    return np.clip(base + scale * yaw, 0.0, f_max)


def rate_torque(state: TrueState, rate_setpoint: np.ndarray, integral: np.ndarray, params: QuadParams) -> np.ndarray:
    """PID on body rates; derivative acts on the measured angular acceleration."""
    gains = params.rate_pid
    J = np.asarray(params.inertia)
    omega = state.omega
    gyroscopic = np.cross(omega, J * omega)
    omega_dot = (body_torques(state.rotor_thrusts, params) - gyroscopic) / J
    error = rate_setpoint - omega
    accel = (
        np.asarray(gains.kp) * error
        + np.asarray(gains.ki) * integral
        - np.asarray(gains.kd) * omega_dot
    )
    return J * accel + gyroscopic


def step(state: TrueState, cmd: CtbrCommand, dt: float, params: QuadParams) -> TrueState:
    if not 0.0 < dt <= MAX_STEP:
        raise ValueError(f"physics step {dt} outside (0, {MAX_STEP}]")
    if not cmd.is_finite():
        raise NonFinite(f"non-finite command at t={state.t:.3f}")
    if not state.is_finite():
        raise NonFinite(f"non-finite state at t={state.t:.3f}")

    rates = np.clip(cmd.body_rates, -params.max_rate, params.max_rate)
    limit = params.rate_pid.integral_limit
    integral = np.clip(state.rate_integral + (rates - state.omega) * dt, -limit, limit)
    torque_cmd = rate_torque(state, rates, integral, params)
    collective = min(max(cmd.collective, 0.0), params.max_thrust)
    thrust_cmd = mixer(collective, torque_cmd, params)

    # first-order rotor response, exact for a held command
    alpha = 1.0 - math.exp(-dt / params.rotor_time_constant)
    rotor_thrusts = state.rotor_thrusts + alpha * (thrust_cmd - state.rotor_thrusts)

    J = np.asarray(params.inertia)
    torque = body_torques(rotor_thrusts, params)
    omega = state.omega + dt * (torque - np.cross(state.omega, J * state.omega)) / J

    force = quat_to_rotmat(state.q) @ (E_Z * rotor_thrusts.sum())
    accel = force / params.mass + GRAVITY_VECTOR - np.asarray(params.drag) * state.v / params.mass
    v = state.v + accel * dt
    p = state.p + v * dt
    q = quat_integrate(state.q, omega, dt)

    nxt = TrueState(
        t=state.t + dt, q=q, p=p, v=v, omega=omega,
        rotor_thrusts=rotor_thrusts, a=accel, rate_integral=integral,
    )
    if not nxt.is_finite():
        logger.error("state became non-finite at t=%.4f", nxt.t)
        raise NonFinite(f"state became non-finite at t={nxt.t:.4f}")
    return nxt


class QuadrotorSimulator:
    """Owns the true state of one vehicle; the race loop steps it."""

    def __init__(self, params: QuadParams, initial: TrueState, dt: float):
        self.params = params
        self.state = initial
        self.dt = dt

    def step(self, cmd: CtbrCommand) -> TrueState:
        self.state = step(self.state, cmd, self.dt, self.params)
        return self.state
