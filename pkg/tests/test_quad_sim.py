import numpy as np
import pytest

from app.exceptions import NonFinite
from app.models.control import CtbrCommand
from app.models.state import TrueState
from app.schemas.quad import QuadParams
from app.services.geometry import GRAVITY, yaw_from_quat
from app.services.quad_sim import QuadrotorSimulator, allocation_matrix, body_torques, mixer, step

DT = 0.001


def fly(params, state, cmd, seconds):
    sim = QuadrotorSimulator(params, state, DT)
    for _ in range(int(round(seconds / DT))):
        sim.step(cmd)
    return sim.state


def test_hover_is_equilibrium(quad_params):
    start = TrueState.hovering([0.0, 0.0, 2.0], quad_params.hover_thrust)
    end = fly(quad_params, start, CtbrCommand.hover(quad_params.mass), 1.0)
    assert np.linalg.norm(end.v) < 1e-3
    assert np.linalg.norm(end.p - start.p) < 1e-3


def test_free_fall(quad_params):
    start = TrueState.at_rest([0.0, 0.0, 10.0])
    end = fly(quad_params, start, CtbrCommand(0.0, np.zeros(3)), 0.5)
    assert end.v[2] == pytest.approx(-GRAVITY * 0.5, rel=0.01)
    assert np.allclose(end.v[:2], 0.0)


def test_free_fall_conserves_horizontal_momentum(quad_params):
    start = TrueState(
        t=0.0, q=np.array([1.0, 0.0, 0.0, 0.0]), p=np.array([0.0, 0.0, 10.0]),
        v=np.array([3.0, -1.0, 0.0]), omega=np.zeros(3), rotor_thrusts=np.zeros(4),
    )
    end = fly(quad_params, start, CtbrCommand(0.0, np.zeros(3)), 0.5)
    assert np.allclose(end.v[:2], [3.0, -1.0], atol=1e-12)


def test_yaw_rate_tracking(quad_params):
    start = TrueState.hovering([0.0, 0.0, 2.0], quad_params.hover_thrust)
    cmd = CtbrCommand(quad_params.hover_thrust, np.array([0.0, 0.0, 2.0]))
    sim = QuadrotorSimulator(quad_params, start, DT)
    for _ in range(200):
        sim.step(cmd)
    heading = 0.0
    previous = yaw_from_quat(sim.state.q)
    for _ in range(1000):
        state = sim.step(cmd)
        yaw = yaw_from_quat(state.q)
        heading += (yaw - previous + np.pi) % (2 * np.pi) - np.pi
        previous = yaw
    assert heading == pytest.approx(2.0, rel=0.05)
    assert sim.state.omega[2] == pytest.approx(2.0, abs=0.02)


def test_rate_step_has_no_steady_state_error(quad_params):
    start = TrueState.hovering([0.0, 0.0, 2.0], quad_params.hover_thrust)
    end = fly(quad_params, start, CtbrCommand(quad_params.hover_thrust, np.array([1.0, 0.0, 0.0])), 0.3)
    assert end.omega[0] == pytest.approx(1.0, abs=5e-3)


def test_mixer_hover_is_symmetric(quad_params):
    thrusts = mixer(quad_params.hover_thrust, np.zeros(3), quad_params)
    assert np.allclose(thrusts, quad_params.hover_thrust / 4.0)


def test_mixer_clamps_pure_roll_at_zero(quad_params):
    thrusts = mixer(0.0, np.array([0.05, 0.0, 0.0]), quad_params)
    assert np.all(thrusts >= 0.0)
    assert np.count_nonzero(thrusts) == 2


def test_mixer_inverts_allocation(quad_params, rng):
    for _ in range(20):
        collective = rng.uniform(5.0, 20.0)
        torques = rng.uniform(-0.05, 0.05, 3) * [1.0, 1.0, 0.2]
        thrusts = mixer(collective, torques, quad_params)
        assert thrusts.sum() == pytest.approx(collective, abs=1e-12)
        assert np.allclose(body_torques(thrusts, quad_params), torques, atol=1e-12)


def test_allocation_matrix_full_rank(quad_params):
    assert np.linalg.matrix_rank(allocation_matrix(quad_params)) == 4


def test_mixer_sheds_yaw_before_thrust(quad_params):
    collective = 0.95 * quad_params.max_thrust
    thrusts = mixer(collective, np.array([0.0, 0.0, 0.5]), quad_params)
    assert np.all(thrusts <= quad_params.max_rotor_thrust + 1e-12)
    assert thrusts.sum() == pytest.approx(collective, rel=1e-9)


def test_nan_command_raises(quad_params):
    start = TrueState.hovering([0.0, 0.0, 2.0], quad_params.hover_thrust)
    with pytest.raises(NonFinite):
        step(start, CtbrCommand(float("nan"), np.zeros(3)), DT, quad_params)


def test_step_rejects_large_dt(quad_params):
    start = TrueState.hovering([0.0, 0.0, 2.0], quad_params.hover_thrust)
    with pytest.raises(ValueError):
        step(start, CtbrCommand.hover(quad_params.mass), 0.01, quad_params)


def test_deterministic(quad_params):
    start = TrueState.hovering([0.0, 0.0, 2.0], quad_params.hover_thrust)
    cmd = CtbrCommand(quad_params.hover_thrust * 1.2, np.array([0.5, -0.3, 1.0]))
    a = fly(quad_params, start, cmd, 0.2)
    b = fly(quad_params, start, cmd, 0.2)
    assert np.array_equal(a.p, b.p) and np.array_equal(a.q, b.q)


def test_drag_slows_the_vehicle():
    params = QuadParams(drag=[0.3, 0.3, 0.0])
    start = TrueState(
        t=0.0, q=np.array([1.0, 0.0, 0.0, 0.0]), p=np.array([0.0, 0.0, 2.0]),
        v=np.array([5.0, 0.0, 0.0]), omega=np.zeros(3), rotor_thrusts=np.full(4, params.hover_thrust / 4),
    )
    end = fly(params, start, CtbrCommand.hover(params.mass), 0.5)
    assert end.v[0] < 5.0
