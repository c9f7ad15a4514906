import math

import numpy as np
import pandas as pd
import pytest

from app.exceptions import InfeasibleTrajectory, ParseError
from app.schemas.track import Gate, GateMap
from app.services import track_service
from app.services.geometry import GRAVITY
from app.services.trajectory import (
    CSV_COLUMNS, check_feasible, consistency_error, generate_surrogate, lap_waypoints, load_trajectory,
    place_waypoints, save_trajectory,
)

CAP = 3.8 * GRAVITY


def single(center, yaw, split_s=False):
    return GateMap(name="t", gates=[Gate(id="G", center=center, yaw_rad=yaw, split_s=split_s)])


def test_waypoints_on_gate_normal():
    pre, post = place_waypoints(single([0.0, 0.0, 2.0], 0.0))
    assert np.allclose(pre.position, [-0.4, 0.0, 2.0])
    assert np.allclose(post.position, [0.4, 0.0, 2.0])
    assert (pre.side, post.side) == ("pre", "post")


def test_waypoints_follow_gate_yaw():
    pre, post = place_waypoints(single([1.0, 1.0, 2.0], math.pi / 2))
    assert np.allclose(pre.position, [1.0, 0.6, 2.0])
    assert np.allclose(post.position, [1.0, 1.4, 2.0])


def test_split_s_exit_is_further_out():
    pre, post = place_waypoints(single([0.0, 0.0, 2.0], 0.0, split_s=True))
    assert pre.position[0] == pytest.approx(-0.4)
    assert post.position[0] == pytest.approx(1.25)


def test_explicit_split_s_ids_override_map():
    _, post = place_waypoints(single([0.0, 0.0, 2.0], 0.0), split_s_ids={"G"})
    assert post.position[0] == pytest.approx(1.25)


def test_waypoints_translate_with_track(gate_map):
    offset = np.array([5.0, -3.0, 1.0])
    moved = GateMap(
        name="moved",
        gates=[g.model_copy(update={"center": list(g.position + offset)}) for g in gate_map.gates],
    )
    for a, b in zip(place_waypoints(gate_map), place_waypoints(moved)):
        assert np.allclose(b.position - a.position, offset)


def write_csv(path, rows):
    pd.DataFrame(rows, columns=CSV_COLUMNS).to_csv(path, index=False)


def test_load_two_sample_file(tmp_path):
    path = tmp_path / "two.csv"
    write_csv(path, [
        [0.0, 1, 0, 0, 0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0],
        [0.1, 1, 0, 0, 0, 0.1, 0.0, 2.0, 1.0, 0.0, 0.0],
    ])
    traj = load_trajectory(str(path))
    assert traj.lap_time == pytest.approx(0.1)
    assert len(traj) == 2


def test_load_rejects_decreasing_time(tmp_path):
    path = tmp_path / "back.csv"
    write_csv(path, [
        [0.0, 1, 0, 0, 0, 0, 0, 2, 0, 0, 0],
        [0.2, 1, 0, 0, 0, 0, 0, 2, 0, 0, 0],
        [0.1, 1, 0, 0, 0, 0, 0, 2, 0, 0, 0],
    ])
    with pytest.raises(ParseError, match="row 3"):
        load_trajectory(str(path))


def test_load_hover_file_is_feasible(tmp_path):
    path = tmp_path / "hover.csv"
    write_csv(path, [[0.01 * k, 1, 0, 0, 0, 0, 0, 2, 0, 0, 0] for k in range(11)])
    traj = load_trajectory(str(path))
    assert np.allclose(traj.acc, 0.0)
    assert np.allclose(traj.thrust_accel, GRAVITY)


def test_load_rejects_thrust_above_cap(tmp_path):
    path = tmp_path / "fast.csv"
    write_csv(path, [[0.01 * k, 1, 0, 0, 0, 0, 0, 2, 10.0 * k, 0, 0] for k in range(5)])
    with pytest.raises(InfeasibleTrajectory):
        load_trajectory(str(path))


def test_load_rejects_missing_column(tmp_path):
    path = tmp_path / "cols.csv"
    pd.DataFrame({"t": [0.0, 0.1], "px": [0.0, 0.0]}).to_csv(path, index=False)
    with pytest.raises(ParseError, match="missing columns"):
        load_trajectory(str(path))


def test_load_rejects_non_unit_quaternion(tmp_path):
    path = tmp_path / "quat.csv"
    write_csv(path, [
        [0.0, 1, 0, 0, 0, 0, 0, 2, 0, 0, 0],
        [0.1, 2, 0, 0, 0, 0, 0, 2, 0, 0, 0],
    ])
    with pytest.raises(ParseError, match="quaternion"):
        load_trajectory(str(path))


def test_load_missing_file():
    with pytest.raises(ParseError):
        load_trajectory("/nonexistent/trajectory.csv")


def test_surrogate_peak_thrust_near_cap():
    traj = generate_surrogate([[0.0, 0.0, 2.0], [10.0, 0.0, 2.0]], twr_gen=3.8, closed=False)
    assert 0.93 * CAP <= np.max(traj.thrust_accel) <= 0.96 * CAP


def test_surrogate_lap_time_grows_with_track_size():
    square = np.array([[0.0, 0.0, 2.0], [4.0, 0.0, 2.0], [4.0, 4.0, 2.0], [0.0, 4.0, 2.0]])
    small = generate_surrogate(square)
    large = generate_surrogate(square * [2.0, 2.0, 1.0])
    assert large.lap_time > small.lap_time


def test_surrogate_passes_through_waypoints():
    square = np.array([[0.0, 0.0, 2.0], [4.0, 0.0, 2.0], [4.0, 4.0, 2.0], [0.0, 4.0, 2.0]])
    traj = generate_surrogate(square)
    for t, wp in zip(traj.knot_times, square):
        assert np.linalg.norm(traj.sample(t).p[0] - wp) < 0.05


def test_surrogate_is_smooth_and_closed():
    square = np.array([[0.0, 0.0, 2.0], [4.0, 0.0, 2.0], [4.0, 4.0, 2.0], [0.0, 4.0, 2.0]])
    traj = generate_surrogate(square)
    assert consistency_error(traj) < 0.01
    assert np.array_equal(traj.p[0], traj.p[-1])
    assert np.allclose(np.linalg.norm(traj.q, axis=1), 1.0)


def test_surrogate_rejects_coincident_waypoints():
    with pytest.raises(InfeasibleTrajectory):
        generate_surrogate([[0.0, 0.0, 2.0], [0.005, 0.0, 2.0], [3.0, 0.0, 2.0]])


@pytest.mark.parametrize("track", ["track_ratm", "track_splits"])
def test_bundled_tracks_yield_feasible_laps(track):
    traj = generate_surrogate(place_waypoints(track_service.get_track(track)))
    check_feasible(traj, 3.8)
    assert traj.lap_time > 0.0


def test_save_load_round_trip(tmp_path):
    square = np.array([[0.0, 0.0, 2.0], [4.0, 0.0, 2.0], [4.0, 4.0, 2.0], [0.0, 4.0, 2.0]])
    traj = generate_surrogate(square)
    path = tmp_path / "lap.csv"
    save_trajectory(traj, str(path))
    loaded = load_trajectory(str(path), closed=True)
    assert np.array_equal(loaded.t, traj.t)
    assert np.array_equal(loaded.p, traj.p)
    assert np.array_equal(loaded.v, traj.v)
    assert np.allclose(loaded.q, traj.q, atol=1e-15)
    assert loaded.closed


def test_lap_waypoints_structure(gate_map):
    course = lap_waypoints(gate_map, 2)
    n = len(gate_map.gates)
    assert len(course) == 2 * 2 * n + 3
    assert course[0].side == "start" and course[-1].side == "end"
    assert course[-2].gate_id == gate_map.gates[0].id and course[-2].side == "post"
    assert sum(1 for w in course if w.gate_id == "G1" and w.side == "post") == 3
