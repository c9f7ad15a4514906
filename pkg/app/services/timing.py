"""Gate-crossing classification and lap/sector timing.

Shared by the live race loop and by the replay of recorded flight logs.
"""
from typing import List, Optional, Tuple

import numpy as np

from app.models.race import LapRecord, SectorTime
from app.models.trajectory import ReferenceTrajectory
from app.schemas.track import Gate, GateMap

PASS, MISS, NONE = "pass", "miss", "none"


def detect_gate_pass(prev_p, cur_p, gate: Gate) -> str:
    """Classify the tick segment prev_p -> cur_p against ``gate``.

    ``pass``: crosses the gate plane in race direction through the opening.
    ``miss``: crosses the plane through the frame (outside the opening, inside
    the outer frame) in either direction; this is a frame collision.
    """
    result, _ = _classify(np.asarray(prev_p, dtype=float), np.asarray(cur_p, dtype=float), gate)
    return result


def _classify(prev_p: np.ndarray, cur_p: np.ndarray, gate: Gate) -> Tuple[str, float]:
    n = gate.normal
    d0 = float((prev_p - gate.position) @ n)
    d1 = float((cur_p - gate.position) @ n)
    forward = d0 < 0.0 <= d1
    backward = d0 >= 0.0 > d1
    if not (forward or backward):
        return NONE, 0.0
    s = d0 / (d0 - d1)
    point = prev_p + s * (cur_p - prev_p) - gate.position
    lateral = abs(float(point @ gate.lateral))
    vertical = abs(float(point[2]))
    if lateral <= gate.half_size and vertical <= gate.half_size:
        return (PASS if forward else NONE), s
    if lateral <= gate.outer_half_size and vertical <= gate.outer_half_size:
        return MISS, s
    return NONE, s


class GateCrossings:
    """Vectorised crossing test of one tick segment against every gate of a map."""

    def __init__(self, gate_map: GateMap):
        self.gates = gate_map.gates
        self.centers = np.array([g.position for g in self.gates])
        self.normals = np.array([g.normal for g in self.gates])

    def check(self, prev_p: np.ndarray, cur_p: np.ndarray) -> List[Tuple[int, str, float]]:
        d0 = np.einsum("ij,ij->i", prev_p - self.centers, self.normals)
        d1 = np.einsum("ij,ij->i", cur_p - self.centers, self.normals)
        candidates = np.nonzero((d0 < 0.0) != (d1 < 0.0))[0]
        events = []
        for i in candidates:
            result, s = _classify(prev_p, cur_p, self.gates[i])
            if result != NONE:
                events.append((int(i), result, s))
        return events


def reference_gate_times(traj: ReferenceTrajectory, gate_map: GateMap, laps: int = 1) -> List[Tuple[str, float]]:
    """Gate passes of the reference itself, in order; a closed reference repeats every lap."""
    crossings = GateCrossings(gate_map)
    times = []
    for k in range(1, len(traj)):
        for i, result, s in crossings.check(traj.p[k - 1], traj.p[k]):
            if result == PASS:
                times.append((gate_map.gates[i].id, traj.t[k - 1] + s * (traj.t[k] - traj.t[k - 1])))
    if traj.closed:
        one_lap = list(times)
        times = [(gid, t + lap * traj.lap_time) for lap in range(laps + 1) for gid, t in one_lap]
    return times


class LapTimer:
    """Times laps and sectors on passes of the first gate."""

    def __init__(self, gate_map: GateMap, run: str):
        self.first_gate = gate_map.gates[0].id
        self.run = run
        self.laps: List[LapRecord] = []
        self.sectors: List[SectorTime] = []
        self.started = False
        self.lap_start = 0.0
        self.last_event = (None, 0.0)
        self._reset_lap()

    def _reset_lap(self):
        self.current_sectors: List[float] = []
        self.top_speed = 0.0
        self.path_length = 0.0
        self.misses = 0

    @property
    def lap_index(self) -> int:
        return len(self.laps) + 1

    def tick(self, step_length: float, speed: float):
        if self.started:
            self.path_length += step_length
            self.top_speed = max(self.top_speed, speed)

    def gate_passed(self, gate_id: str, t: float) -> Optional[LapRecord]:
        finished = None
        if self.started:
            prev_id, prev_t = self.last_event
            self.current_sectors.append(t - prev_t)
            self.sectors.append(SectorTime(self.lap_index, prev_id, gate_id, t - prev_t))
        if gate_id == self.first_gate:
            if self.started:
                finished = LapRecord(
                    self.lap_index, t - self.lap_start, self.top_speed, self.path_length,
                    list(self.current_sectors), self.misses, run=self.run,
                )
                self.laps.append(finished)
            self.started = True
            self.lap_start = t
            self._reset_lap()
        self.last_event = (gate_id, t)
        return finished

    def gate_missed(self):
        self.misses += 1

    def abort(self, crashed: bool, timed_out: bool):
        self.laps.append(LapRecord(
            self.lap_index, float("nan"), self.top_speed, self.path_length,
            list(self.current_sectors), self.misses, crashed=crashed, timed_out=timed_out, run=self.run,
        ))


