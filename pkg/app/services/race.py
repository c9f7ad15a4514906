"""Deterministic closed-loop race harness.

One physics tick runs, in this order: plant integration and gate/crash checks,
sensor sampling (IMU, VIO, MoCap, camera capture), delivery of camera frames
whose detector latency has elapsed, drift filter and EKF updates, and finally
the controller when the control clock fires. Commands reach the plant after
the configured command delay.
"""
import logging
import os
from collections import deque
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from app.exceptions import FilterDiverged, NonFinite, RaceSimError, SolverDiverged
from app.models.control import CtbrCommand
from app.models.race import RaceResult
from app.models.sensors import CameraFrameEvent, VioSample
from app.models.state import PoseMeasurement, PredictedState, TrueState
from app.models.trajectory import ReferenceTrajectory
from app.schemas.race import RaceConfig
from app.schemas.track import GateMap
from app.services import analysis
from app.services.controller import TrackingController, predict_delay
from app.services.drift_kf import DriftKalmanFilter, DriftObservation
from app.services.ekf import ErrorStateEkf
from app.services.geometry import world_from_camera, yaw_from_quat
from app.services.quad_sim import QuadrotorSimulator
from app.services.sensors import SensorSuite, fires
from app.services.timing import MISS, GateCrossings, LapTimer, reference_gate_times
from app.services.track_service import get_intrinsics, get_track
from app.services.trajectory import generate_surrogate, lap_waypoints, load_trajectory
from app.services.vision import MeasurementCovarianceTable, implied_body_pose, measure_gates, view_angle

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz"]


@dataclass
class _Estimate:
    t: float
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray


class RaceSession:
    """One run of the closed loop; ``run`` may be called once."""

    def __init__(self, cfg: RaceConfig, gate_map: Optional[GateMap] = None, reference: Optional[ReferenceTrajectory] = None):
        self.cfg = cfg
        self.gate_map = gate_map or get_track(cfg.track)
        self.K = get_intrinsics(cfg)
        self.reference = reference or self._build_reference()
        self.ref_times = reference_gate_times(self.reference, self.gate_map, cfg.laps)
        self.physics_rate = cfg.rates.physics
        self.dt = 1.0 / self.physics_rate
        self.delay_ticks = int(round(cfg.controller.delay * self.physics_rate))

        start = TrueState.hovering(
            self.reference.p[0], cfg.quad.hover_thrust, yaw=yaw_from_quat(self.reference.q[0]),
        )
        self.sim = QuadrotorSimulator(cfg.quad, start, self.dt)
        self.sensors = SensorSuite(
            cfg.seed, cfg.imu, cfg.drift, cfg.vision, self.K, cfg.mount, cfg.rates, cfg.mocap_sigma,
        )
        self.controller = TrackingController(cfg.quad, cfg.controller)
        self.drift_kf = DriftKalmanFilter(cfg.drift_filter)
        self.table = None
        if cfg.mode == "vio":
            self.table = MeasurementCovarianceTable.cached(self.K, cfg.vision)
        self.ekf: Optional[ErrorStateEkf] = None
        self.mocap: Optional[VioSample] = None
        self.timer = LapTimer(self.gate_map, cfg.run_label)
        self.crossings = GateCrossings(self.gate_map)
        self.pending_frames: deque = deque()
        self.commands: deque = deque()
        self.active = (0.0, CtbrCommand.hover(cfg.quad.mass))
        self.ref_pointer = 0
        self.events: List[dict] = []
        self.state_rows: List[list] = []
        self.est_rows: List[list] = []

    def _build_reference(self) -> ReferenceTrajectory:
        cfg = self.cfg
        if cfg.trajectory_file:
            return load_trajectory(cfg.trajectory_file, cfg.trajectory.twr_gen, closed=True)
        waypoints = lap_waypoints(self.gate_map, cfg.laps, cfg.trajectory)
        return generate_surrogate(
            waypoints, cfg.trajectory.twr_gen, cfg.trajectory.dt, closed=False, cfg=cfg.trajectory,
            initial_yaw=self.gate_map.gates[0].yaw_rad,
        )

    def _event(self, t: float, kind: str, gate: str = "", detail: str = ""):
        self.events.append({"t": t, "event": kind, "gate": gate, "lap": self.timer.lap_index, "detail": detail})

    # estimation

    def _estimate(self) -> _Estimate:
        if self.cfg.mode == "mocap":
            m = self.mocap
            return _Estimate(m.t, m.q, m.p, m.v)
        s = self.ekf.state
        return _Estimate(s.t, s.q, s.p, s.v)

    def _pose_for_ekf(self, vio: VioSample) -> PoseMeasurement:
        if self.cfg.mode == "vio":
            vio = self.drift_kf.correct(vio)
        return PoseMeasurement(vio.t, vio.q, vio.p)

    def _process_frame(self, event: CameraFrameEvent):
        corrected = self.drift_kf.correct(event.vio)
        est_cam = None
        if self.cfg.vision.association == "nearest":
            est_cam = world_from_camera(corrected.q, corrected.p, self.cfg.mount)
        measurements = measure_gates(event.detections, self.gate_map, self.K, self.cfg.vision, event.t_available, est_cam)
        vio_yaw = yaw_from_quat(corrected.q)
        observations = []
        for m in measurements:
            gate = self.gate_map.gate(m.gate_id)
            body = implied_body_pose(m, gate, self.cfg.mount)
            if not self.drift_kf.yaw_consistent(yaw_from_quat(body.rotation), vio_yaw):
                logger.warning("t=%.3f: gate %s rejected, PnP yaw disagrees with VIO", event.t_available, gate.id)
                continue
            R = self.table.lookup(m.distance, gate.yaw_rad, view_angle(m))
            observations.append(DriftObservation(event.vio.p - body.translation, R, gate.id))
        self.drift_kf.process_frame(event.t_available, observations)

    # control

    def _control(self, t: float):
        est = self._estimate()
        state = PredictedState(t, est.q, est.p, est.v)
        if self.cfg.controller.predict_delay:
            buffer = [self.active] + list(self.commands)
            state = predict_delay(state, buffer, self.cfg.controller.delay, self.cfg.quad.mass)
        try:
            cmd = self.controller.solve(state, self.reference)
        except SolverDiverged as exc:
            logger.warning("controller fell back to the previous command: %s", exc)
            self._event(t, "solver_fallback", detail=str(exc))
            cmd = self.commands[-1][1] if self.commands else self.active[1]
        self.commands.append((t + self.delay_ticks * self.dt, cmd))

    # gates

    def _check_gates(self, prev_p: np.ndarray, state: TrueState) -> Optional[str]:
        """Gate and lap bookkeeping for one tick; path length is split at each crossing."""
        step = float(np.linalg.norm(state.p - prev_p))
        speed = float(np.linalg.norm(state.v))
        credited = 0.0
        for i, result, s in sorted(self.crossings.check(prev_p, state.p), key=lambda event: event[2]):
            gate = self.gate_map.gates[i]
            t_cross = state.t - self.dt + s * self.dt
            self.timer.tick((s - credited) * step, speed)
            credited = s
            if result == MISS:
                self._event(t_cross, "gate_miss", gate.id, "frame collision")
                self.timer.gate_missed()
                return f"collision with the frame of gate {gate.id}"
            self._gate_passed(gate.id, t_cross)
        self.timer.tick((1.0 - credited) * step, speed)
        while self.ref_pointer < len(self.ref_times) and state.t > self.ref_times[self.ref_pointer][1] + self.cfg.miss_grace:
            gate_id = self.ref_times[self.ref_pointer][0]
            logger.info("t=%.3f: gate %s missed", state.t, gate_id)
            self._event(state.t, "gate_miss", gate_id, "skipped")
            self.timer.gate_missed()
            self.ref_pointer += 1
        return None

    def _gate_passed(self, gate_id: str, t: float):
        lookahead = self.ref_times[self.ref_pointer:self.ref_pointer + len(self.gate_map.gates)]
        match = next((j for j, (gid, _) in enumerate(lookahead) if gid == gate_id), None)
        if match is None:
            logger.debug("t=%.3f: out-of-sequence crossing of gate %s ignored", t, gate_id)
            return
        for gid, _ in lookahead[:match]:
            self._event(t, "gate_miss", gid, "skipped")
            self.timer.gate_missed()
        self.ref_pointer += match + 1
        self._event(t, "gate_pass", gate_id)
        lap = self.timer.gate_passed(gate_id, t)
        if lap is not None:
            logger.info("lap %d: %.3f s, top speed %.2f m/s, %d miss(es)", lap.lap, lap.lap_time, lap.top_speed, lap.gate_misses)
            self._event(t, "lap", gate_id, f"{lap.lap_time:.6f}")

    def _log(self, state: TrueState):
        cmd = self.active[1]
        self.state_rows.append(
            [state.t, *state.q, *state.p, *state.v, cmd.collective, *cmd.body_rates]
        )
        est = self._estimate()
        self.est_rows.append([state.t, *est.q, *est.p, *est.v])

    def _timed_out(self, t: float) -> bool:
        since = t - self.timer.lap_start if self.timer.started else t
        return since > self.cfg.lap_timeout

    def run(self) -> RaceResult:
        cfg = self.cfg
        rates = cfg.rates
        logger.info("race start: track %s, mode %s, seed %d, %d lap(s)", self.gate_map.name, cfg.mode, cfg.seed, cfg.laps)
        crash_reason = None
        timed_out = False
        k = 0
        state = self.sim.state
        try:
            while True:
                t = k * self.dt
                if k > 0:
                    while self.commands and self.commands[0][0] <= t - self.dt + 1e-9:
                        self.active = self.commands.popleft()
                    prev_p = state.p
                    state = self.sim.step(self.active[1])
                    crash_reason = self._check_gates(prev_p, state)
                    if crash_reason is None and not cfg.arena.contains(state.p):
                        crash_reason = f"left the arena at {np.round(state.p, 2).tolist()}"
                    if crash_reason:
                        break
                    if len(self.timer.laps) >= cfg.laps:
                        break
                    if self._timed_out(t):
                        timed_out = True
                        break

                imu = self.sensors.imu(state) if fires(k, rates.imu, rates.physics) else None
                vio = self.sensors.vio(state) if cfg.mode != "mocap" and fires(k, rates.vio, rates.physics) else None
                if cfg.mode == "mocap" and fires(k, rates.mocap, rates.physics):
                    self.mocap = self.sensors.mocap(state)
                if cfg.mode == "vio" and fires(k, rates.camera, rates.physics):
                    self.pending_frames.append(self.sensors.camera_frame(state, self.gate_map))

                while self.pending_frames and self.pending_frames[0].t_available <= t + 1e-9:
                    self._process_frame(self.pending_frames.popleft())
                if cfg.mode != "mocap":
                    if self.ekf is None:
                        first = self._pose_for_ekf(vio)
                        self.ekf = ErrorStateEkf.from_pose(t, first.q, first.p, vio.v, cfg.ekf)
                    if imu is not None:
                        self.ekf.propagate(imu)
                    if vio is not None:
                        self.ekf.update(self._pose_for_ekf(vio))

                if imu is not None:
                    self._log(state)
                if fires(k, rates.control, rates.physics):
                    self._control(t)
                k += 1
        except (NonFinite, FilterDiverged) as exc:
            crash_reason = f"{type(exc).__name__}: {exc}"
        except RaceSimError as exc:
            raise type(exc)(f"lap {self.timer.lap_index}: {exc}") from exc

        if crash_reason:
            logger.info("crash at t=%.3f: %s", state.t, crash_reason)
            self._event(state.t, "crash", detail=crash_reason)
            self.timer.abort(crashed=True, timed_out=False)
        elif timed_out:
            logger.info("lap %d timed out after %.1f s", self.timer.lap_index, cfg.lap_timeout)
            self._event(state.t, "timeout")
            self.timer.abort(crashed=False, timed_out=True)
        logger.info("race end: %d lap(s) completed", sum(lap.completed for lap in self.timer.laps))

        telemetry = pd.DataFrame(self.controller.telemetry)
        state_log = pd.DataFrame(self.state_rows, columns=LOG_COLUMNS + ["collective", "wx", "wy", "wz"])
        rmse = analysis.tracking_rmse(state_log, self.reference)
        logger.info("position tracking RMSE %.3f m", rmse)
        return RaceResult(
            laps=self.timer.laps,
            sectors=self.timer.sectors,
            state_log=state_log,
            est_log=pd.DataFrame(self.est_rows, columns=LOG_COLUMNS),
            events=pd.DataFrame(self.events, columns=["t", "event", "gate", "lap", "detail"]),
            telemetry=telemetry,
            crashed=crash_reason is not None,
            crash_reason=crash_reason,
            tracking_rmse=rmse,
        )


def run_race(cfg: RaceConfig, gate_map: Optional[GateMap] = None, reference: Optional[ReferenceTrajectory] = None) -> RaceResult:
    return RaceSession(cfg, gate_map, reference).run()


def write_run(result: RaceResult, out_dir: str, sectors: bool = True):
    """Write every log of a run; identical results give byte-identical files."""
    os.makedirs(out_dir, exist_ok=True)
    laps = analysis.laps_frame(result.laps)
    laps.to_csv(os.path.join(out_dir, "laps.csv"), index=False)
    result.state_log.to_csv(os.path.join(out_dir, "state_log.csv"), index=False)
    result.est_log.to_csv(os.path.join(out_dir, "est_log.csv"), index=False)
    result.events.to_csv(os.path.join(out_dir, "events.csv"), index=False)
    result.telemetry.to_csv(os.path.join(out_dir, "controller.csv"), index=False)
    analysis.estimation_error(result.state_log, result.est_log).to_csv(
        os.path.join(out_dir, "estimation_error.csv"), index=False,
    )
    if sectors:
        analysis.sectors_frame(result.sectors).to_csv(os.path.join(out_dir, "sectors.csv"), index=False)
    with open(os.path.join(out_dir, "summary.txt"), "w") as f:
        try:
            f.write(analysis.format_summary(analysis.summarize(laps)))
        except RaceSimError as exc:
            f.write(f"{exc}\n")
        f.write(f"tracking RMSE: {result.tracking_rmse:.4f} m\n")
        if result.crashed:
            f.write(f"crash: {result.crash_reason}\n")
