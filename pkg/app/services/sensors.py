"""IMU, VIO and camera-frame generation from the true state.

Every stream draws from its own ``numpy`` generator spawned from one seed, so
the interleaving of streams never changes the numbers a stream produces.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from app.models.sensors import CameraFrameEvent, ImuBiases, ImuSample, VioDrift, VioSample
from app.models.state import TrueState
from app.schemas.camera import CameraMount, FisheyeIntrinsics
from app.schemas.sensors import DriftModel, ImuNoiseConfig, SensorRates
from app.schemas.track import GateMap
from app.schemas.vision import VisionConfig
from app.services.geometry import (
    GRAVITY_VECTOR, quat_from_yaw, quat_multiply, quat_to_rotmat, rot_z, world_from_camera,
)
from app.services.vision import detect_gates

logger = logging.getLogger(__name__)


def fires(k: int, rate: int, physics_rate: int) -> bool:
    """True when a ``rate`` Hz stream emits on physics tick ``k``."""
    if k == 0:
        return True
    return (k * rate) // physics_rate != ((k - 1) * rate) // physics_rate


def sample_imu(
    true_state: TrueState,
    biases: ImuBiases,
    noise_cfg: ImuNoiseConfig,
    rng: np.random.Generator,
    dt: float = 1.0 / 500.0,
) -> ImuSample:
    R = quat_to_rotmat(true_state.q)
    accel_sigma = noise_cfg.accel_noise_density / math.sqrt(dt)
    gyro_sigma = noise_cfg.gyro_noise_density / math.sqrt(dt)
    a = R.T @ (true_state.a - GRAVITY_VECTOR) + biases.accel + accel_sigma * rng.standard_normal(3)
    omega = true_state.omega + biases.gyro + gyro_sigma * rng.standard_normal(3)
    return ImuSample(true_state.t, a, omega)


def advance_biases(biases: ImuBiases, noise_cfg: ImuNoiseConfig, dt: float, rng: np.random.Generator) -> ImuBiases:
    root = math.sqrt(dt)
    return ImuBiases(
        accel=biases.accel + noise_cfg.accel_bias_random_walk * root * rng.standard_normal(3),
        gyro=biases.gyro + noise_cfg.gyro_bias_random_walk * root * rng.standard_normal(3),
    )


def advance_drift(
    drift: VioDrift,
    model: DriftModel,
    t: float,
    rng: np.random.Generator,
    position: Optional[np.ndarray] = None,
) -> VioDrift:
    """Random-walk the drift to ``t``; distance flown since the last call adds drift along ``drift.direction``."""
    dt = max(t - drift.t, 0.0)
    root = math.sqrt(dt)
    offset = drift.position + model.sigma_rw * root * rng.standard_normal(3)
    if position is not None and drift.odometer is not None:
        offset = offset + model.drift_per_meter * float(np.linalg.norm(position - drift.odometer)) * drift.direction
    yaw = drift.yaw + math.radians(model.yaw_rw_deg) * root * rng.standard_normal()
    last_closure = drift.last_closure
    if model.loop_closure_interval is not None and t - last_closure >= model.loop_closure_interval:
        offset = model.shrink_factor * offset
        yaw = model.shrink_factor * yaw
        last_closure = t
        logger.debug("loop closure at t=%.3f, drift shrunk to %.3f m", t, float(np.linalg.norm(offset)))
    odometer = drift.odometer if position is None else np.array(position, dtype=float)
    return VioDrift(offset, yaw, t, last_closure, drift.direction, odometer)


def drifted_reading(true_state: TrueState, drift: VioDrift, model: DriftModel) -> VioSample:
    """What VIO reports for ``true_state`` under ``drift``, before white noise."""
    q = quat_multiply(quat_from_yaw(drift.yaw), true_state.q)
    v = rot_z(drift.yaw) @ true_state.v
    v = v + model.drift_per_meter * float(np.linalg.norm(true_state.v)) * drift.direction
    return VioSample(true_state.t, q, true_state.p + drift.position, v)


def sample_vio(
    true_state: TrueState,
    drift: VioDrift,
    model: DriftModel,
    rng: np.random.Generator,
) -> Tuple[VioSample, VioDrift]:
    """Drifting VIO estimate; returns the sample and the advanced drift process."""
    drift = advance_drift(drift, model, true_state.t, rng, true_state.p)
    clean = drifted_reading(true_state, drift, model)
    p = clean.p + model.sigma_p * rng.standard_normal(3)
    v = clean.v + model.sigma_v * rng.standard_normal(3)
    return VioSample(true_state.t, clean.q, p, v), drift


def latency_ticks(cfg: VisionConfig, physics_rate: int, rng: np.random.Generator) -> int:
    lo = math.ceil(round(cfg.latency_min * physics_rate, 9))
    hi = math.floor(round(cfg.latency_max * physics_rate, 9))
    return int(rng.integers(lo, max(hi, lo) + 1))


class SensorSuite:
    """Owns the sensor noise processes and their random streams for one run."""

    def __init__(
        self,
        seed: int,
        imu_cfg: ImuNoiseConfig,
        drift_model: DriftModel,
        vision_cfg: VisionConfig,
        intrinsics: FisheyeIntrinsics,
        mount: CameraMount,
        rates: Optional[SensorRates] = None,
        mocap_sigma: float = 0.001,
    ):
        streams = np.random.SeedSequence(seed).spawn(7)
        (
            self.imu_rng, self.bias_rng, self.vio_rng, self.vision_rng,
            self.latency_rng, self.mocap_rng, self.heading_rng,
        ) = (np.random.default_rng(s) for s in streams)
        self.imu_cfg = imu_cfg
        self.drift_model = drift_model
        self.vision_cfg = vision_cfg
        self.intrinsics = intrinsics
        self.mount = mount
        self.rates = rates or SensorRates()
        self.mocap_sigma = mocap_sigma
        self.biases = ImuBiases(
            np.asarray(imu_cfg.initial_accel_bias, dtype=float),
            np.asarray(imu_cfg.initial_gyro_bias, dtype=float),
        )
        heading = self.heading_rng.standard_normal(3)
        self.drift = VioDrift(direction=heading / np.linalg.norm(heading))

    def imu(self, state: TrueState) -> ImuSample:
        dt = 1.0 / self.rates.imu
        sample = sample_imu(state, self.biases, self.imu_cfg, self.imu_rng, dt)
        self.biases = advance_biases(self.biases, self.imu_cfg, dt, self.bias_rng)
        return sample

    def vio(self, state: TrueState) -> VioSample:
        sample, self.drift = sample_vio(state, self.drift, self.drift_model, self.vio_rng)
        return sample

    def mocap(self, state: TrueState) -> VioSample:
        noise = self.mocap_sigma * self.mocap_rng.standard_normal(3)
        return VioSample(state.t, state.q.copy(), state.p + noise, state.v.copy())

    def camera_frame(self, state: TrueState, gate_map: GateMap) -> CameraFrameEvent:
        """Capture a frame now; detections become available after the detector latency.

        The synchronized VIO reading uses the current drift without advancing it, so
        frames never consume VIO noise.
        """
        vio = drifted_reading(state, self.drift, self.drift_model)
        cam = world_from_camera(state.q, state.p, self.mount)
        detections = detect_gates(
            cam, gate_map, self.intrinsics,
            self.vision_cfg.sigma_px, self.vision_cfg.dropout, self.vision_rng,
            max_range=self.vision_cfg.max_range, distorted=self.vision_cfg.distorted,
        )
        delay = latency_ticks(self.vision_cfg, self.rates.physics, self.latency_rng) / self.rates.physics
        return CameraFrameEvent(state.t, state.t + delay, vio, detections)
