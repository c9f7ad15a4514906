import math

import numpy as np
import pytest
from scipy.stats import chi2

from app.exceptions import SingularInnovation
from app.models.sensors import VioSample
from app.models.state import DriftState
from app.schemas.filters import DriftFilterConfig
from app.services.drift_kf import (
    DriftKalmanFilter, DriftObservation, correct_vio, mahalanobis, process_noise, propagate, stack, update,
)


def test_process_noise_at_camera_rate():
    s = propagate(DriftState(), 1.0 / 30.0, 8.0)
    assert np.allclose(np.diag(s.P), 2.4691e-6, rtol=1e-4)
    assert s.t == pytest.approx(1.0 / 30.0)


def test_zero_dt_leaves_state_unchanged():
    start = DriftState(np.array([0.1, 0.2, 0.3]), np.eye(3) * 0.01, 2.0)
    s = propagate(start, 0.0)
    assert np.array_equal(s.x, start.x)
    assert np.array_equal(s.P, start.P)


def test_negative_dt_rejected():
    with pytest.raises(ValueError):
        propagate(DriftState(), -0.01)


def test_process_noise_accumulates_per_step():
    s = propagate(propagate(DriftState(), 0.1), 0.2)
    assert np.allclose(s.P, process_noise(0.1, 8.0) + process_noise(0.2, 8.0))
    assert not np.allclose(s.P, process_noise(0.3, 8.0))


def test_uninformative_measurement_keeps_prior():
    prior = DriftState(np.array([0.2, -0.1, 0.05]), np.eye(3) * 0.01)
    post = update(prior, np.array([1.0, 1.0, 1.0]), np.eye(3), np.eye(3) * 1e6)
    assert np.allclose(post.x, prior.x, atol=1e-4)
    assert np.allclose(post.P, prior.P, atol=1e-4)


def test_perfect_measurement_is_adopted():
    z = np.array([0.3, -0.4, 0.1])
    post = update(DriftState(np.zeros(3), np.eye(3)), z, np.eye(3), np.zeros((3, 3)))
    assert np.allclose(post.x, z, atol=1e-12)


def test_zero_prior_and_zero_noise_is_singular():
    with pytest.raises(SingularInnovation):
        update(DriftState(), np.ones(3), np.eye(3), np.zeros((3, 3)))


def test_stacked_measurements_match_information_sum():
    prior = DriftState(np.array([0.05, 0.0, -0.02]), np.eye(3) * 0.3)
    z = np.array([0.4, -0.2, 0.1])
    r = 0.02
    obs = DriftObservation(z, np.eye(3) * r)
    zs, H, R = stack([obs, obs])
    assert zs.shape == (6,) and H.shape == (6, 3) and R.shape == (6, 6)
    joint = update(prior, zs, H, R)
    single = update(prior, z, np.eye(3), np.eye(3) * r / 2.0)
    assert np.allclose(joint.x, single.x, atol=1e-10)
    assert np.allclose(joint.P, single.P, atol=1e-10)


def test_posterior_never_exceeds_prior(rng):
    for _ in range(1000):
        A = rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 3))
        prior = DriftState(rng.standard_normal(3), A @ A.T + 1e-3 * np.eye(3))
        post = update(prior, rng.standard_normal(3), np.eye(3), B @ B.T + 1e-3 * np.eye(3))
        assert np.linalg.eigvalsh(prior.P - post.P).min() > -1e-10
        assert np.allclose(post.P, post.P.T)


@pytest.mark.parametrize("seed", range(100))
def test_constant_drift_converges_within_five_frames(seed):
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(3)
    drift = 0.5 * direction / np.linalg.norm(direction)
    truth = np.array([1.0, 2.0, 1.5])
    vio = VioSample(0.0, np.array([1.0, 0.0, 0.0, 0.0]), truth + drift, np.zeros(3))

    kf = DriftKalmanFilter()
    kf.state = DriftState(P=np.eye(3))
    for frame in range(1, 6):
        kf.process_frame(frame / 30.0, [DriftObservation(drift.copy(), np.eye(3) * 1e-4)])
    assert np.linalg.norm(kf.correct(vio).p - truth) < 0.01


def test_gating_rejects_then_reacquires():
    kf = DriftKalmanFilter(DriftFilterConfig(max_consecutive_rejections=5))
    obs = [DriftObservation(np.array([0.5, 0.0, 0.0]), np.eye(3) * 1e-4)]
    for frame in range(1, 6):
        kf.process_frame(frame / 30.0, obs)
        assert np.array_equal(kf.estimate, np.zeros(3))
    assert kf.rejected == 5 and kf.consecutive_rejections == 5

    kf.process_frame(6 / 30.0, obs)
    assert np.allclose(kf.estimate, [0.5, 0.0, 0.0])
    assert np.allclose(kf.state.P, np.eye(3) * 1e-4)
    assert kf.consecutive_rejections == 0
    assert kf.accepted == 1


def test_reacquisition_weights_observations_by_information():
    kf = DriftKalmanFilter(DriftFilterConfig(max_consecutive_rejections=1))
    obs = [
        DriftObservation(np.array([1.0, 0.0, 0.0]), np.eye(3) * 1e-4, "G1"),
        DriftObservation(np.array([2.0, 0.0, 0.0]), np.eye(3) * 3e-4, "G2"),
    ]
    kf.process_frame(1 / 30.0, obs)
    kf.process_frame(2 / 30.0, obs)
    assert kf.estimate == pytest.approx([1.25, 0.0, 0.0])
    assert np.allclose(kf.state.P, np.eye(3) * 0.75e-4)
    assert kf.state.t == pytest.approx(2 / 30.0)


def test_gating_disabled_updates_immediately():
    kf = DriftKalmanFilter(DriftFilterConfig(gating=False))
    kf.process_frame(1.0 / 30.0, [DriftObservation(np.array([0.5, 0.0, 0.0]), np.eye(3) * 1e-4)])
    assert kf.estimate[0] > 0.0
    assert kf.rejected == 0


def test_outlier_among_inliers_is_dropped():
    kf = DriftKalmanFilter()
    kf.state = DriftState(np.zeros(3), np.eye(3) * 0.01)
    good = DriftObservation(np.array([0.05, 0.0, 0.0]), np.eye(3) * 1e-3)
    bad = DriftObservation(np.array([3.0, 0.0, 0.0]), np.eye(3) * 1e-3, "G9")
    assert mahalanobis(kf.state, bad) > kf.threshold
    kf.process_frame(1.0 / 30.0, [good, bad])
    assert kf.accepted == 1 and kf.rejected == 1
    assert kf.estimate[0] < 0.06


def test_empty_frame_only_propagates():
    kf = DriftKalmanFilter()
    s = kf.process_frame(1.0 / 30.0, [])
    assert np.array_equal(s.x, np.zeros(3))
    assert np.diag(s.P)[0] > 0.0


def test_yaw_consistency_wraps():
    kf = DriftKalmanFilter()
    assert kf.yaw_consistent(math.pi - 0.1, -math.pi + 0.1)
    assert not kf.yaw_consistent(0.0, math.radians(30.0))


def test_correct_vio_subtracts_drift():
    vio = VioSample(1.0, np.array([1.0, 0.0, 0.0, 0.0]), np.array([1.0, 1.0, 1.0]), np.array([2.0, 0.0, 0.0]))
    assert np.array_equal(correct_vio(vio, DriftState()).p, vio.p)
    corrected = correct_vio(vio, DriftState(np.array([0.1, -0.2, 0.0]), np.eye(3)))
    assert np.allclose(corrected.p, [0.9, 1.2, 1.0])
    assert np.array_equal(corrected.v, vio.v)
    assert np.array_equal(corrected.q, vio.q)


def monte_carlo_drift(seed, frames=20, sigma_a2=8.0):
    """Truth walks with the filter's own process noise; returns the estimation error and covariance."""
    rng = np.random.default_rng(seed)
    kf = DriftKalmanFilter(DriftFilterConfig(gating=False, sigma_a2=sigma_a2))
    P0 = np.diag([0.25, 0.25, 0.04])
    kf.state = DriftState(np.zeros(3), P0.copy(), 0.0)
    truth = np.sqrt(np.diag(P0)) * rng.standard_normal(3)
    R1 = np.diag([0.05, 0.03, 0.04]) ** 2
    R2 = np.diag([0.08, 0.08, 0.02]) ** 2
    dt = 1.0 / 30.0
    q = np.sqrt(np.diag(process_noise(dt, sigma_a2)))
    for frame in range(1, frames + 1):
        truth = truth + q * rng.standard_normal(3)
        kf.process_frame(frame * dt, [
            DriftObservation(truth + np.sqrt(np.diag(R1)) * rng.standard_normal(3), R1, "G1"),
            DriftObservation(truth + np.sqrt(np.diag(R2)) * rng.standard_normal(3), R2, "G2"),
        ])
    return kf.estimate - truth, kf.state.P


def test_drift_estimate_is_consistent_and_unbiased():
    runs = [monte_carlo_drift(seed) for seed in range(500)]
    errors = np.array([e for e, _ in runs])
    nees = np.array([e @ np.linalg.solve(P, e) for e, P in runs])

    lo, hi = chi2.ppf([0.005, 0.995], df=3 * len(runs)) / len(runs)
    assert lo <= nees.mean() <= hi
    per_run_lo, per_run_hi = chi2.ppf([0.025, 0.975], df=3)
    assert np.mean((nees >= per_run_lo) & (nees <= per_run_hi)) >= 0.92

    mean_P = np.mean([np.diag(P) for _, P in runs], axis=0)
    assert np.all(np.abs(errors.mean(axis=0)) < 3.0 * np.sqrt(mean_P / len(runs)))
