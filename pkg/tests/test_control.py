import numpy as np
import pytest

from bikebot.bem import bem_point
from bikebot.control import (ArmGains, BalanceGains, arm_velocity_control, balance_control,
                             torque_to_steering, tracking_error_report, _fit_decay_rate)
from bikebot.dynamics import gravity_roll_torque
from bikebot.model import ee_pose_vector
from bikebot.planner import MotionLimits
from bikebot.steering import SteeringLimits, balance_torque_90
from bikebot.units import DEG


def test_gravity_compensation_fixed_point(model):
    theta = np.array([10, -25, 35, 5, -10, 0.]) * DEG
    pt = bem_point(model, theta, 0.02)
    q = pt.q_e.q
    zeros = np.zeros(model.n + 1)
    tau = balance_control(model, q, zeros, q, zeros, zeros, BalanceGains())
    assert np.isclose(tau, gravity_roll_torque(model, q), atol=1e-12)


def test_proportional_term_scales_exactly(model):
    q_ref = np.zeros(model.n + 1)
    q = q_ref.copy()
    q[0] = 2 * DEG
    zeros = np.zeros(model.n + 1)
    from bikebot.dynamics import mass_matrix

    D_bb = mass_matrix(model, q)[0, 0]
    t1 = balance_control(model, q, zeros, q_ref, zeros, zeros, BalanceGains(k_p=4.0, k_d=1.0))
    t2 = balance_control(model, q, zeros, q_ref, zeros, zeros, BalanceGains(k_p=8.0, k_d=1.0))
    assert np.isclose(t2 - t1, -D_bb * 4.0 * (2 * DEG), atol=1e-10)


def test_compensation_modes(model, rng):
    q = rng.uniform(-0.1, 0.1, model.n + 1)
    qd = rng.uniform(-0.2, 0.2, model.n + 1)
    ref = (np.zeros(model.n + 1), np.zeros(model.n + 1), np.zeros(model.n + 1))
    full = balance_control(model, q, qd, *ref, BalanceGains(), compensation="full")
    grav = balance_control(model, q, qd, *ref, BalanceGains(), compensation="gravity-only")
    assert not np.isclose(full, grav)
    with pytest.raises(ValueError):
        balance_control(model, q, qd, *ref, BalanceGains(), compensation="bogus")


def test_torque_to_steering_round_trip(model):
    limits = SteeringLimits()
    delta, tau, sat = torque_to_steering(0.0, model, limits)
    assert delta == 0.0 and not sat
    demand = float(balance_torque_90(10 * DEG, model.total_mass, model.bike))
    delta, tau, sat = torque_to_steering(demand, model, limits)
    assert abs(delta - 10 * DEG) <= 1e-8
    assert not sat
    delta, tau, sat = torque_to_steering(-100.0, model, limits)
    assert sat and np.isclose(delta, limits.delta_max)
    assert abs(tau) <= abs(-100.0)


def test_arm_velocity_control_passthrough(model):
    theta = np.array([10, -25, 35, 5, -10, 0.]) * DEG
    pt = bem_point(model, theta, 0.0)
    q = pt.q_e.q
    qd_ref = np.concatenate([[0.0], 0.1 * np.ones(model.n)])
    cmd, active = arm_velocity_control(model, q, q, qd_ref, ArmGains())
    assert not active
    assert np.allclose(cmd, qd_ref[1:], atol=1e-15)


def test_arm_velocity_correction_descends_manifold_deviation(model, rng):
    theta = np.array([10, -25, 35, 5, -10, 0.]) * DEG
    q_ref = bem_point(model, theta, 0.0).q_e.q
    q = q_ref + rng.uniform(-0.05, 0.05, model.n + 1)
    q[0] = q_ref[0] + 1.0 * DEG  # roll error above the threshold
    gains = ArmGains(K_p=1.0, kappa=2.0, epsilon_b=0.4 * DEG)
    cmd, active = arm_velocity_control(model, q, q_ref, np.zeros(model.n + 1), gains)
    assert active
    correction = cmd + gains.gains_vector(model.n) * (q[1:] - q_ref[1:])
    # moving the joints along the correction must reduce (G_b(q*) - G_b(q))^2
    def deviation(theta_vec):
        qq = np.concatenate([[q[0]], theta_vec])
        return (gravity_roll_torque(model, q_ref) - gravity_roll_torque(model, qq)) ** 2

    h = 1e-7
    d0 = deviation(q[1:])
    d1 = deviation(q[1:] + h * correction)
    assert d1 < d0
    # and it matches the analytic gradient direction
    grad_fd = np.zeros(model.n)
    for j in range(model.n):
        tp, tm = q[1:].copy(), q[1:].copy()
        tp[j] += h
        tm[j] -= h
        grad_fd[j] = (deviation(tp) - deviation(tm)) / (2 * h)
    kappa_dir = -gains.kappa * grad_fd
    cosang = kappa_dir @ correction / (np.linalg.norm(kappa_dir) * np.linalg.norm(correction))
    assert cosang > 0.999


def test_arm_velocity_correction_threshold_is_sharp(model):
    theta = np.array([10, -25, 35, 5, -10, 0.]) * DEG
    q_ref = bem_point(model, theta, 0.0).q_e.q
    gains = ArmGains(epsilon_b=0.4 * DEG)
    q = q_ref.copy()
    q[0] += 0.4 * DEG - 1e-9
    _, active = arm_velocity_control(model, q, q_ref, np.zeros(model.n + 1), gains)
    assert not active
    q[0] = q_ref[0] + 0.4 * DEG + 1e-9
    _, active = arm_velocity_control(model, q, q_ref, np.zeros(model.n + 1), gains)
    assert active


def test_kappa_zero_reduces_to_proportional(model):
    theta = np.array([10, -25, 35, 5, -10, 0.]) * DEG
    q_ref = bem_point(model, theta, 0.0).q_e.q
    q = q_ref.copy()
    q[0] += 1.0 * DEG
    q[2] += 0.05
    gains = ArmGains(K_p=2.0, kappa=0.0)
    cmd, active = arm_velocity_control(model, q, q_ref, np.zeros(model.n + 1), gains)
    assert active  # threshold crossed, but no correction applied
    assert np.allclose(cmd, -2.0 * (q[1:] - q_ref[1:]), atol=1e-15)


def test_underdamped_warning():
    with pytest.warns(UserWarning):
        BalanceGains(k_p=1.0, k_d=4.0)


def test_fit_decay_rate_on_synthetic_signal():
    t = np.linspace(0.0, 8.0, 400)
    e = 3.0 * np.exp(-0.7 * t) * np.cos(4.0 * t)
    rate = _fit_decay_rate(t, e)
    assert abs(rate - 0.7) < 0.05


def test_tracking_report_perfect_log(model):
    t = np.linspace(0, 1, 11)
    q = np.tile(np.zeros(model.n + 1), (11, 1))
    report = tracking_error_report(model, t, q, q, np.zeros((11, 6)))
    assert np.all(report.e_b == 0.0)
    assert np.all(report.e_theta_norm == 0.0)
    assert np.all(report.e_pose_norm == 0.0)
    with pytest.raises(ValueError):
        tracking_error_report(model, np.array([]), q, q, np.zeros((0, 6)))


def test_tracking_report_pose_ratio_bounded_by_jacobian(model, rng):
    theta = np.array([10, -25, 35, 5, -10, 0.]) * DEG
    q_ref = bem_point(model, theta, 0.0).q_e.q
    N = 40
    qs = np.tile(q_ref, (N, 1))
    refs = np.tile(q_ref, (N, 1))
    qs += rng.uniform(-1e-3, 1e-3, qs.shape)
    e_pose = np.stack([ee_pose_vector(model, q) - ee_pose_vector(model, r)
                       for q, r in zip(qs, refs)])
    report = tracking_error_report(model, np.linspace(0, 1, N), qs, refs, e_pose)
    assert report.pose_to_config_ratio <= report.jacobian_bound + report.curvature_bound + 1e-9
