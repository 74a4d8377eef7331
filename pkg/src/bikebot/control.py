"""Closed-loop controllers: steering balance control and arm velocity control.

The roll loop feedback-linearizes the platform equation about the
reference trajectory, yielding error dynamics ``e'' + k_d e' + k_p e = 0``
when the demanded torque is realizable; the demand is converted to a
steering increment by inverting the monotone steering-torque map.  The
arm tracks joint velocities with proportional feedback plus a gradient
correction that pulls the configuration back toward the balance manifold
whenever the roll error exceeds a threshold.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import coriolis_matrix, gravity_gradient, gravity_roll_torque, mass_matrix
from .model import RobotModel, as_q, system_jacobian
from .steering import SteeringLimits, invert_balance_torque_90
from .units import DEG


@dataclass(frozen=True)
class BalanceGains:
    k_p: float = 8.5
    k_d: float = 2.0

    def __post_init__(self):
        if self.k_p <= 0 or self.k_d <= 0:
            raise ValueError("gains must be positive")
        if self.k_d**2 >= 4 * self.k_p:
            warnings.warn("k_d^2 >= 4 k_p: roll error dynamics are not underdamped",
                          stacklevel=2)


@dataclass(frozen=True)
class ArmGains:
    K_p: np.ndarray | float = 1.0
    kappa: float = 5.0
    epsilon_b: float = 0.4 * DEG  # roll-error threshold activating the correction

    def gains_vector(self, n: int) -> np.ndarray:
        Kp = np.asarray(self.K_p, dtype=float)
        Kp = np.full(n, float(Kp)) if Kp.ndim == 0 else Kp
        if Kp.shape != (n,) or np.any(Kp <= 0):
            raise ValueError("K_p must be n positive entries")
        return Kp


@dataclass(frozen=True)
class ControlCommand:
    delta_cmd: float
    theta_rate_cmd: np.ndarray
    tau_b_cmd: float              # torque the steering demand realizes (after saturation)
    tau_b_demand: float
    saturated: bool
    correction_active: bool


def balance_control(model: RobotModel, q, qd, q_ref, qd_ref, qdd_ref,
                    gains: BalanceGains, compensation: str = "full",
                    theta_ddot=None) -> float:
    """Roll-torque demand tracking the reference roll trajectory.

    ``compensation='full'`` includes the arm-coupling inertia term and
    the Coriolis row; ``'gravity-only'`` keeps just gravity plus the
    linearizing feedback.  ``theta_ddot`` overrides the arm acceleration
    used in the coupling term (reference value by default).
    """
    q = as_q(q, model)
    qd = np.asarray(qd, dtype=float)
    e_b = float(q[0] - q_ref[0])
    ed_b = float(qd[0] - qd_ref[0])
    v = float(qdd_ref[0]) - gains.k_p * e_b - gains.k_d * ed_b
    D = mass_matrix(model, q)
    G_b = float(gravity_roll_torque(model, q))
    tau = D[0, 0] * v + G_b
    if compensation == "full":
        th_dd = np.asarray(qdd_ref[1:] if theta_ddot is None else theta_ddot, dtype=float)
        C = coriolis_matrix(model, q, qd)
        tau += float(D[0, 1:] @ th_dd) + float(C[0] @ qd)
    elif compensation != "gravity-only":
        raise ValueError("compensation must be 'full' or 'gravity-only'")
    return tau


def torque_to_steering(tau_b_demand: float, model: RobotModel,
                       limits: SteeringLimits) -> tuple[float, float, bool]:
    """Invert the steering torque map: (delta_cmd, realizable torque, saturated)."""
    delta, saturated = invert_balance_torque_90(
        float(tau_b_demand), model.total_mass, model.bike, limits.delta_max)
    from .steering import balance_torque_90

    tau_real = float(balance_torque_90(delta, model.total_mass, model.bike))
    return delta, tau_real, saturated


def arm_velocity_control(model: RobotModel, q, q_ref, qd_ref,
                         gains: ArmGains, e_b: float | None = None) -> tuple[np.ndarray, bool]:
    """Joint velocity command with the manifold-deviation correction.

    The correction descends the squared torque deviation
    ``(G_b(q*) - G_b(q))^2`` through the joint gradient of G_b and is
    active only while |roll error| exceeds the threshold.
    """
    q = as_q(q, model)
    q_ref = as_q(q_ref, model)
    Kp = gains.gains_vector(model.n)
    e_theta = q[1:] - q_ref[1:]
    e_b = float(q[0] - q_ref[0]) if e_b is None else float(e_b)
    cmd = np.asarray(qd_ref[1:], dtype=float) - Kp * e_theta
    active = abs(e_b) > gains.epsilon_b
    if active and gains.kappa != 0.0:
        dG = float(gravity_roll_torque(model, q_ref) - gravity_roll_torque(model, q))
        grad_theta = gravity_gradient(model, q)[1:]
        cmd = cmd + 2.0 * gains.kappa * dG * grad_theta
    return cmd, active


@dataclass(frozen=True)
class TrackingReport:
    t: np.ndarray
    e_b: np.ndarray
    e_theta_norm: np.ndarray
    e_pose_norm: np.ndarray
    decay_rate: float             # fitted exponential rate of the |e_b| envelope
    pose_to_config_ratio: float   # max ||e_xi|| / ||e_q|| over the log
    jacobian_bound: float         # sup ||J_e(q*)||_2
    curvature_bound: float        # fitted second-order coefficient M_delta
    correction_bound: float       # sup ||correction|| / min K_p


def _fit_decay_rate(t: np.ndarray, e: np.ndarray, floor: float = 1e-8) -> float:
    """Slope of log|envelope|: local maxima of |e| (plus the first sample)."""
    mag = np.abs(e)
    keep = mag > floor
    if keep.sum() < 3:
        return np.inf
    mag = mag[keep]
    tt = t[keep]
    peaks = [0]
    for i in range(1, len(mag) - 1):
        if mag[i] >= mag[i - 1] and mag[i] >= mag[i + 1]:
            peaks.append(i)
    if len(peaks) < 3:
        peaks = list(range(len(mag)))
    tt = tt[peaks]
    mm = np.log(mag[peaks])
    A = np.vstack([tt, np.ones_like(tt)]).T
    slope, _ = np.linalg.lstsq(A, mm, rcond=None)[0]
    return float(-slope)


def tracking_error_report(model: RobotModel, t, q, q_ref, e_pose,
                          correction_norms=None, min_kp: float = 1.0) -> TrackingReport:
    """Error profiles and empirical convergence measures from a completed run."""
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise ValueError("empty log")
    q = np.asarray(q, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    e_q = q - q_ref
    e_b = e_q[:, 0]
    e_theta_norm = np.linalg.norm(e_q[:, 1:], axis=1)
    e_pose = np.asarray(e_pose, dtype=float)
    e_pose_norm = np.linalg.norm(e_pose, axis=1)

    eq_norm = np.linalg.norm(e_q, axis=1)
    mask = eq_norm > 1e-9
    ratio = float(np.max(e_pose_norm[mask] / eq_norm[mask])) if mask.any() else 0.0

    J = system_jacobian(model, q_ref)
    jac_bound = float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1))))

    # residual beyond the first-order pose error, fitted as M_delta ||e_q||^2
    lin = np.einsum("sij,sj->si", J, e_q)
    resid = np.linalg.norm(e_pose - lin, axis=1)
    mask2 = eq_norm > 1e-6
    curvature = float(np.max(resid[mask2] / eq_norm[mask2] ** 2)) if mask2.any() else 0.0

    corr = 0.0
    if correction_norms is not None and len(correction_norms):
        corr = float(np.max(correction_norms) / min_kp)

    return TrackingReport(
        t=t, e_b=e_b, e_theta_norm=e_theta_norm, e_pose_norm=e_pose_norm,
        decay_rate=_fit_decay_rate(t, e_b),
        pose_to_config_ratio=ratio,
        jacobian_bound=jac_bound,
        curvature_bound=curvature,
        correction_bound=corr,
    )
