"""Deterministic closed-loop simulation of the coupled dynamics.

Controllers run at the control period, the plant integrates at a finer
step with zero-order-held commands.  The steering increment is slewed at
its rate limit toward the commanded value and converted to roll torque
through the steering balance model; the arm is driven through an inner
computed-torque velocity loop, mirroring a velocity-interface actuator.
"""

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .bem import max_roll_capability
from .control import ArmGains, BalanceGains, arm_velocity_control, balance_control, \
    torque_to_steering
from .dynamics import _dcg, forward_acceleration, gravity_gradient, gravity_roll_torque
from .model import RobotModel, as_q, ee_pose_vector
from .planner import MotionLimits, PlanResult, pose_difference
from .steering import balance_torque_90, h_max
from .units import DEG, m_to_cm, rad_to_deg


class SimulationBlowUpError(RuntimeError):
    """Numerical blow-up guard tripped (runaway generalized velocity)."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    control_period: float = 1e-2
    duration: float | None = None          # defaults to the plan's own span
    integrator: str = "rk4"                # or "semi-implicit-euler"
    sensor_quantization: float | None = None  # roll measurement resolution, rad
    seed: int = 0
    velocity_loop_gain: float = 100.0      # inner arm velocity loop, 1/s
    compensation: str = "full"             # balance control compensation mode
    loss_roll_limit: float | None = None   # balance-loss envelope; estimated when None
    stop_on_loss: bool = False

    def __post_init__(self):
        if self.dt <= 0 or self.control_period < self.dt:
            raise ValueError("need 0 < dt <= control_period")
        ratio = self.control_period / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control_period must be an integer multiple of dt")
        if self.integrator not in ("rk4", "semi-implicit-euler"):
            raise ValueError("integrator must be 'rk4' or 'semi-implicit-euler'")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class Disturbance:
    t_start: float
    duration: float
    torque: float        # roll-axis torque, N m

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("disturbance duration must be positive")

    def torque_at(self, t: float) -> float:
        return self.torque if self.t_start <= t < self.t_start + self.duration else 0.0


@dataclass
class SimLog:
    """Uniform control-period samples of states, commands, errors and margins."""

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    q_ref: np.ndarray
    delta: np.ndarray
    delta_cmd: np.ndarray
    tau_b: np.ndarray
    tau_b_demand: np.ndarray
    e_b: np.ndarray
    e_theta: np.ndarray
    pose: np.ndarray
    pose_ref: np.ndarray
    vel_margin: np.ndarray        # h_max * rate_limit - |J_G qd|
    torque_margin: np.ndarray     # tau_cap - lambda4 |G_b|
    correction_norm: np.ndarray
    saturated: np.ndarray
    correction_active: np.ndarray
    balance_lost: np.ndarray
    events: list
    meta: dict = field(default_factory=dict)

    @property
    def pose_error(self) -> np.ndarray:
        return pose_difference(self.pose_ref, self.pose)

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        return (self.t >= t_lo - 1e-9) & (self.t <= t_hi + 1e-9)

    def error_stats(self, mask=None) -> dict:
        mask = np.ones_like(self.t, dtype=bool) if mask is None else mask
        err = self.pose_error[mask]
        pos_mm = np.linalg.norm(err[:, :3], axis=1) * 1000.0
        ori_deg = np.linalg.norm(err[:, 3:], axis=1) / DEG
        return {
            "position_error_mm": {"mean": float(pos_mm.mean()), "std": float(pos_mm.std()),
                                  "max": float(pos_mm.max())},
            "orientation_error_deg": {"mean": float(ori_deg.mean()), "std": float(ori_deg.std()),
                                      "max": float(ori_deg.max())},
        }

    def to_csv(self, path_or_buffer) -> None:
        """One row per control tick; angles in degrees, positions in cm."""
        close = False
        if isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__"):
            fh = open(path_or_buffer, "w", newline="")
            close = True
        else:
            fh = path_or_buffer
        try:
            for key, value in self.meta.items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh)
            n = self.q.shape[1] - 1
            header = (["t_s", "phi_b_deg"] + [f"theta{i}_deg" for i in range(1, n + 1)]
                      + ["phi_b_rate_degps"] + [f"theta{i}_rate_degps" for i in range(1, n + 1)]
                      + ["delta_deg", "delta_cmd_deg", "tau_b_Nm", "tau_b_demand_Nm", "e_b_deg"]
                      + [f"e_theta{i}_deg" for i in range(1, n + 1)]
                      + ["x_cm", "y_cm", "z_cm", "yaw_deg", "pitch_deg", "roll_deg"]
                      + ["vel_margin_Nmps", "torque_margin_Nm", "correction_norm",
                         "saturated", "correction_active", "balance_lost"])
            writer.writerow(header)
            for k in range(self.t.size):
                row = ([f"{self.t[k]:.6f}"]
                       + [f"{v:.17g}" for v in rad_to_deg(self.q[k])]
                       + [f"{v:.17g}" for v in rad_to_deg(self.qd[k])]
                       + [f"{rad_to_deg(self.delta[k]):.17g}",
                          f"{rad_to_deg(self.delta_cmd[k]):.17g}",
                          f"{self.tau_b[k]:.17g}", f"{self.tau_b_demand[k]:.17g}",
                          f"{rad_to_deg(self.e_b[k]):.17g}"]
                       + [f"{v:.17g}" for v in rad_to_deg(self.e_theta[k])]
                       + [f"{v:.17g}" for v in m_to_cm(self.pose[k][:3])]
                       + [f"{v:.17g}" for v in rad_to_deg(self.pose[k][3:])]
                       + [f"{self.vel_margin[k]:.17g}", f"{self.torque_margin[k]:.17g}",
                          f"{self.correction_norm[k]:.17g}",
                          int(self.saturated[k]), int(self.correction_active[k]),
                          int(self.balance_lost[k])])
                writer.writerow(row)
        finally:
            if close:
                fh.close()

    def csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue().encode()


def step(model: RobotModel, q, qd, tau, dt: float, integrator: str = "rk4"):
    """One integrator step of the forward dynamics.

    ``tau`` is either a constant generalized-force vector (zero-order hold
    over the step) or a callable ``tau(q, qd)`` evaluated at every
    integrator stage (for state-feedback forces such as exact gravity
    compensation).
    """
    q = as_q(q, model)
    qd = np.asarray(qd, dtype=float)
    tau_fn = tau if callable(tau) else None
    if tau_fn is None:
        tau = np.asarray(tau, dtype=float)

    if integrator == "rk4":
        def f(x, v):
            load = tau_fn(x, v) if tau_fn is not None else tau
            return v, forward_acceleration(model, x, v, load)

        k1q, k1v = f(q, qd)
        k2q, k2v = f(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v)
        k3q, k3v = f(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v)
        k4q, k4v = f(q + dt * k3q, qd + dt * k3v)
        q_next = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        qd_next = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    elif integrator == "semi-implicit-euler":
        load = tau_fn(q, qd) if tau_fn is not None else tau
        qd_next = qd + dt * forward_acceleration(model, q, qd, load)
        q_next = q + dt * qd_next
    else:
        raise ValueError("integrator must be 'rk4' or 'semi-implicit-euler'")
    if np.linalg.norm(qd_next) > 1e3:
        raise SimulationBlowUpError(f"|qd| = {np.linalg.norm(qd_next):.3e} after step")
    return q_next, qd_next


@dataclass(frozen=True)
class Scenario:
    """A reproducible closed-loop run: model, plan, gains, limits and config."""

    model: RobotModel
    plan: PlanResult
    balance_gains: BalanceGains = field(default_factory=BalanceGains)
    arm_gains: ArmGains = field(default_factory=ArmGains)
    limits: MotionLimits = field(default_factory=MotionLimits)
    config: SimConfig = field(default_factory=SimConfig)
    disturbances: tuple = ()
    velocity_correction: bool = True
    initial_state: tuple | None = None   # (q, qd); plan reference at rest when None

    def run(self) -> SimLog:
        return run_scenario(self.model, self.plan, self.balance_gains, self.arm_gains,
                            limits=self.limits, config=self.config,
                            disturbances=self.disturbances,
                            velocity_correction=self.velocity_correction,
                            initial_state=self.initial_state)


def inject(scenario: Scenario, d: Disturbance) -> Scenario:
    """Same run with an additional roll-torque disturbance."""
    return replace(scenario, disturbances=tuple(scenario.disturbances) + (d,))


def hold_plan(model: RobotModel, q_ref, hold: float) -> PlanResult:
    """Trivial plan dwelling at one configuration (for regulation scenarios)."""
    from .planner import MissionTiming

    q_ref = as_q(q_ref, model)
    return PlanResult(q_star=[q_ref], trajectories=[], segments=[], bpik_results=[],
                      global_resolves=[], timing=MissionTiming(hold=hold, t_start=0.0),
                      seed=0, w2_padded=False)


def run_scenario(model: RobotModel, plan: PlanResult,
                 balance_gains: BalanceGains | None = None,
                 arm_gains: ArmGains | None = None,
                 limits: MotionLimits | None = None,
                 config: SimConfig | None = None,
                 disturbances=(),
                 velocity_correction: bool = True,
                 initial_state=None) -> SimLog:
    """Execute the controllers against the plan and log every control tick."""
    balance_gains = BalanceGains() if balance_gains is None else balance_gains
    arm_gains = ArmGains() if arm_gains is None else arm_gains
    limits = MotionLimits() if limits is None else limits
    config = SimConfig() if config is None else config
    nq = model.n + 1

    t0 = plan.timing.t_start
    t_end = t0 + config.duration if config.duration is not None else plan.t_end
    n_ticks = int(round((t_end - t0) / config.control_period))
    ratio = int(round(config.control_period / config.dt))
    mass = model.total_mass

    if initial_state is None:
        q = np.array(plan.reference(t0)[0], dtype=float)
        qd = np.zeros(nq)
    else:
        q = as_q(initial_state[0], model).copy()
        qd = np.asarray(initial_state[1], dtype=float).copy()
    delta, _ = _equilibrium_delta(model, q, limits)

    loss_limit = config.loss_roll_limit
    if loss_limit is None:
        strategy = "two-wheel+arm" if model.n >= 3 else "two-wheel"
        est = max_roll_capability(model, strategy)
        loss_limit = 1.2 * est.phi_b_max

    tau_cap = limits.balance_torque_cap(model)
    vel_bound = h_max(mass, model.bike, limits.steering.delta_max) \
        * limits.steering.delta_rate_max
    lam4 = 1.5  # balance-priority weight for the logged margin

    cols = {name: np.zeros(n_ticks) for name in
            ("t", "delta", "delta_cmd", "tau_b", "tau_b_demand", "e_b",
             "vel_margin", "torque_margin", "correction_norm")}
    Q = np.zeros((n_ticks, nq))
    QD = np.zeros((n_ticks, nq))
    QREF = np.zeros((n_ticks, nq))
    ETH = np.zeros((n_ticks, model.n))
    POSE = np.zeros((n_ticks, 6))
    POSEREF = np.zeros((n_ticks, 6))
    flags = {name: np.zeros(n_ticks, dtype=bool) for name in
             ("saturated", "correction_active", "balance_lost")}
    events = []

    phi_meas_prev = None
    ticks_run = 0
    for k in range(n_ticks):
        t = t0 + k * config.control_period
        q_ref, qd_ref, qdd_ref = plan.reference(t)

        # sensing: optionally quantized roll with finite-difference rate
        if config.sensor_quantization:
            res = config.sensor_quantization
            phi_meas = np.round(q[0] / res) * res
            rate_meas = 0.0 if phi_meas_prev is None \
                else (phi_meas - phi_meas_prev) / config.control_period
            phi_meas_prev = phi_meas
        else:
            phi_meas = q[0]
            rate_meas = qd[0]
        q_meas = q.copy()
        q_meas[0] = phi_meas
        qd_meas = qd.copy()
        qd_meas[0] = rate_meas

        tau_demand = balance_control(model, q_meas, qd_meas, q_ref, qd_ref, qdd_ref,
                                     balance_gains, compensation=config.compensation)
        delta_cmd, tau_real, saturated = torque_to_steering(tau_demand, model, limits.steering)
        gains_eff = arm_gains if velocity_correction else replace(arm_gains, kappa=0.0)
        theta_cmd, corr_active = arm_velocity_control(
            model, q_meas, q_ref, qd_ref, gains_eff, e_b=phi_meas - q_ref[0])
        no_corr = np.asarray(qd_ref[1:]) - gains_eff.gains_vector(model.n) * (q_meas[1:] - q_ref[1:])
        corr_norm = float(np.linalg.norm(theta_cmd - no_corr))
        theta_cmd = np.clip(theta_cmd, -limits.q_rate_max, limits.q_rate_max)

        gb = float(gravity_roll_torque(model, q))
        JG = gravity_gradient(model, q)
        pose = ee_pose_vector(model, q)
        pose_ref = ee_pose_vector(model, q_ref)
        lost = abs(q[0]) > loss_limit
        if lost and not flags["balance_lost"][:k].any():
            events.append({"t": t, "event": "balance_lost",
                           "roll_deg": float(rad_to_deg(q[0]))})
        if saturated and not flags["saturated"][:k].any():
            events.append({"t": t, "event": "steering_saturated"})

        cols["t"][k] = t
        Q[k] = q
        QD[k] = qd
        QREF[k] = q_ref
        cols["delta"][k] = delta
        cols["delta_cmd"][k] = delta_cmd
        cols["tau_b"][k] = float(balance_torque_90(delta, mass, model.bike))
        cols["tau_b_demand"][k] = tau_demand
        cols["e_b"][k] = q[0] - q_ref[0]
        ETH[k] = q[1:] - q_ref[1:]
        POSE[k] = pose
        POSEREF[k] = pose_ref
        cols["vel_margin"][k] = vel_bound - abs(float(JG @ qd))
        cols["torque_margin"][k] = tau_cap - lam4 * abs(gb)
        cols["correction_norm"][k] = corr_norm
        flags["saturated"][k] = saturated
        flags["correction_active"][k] = corr_active
        flags["balance_lost"][k] = lost
        ticks_run = k + 1

        if lost and (config.stop_on_loss or abs(q[0]) > np.pi / 3):
            break

        # plant integration with zero-order-held commands
        for i in range(ratio):
            tt = t + i * config.dt
            d_step = np.clip(delta_cmd - delta,
                             -limits.steering.delta_rate_max * config.dt,
                             limits.steering.delta_rate_max * config.dt)
            delta = delta + d_step
            tau_b = float(balance_torque_90(delta, mass, model.bike))
            tau_b += sum(d.torque_at(tt) for d in disturbances)
            D, C, G = _dcg(model, q, qd)
            tau_theta = (D[1:, 1:] @ (config.velocity_loop_gain * (theta_cmd - qd[1:]))
                         + C[1:] @ qd + G[1:])
            tau = np.concatenate([[tau_b], tau_theta])
            try:
                q, qd = step(model, q, qd, tau, config.dt, config.integrator)
            except SimulationBlowUpError as err:
                raise SimulationBlowUpError(f"t={tt:.3f}s: {err}") from err

    sl = slice(0, ticks_run)
    return SimLog(
        t=cols["t"][sl], q=Q[sl], qd=QD[sl], q_ref=QREF[sl],
        delta=cols["delta"][sl], delta_cmd=cols["delta_cmd"][sl],
        tau_b=cols["tau_b"][sl], tau_b_demand=cols["tau_b_demand"][sl],
        e_b=cols["e_b"][sl], e_theta=ETH[sl], pose=POSE[sl], pose_ref=POSEREF[sl],
        vel_margin=cols["vel_margin"][sl], torque_margin=cols["torque_margin"][sl],
        correction_norm=cols["correction_norm"][sl],
        saturated=flags["saturated"][sl], correction_active=flags["correction_active"][sl],
        balance_lost=flags["balance_lost"][sl],
        events=events,
        meta={"seed": config.seed, "integrator": config.integrator, "dt_s": config.dt,
              "control_period_s": config.control_period,
              "sensor_quantization_deg":
                  None if config.sensor_quantization is None
                  else float(rad_to_deg(config.sensor_quantization)),
              "loss_roll_limit_deg": float(rad_to_deg(loss_limit)),
              "euler_convention": "ZYX"},
    )


def _equilibrium_delta(model: RobotModel, q, limits: MotionLimits):
    from .steering import invert_balance_torque_90

    gb = float(gravity_roll_torque(model, q))
    return invert_balance_torque_90(gb, model.total_mass, model.bike,
                                    limits.steering.delta_max)


def run_batch(scenario: Scenario, n_trials: int, base_seed: int = 0,
              jitter_disturbances: bool = True) -> list:
    """Independent trials with per-trial seeds (and jittered disturbance timing)."""
    logs = []
    for k in range(n_trials):
        seed = base_seed + k
        rng = np.random.default_rng(seed)
        cfg = replace(scenario.config, seed=seed)
        dists = []
        for d in scenario.disturbances:
            if jitter_disturbances:
                dists.append(Disturbance(
                    t_start=d.t_start + float(rng.uniform(0.0, 0.5)),
                    duration=d.duration,
                    torque=d.torque * float(1.0 + 0.15 * rng.uniform(-1.0, 1.0))))
            else:
                dists.append(d)
        logs.append(replace(scenario, config=cfg, disturbances=tuple(dists)).run())
    return logs


def batch_stats(logs: list, mask_fn=None) -> dict:
    """Mean and standard deviation of pose errors across trials."""
    pos, ori = [], []
    for log in logs:
        mask = None if mask_fn is None else mask_fn(log)
        stats = log.error_stats(mask)
        pos.append(stats["position_error_mm"]["mean"])
        ori.append(stats["orientation_error_deg"]["mean"])
    pos = np.asarray(pos)
    ori = np.asarray(ori)
    return {
        "trials": len(logs),
        "position_error_mm": {"mean": float(pos.mean()), "std": float(pos.std())},
        "orientation_error_deg": {"mean": float(ori.mean()), "std": float(ori.std())},
    }
