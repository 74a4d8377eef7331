"""Balance-prioritized inverse kinematics and Bezier trajectory optimization.

The pose-regulation pipeline: each target pose is converted to a balanced
configuration by an inverse-kinematics optimization whose balance margin
is a hard constraint (pose matching only enters the objective), then
consecutive configurations are joined by degree-N Bezier segments whose
boundary states are pinned exactly and whose path constraints are
enforced at uniform progress samples.  Solves run through SLSQP with
seeded multi-starts; balance-manifold membership is recovered exactly by
inverting the monotone steering-torque map for the equilibrium increment.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .bezier import BezierTrajectory, bernstein_matrix, pinned_boundary_columns
from .dynamics import gravity_gradient, gravity_roll_torque, inverse_dynamics
from .model import Pose, RobotModel, as_q, ee_pose_vector
from .steering import SteeringLimits, balance_torque_90, h_max, invert_balance_torque_90, \
    max_torque_magnitude
from .units import DEG, wrap_angle

PUBLISHED_W1 = np.array([10.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0])
PUBLISHED_W2 = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])  # six printed entries, padded at use
PUBLISHED_TAU_THETA_MAX = np.array([10.0, 15.0, 10.0, 5.0, 5.0, 5.0])


class SolverFailureError(RuntimeError):
    """No feasible iterate found from any restart."""


class InfeasibleSegmentError(RuntimeError):
    """Segment duration too short for the joint-rate bound."""


@dataclass(frozen=True)
class PlannerWeights:
    lambda1: float = 10.0
    lambda2: float = 1.0
    lambda3: float = 5.0
    lambda4: float = 1.5
    P: np.ndarray | None = None    # (n+1, n+1) SPD; identity when None
    W1: np.ndarray | None = None   # positive diagonal, published values when None
    W2: np.ndarray | None = None
    epsilon_pose: float = 0.1      # mixed m/rad pose 6-vector norm

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) <= 0.0:
            raise ValueError("lambda1..3 must be positive")
        if self.lambda4 <= 1.0:
            raise ValueError("lambda4 must exceed 1")

    def resolve(self, nq: int):
        """Concrete P/W1/W2 for an (n+1)-dimensional configuration space."""
        P = np.eye(nq) if self.P is None else np.asarray(self.P, dtype=float)
        if P.shape != (nq, nq) or not np.allclose(P, P.T) or np.any(np.linalg.eigvalsh(P) <= 0):
            raise ValueError("P must be symmetric positive definite of size n+1")
        w2_padded = False
        if self.W1 is None:
            W1 = PUBLISHED_W1 if nq == PUBLISHED_W1.size else np.ones(nq)
        else:
            W1 = np.asarray(self.W1, dtype=float)
        if self.W2 is None:
            if nq == PUBLISHED_W2.size + 1:
                W2 = np.concatenate([PUBLISHED_W2, [1.0]])  # printed with one entry short
                w2_padded = True
            else:
                W2 = np.ones(nq)
        else:
            W2 = np.asarray(self.W2, dtype=float)
            if W2.size == nq - 1:
                W2 = np.concatenate([W2, [1.0]])
                w2_padded = True
        if W1.shape != (nq,) or W2.shape != (nq,) or np.any(W1 <= 0) or np.any(W2 <= 0):
            raise ValueError("W1/W2 must be positive diagonals of size n+1")
        return P, W1, W2, w2_padded


@dataclass(frozen=True)
class MotionLimits:
    q_rate_max: float = 36.0 * DEG      # rad/s
    q_acc_max: float = 120.0 * DEG      # rad/s^2
    tau_theta_max: np.ndarray | None = None  # N m per joint, published values when None
    steering: SteeringLimits = field(default_factory=SteeringLimits)
    tau_b_max: float | None = None      # peak steering torque; from the increment limit when None

    def __post_init__(self):
        if self.q_rate_max <= 0 or self.q_acc_max <= 0:
            raise ValueError("rate and acceleration limits must be positive")

    def joint_torque_limits(self, n: int) -> np.ndarray:
        if self.tau_theta_max is None:
            return PUBLISHED_TAU_THETA_MAX if n == PUBLISHED_TAU_THETA_MAX.size else np.full(n, 10.0)
        lim = np.asarray(self.tau_theta_max, dtype=float)
        if lim.shape != (n,) or np.any(lim <= 0):
            raise ValueError("tau_theta_max must be n positive entries")
        return lim

    def balance_torque_cap(self, model: RobotModel) -> float:
        if self.tau_b_max is not None:
            return float(self.tau_b_max)
        cap, _ = max_torque_magnitude(model.total_mass, model.bike, self.steering.delta_max)
        return cap


@dataclass(frozen=True)
class SolverOptions:
    restarts: int = 8
    sigma: float = 5.0 * DEG     # multi-start perturbation scale
    seed: int = 0
    maxiter: int = 200
    ftol: float = 1e-6
    ctol: float = 1e-8
    early_stop: int | None = None  # stop after this many consecutive non-improving feasible starts


@dataclass(frozen=True)
class BpikResult:
    q: np.ndarray
    delta: float
    g_b: float
    bem_residual: float
    achieved_pose: np.ndarray
    pose_error: float
    position_error: float
    orientation_error: float
    cost: float
    feasible: bool
    closest: bool                # pose not attained within epsilon; closest result returned
    restarts_used: int
    iterations: int


def pose_difference(target_xi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    d = np.asarray(target_xi, dtype=float) - np.asarray(xi, dtype=float)
    out = d.copy()
    out[..., 3:] = wrap_angle(d[..., 3:])
    return out


def _as_pose_vector(pose) -> np.ndarray:
    if isinstance(pose, Pose):
        return pose.vector()
    return np.asarray(pose, dtype=float).reshape(6)


def bpik(model: RobotModel, target, weights: PlannerWeights | None = None,
         limits: MotionLimits | None = None, prev_q=None, prev_gb: float | None = None,
         local_roll: float | None = None, options: SolverOptions | None = None,
         ignore_balance: bool = False) -> BpikResult:
    """Balance-prioritized inverse kinematics for one target pose.

    Pose matching, configuration continuity and torque continuity form
    the objective; the balance margin is a hard constraint, so an
    unreachable pose still returns the closest balanced configuration
    (flagged via ``closest``).  When ``local_roll`` is given the roll
    angle is frozen and only the joints are searched.
    """
    weights = PlannerWeights() if weights is None else weights
    limits = MotionLimits() if limits is None else limits
    options = SolverOptions() if options is None else options
    nq = model.n + 1
    target_xi = _as_pose_vector(target)
    if prev_q is None:
        prev_q = np.zeros(nq)
        prev_gb = 0.0 if prev_gb is None else float(prev_gb)  # chain start: both zero
    else:
        prev_q = as_q(prev_q, model)
        prev_gb = float(gravity_roll_torque(model, prev_q)) if prev_gb is None else float(prev_gb)
    P, _, _, _ = weights.resolve(nq)

    tau_cap = limits.balance_torque_cap(model)
    tau_range, _ = max_torque_magnitude(model.total_mass, model.bike, limits.steering.delta_max)
    g_cap = min(tau_cap / weights.lambda4, tau_range)  # hard balance bound on |G_b|
    if ignore_balance:  # ablation: drop the balance-priority constraint entirely
        g_cap = np.inf

    fixed_roll = local_roll is not None

    def to_q(x):
        if fixed_roll:
            return np.concatenate([[local_roll], x])
        return x

    def objective(x):
        q = to_q(x)
        xi = ee_pose_vector(model, q)
        d = pose_difference(target_xi, xi)
        gamma1 = float(d @ d)
        gb = float(gravity_roll_torque(model, q))
        gamma2 = (gb - prev_gb) ** 2
        e = q - prev_q
        gamma3 = float(e @ P @ e)
        return weights.lambda1 * gamma1 + weights.lambda2 * gamma2 + weights.lambda3 * gamma3

    def balance_con(x):
        gb = float(gravity_roll_torque(model, to_q(x)))
        return np.array([g_cap - gb, g_cap + gb])

    def balance_jac(x):
        JG = gravity_gradient(model, to_q(x))
        row = JG[1:] if fixed_roll else JG
        return np.vstack([-row, row])

    lo, hi = model.q_lower, model.q_upper
    if fixed_roll:
        bounds = list(zip(lo[1:], hi[1:]))
        x_prev = prev_q[1:]
    else:
        bounds = list(zip(lo, hi))
        x_prev = prev_q

    constraints = [] if ignore_balance else \
        [{"type": "ineq", "fun": balance_con, "jac": balance_jac}]
    rng = np.random.default_rng(options.seed)
    best = None
    used = 0
    no_improve = 0
    for k in range(options.restarts):
        x0 = x_prev if k == 0 else np.clip(
            x_prev + rng.normal(0.0, options.sigma, size=x_prev.shape),
            [b[0] for b in bounds], [b[1] for b in bounds])
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Values in x were outside bounds")
            res = minimize(objective, x0, method="SLSQP", bounds=bounds,
                           constraints=constraints,
                           options={"maxiter": options.maxiter, "ftol": options.ftol})
        used = k + 1
        viol = 0.0 if ignore_balance else float(max(0.0, -np.min(balance_con(res.x))))
        feasible = viol <= options.ctol
        cand = (res.fun, res.x, feasible, int(res.nit))
        if feasible and (best is None or not best[2] or res.fun < best[0] - 1e-15):
            best = cand
            no_improve = 0
        else:
            if best is None:
                best = cand
            no_improve += 1
            if options.early_stop is not None and best[2] and no_improve >= options.early_stop:
                break

    cost, x_star, feasible, iters = best
    if not feasible:
        raise SolverFailureError(
            f"balance constraint violated by {-np.min(balance_con(x_star)):.2e} N m "
            f"after {used} restarts")
    q_star = to_q(np.asarray(x_star, dtype=float))
    gb = float(gravity_roll_torque(model, q_star))
    delta, _ = invert_balance_torque_90(gb, model.total_mass, model.bike,
                                        limits.steering.delta_max)
    residual = gb - float(balance_torque_90(delta, model.total_mass, model.bike))
    xi = ee_pose_vector(model, q_star)
    d = pose_difference(target_xi, xi)
    pose_err = float(np.linalg.norm(d))
    return BpikResult(
        q=q_star, delta=float(delta), g_b=gb, bem_residual=float(residual),
        achieved_pose=xi, pose_error=pose_err,
        position_error=float(np.linalg.norm(d[:3])),
        orientation_error=float(np.linalg.norm(d[3:])),
        cost=float(cost), feasible=True,
        closest=pose_err > weights.epsilon_pose,
        restarts_used=used, iterations=iters,
    )


# ---------------------------------------------------------------------------
# Bezier segment optimization


@dataclass(frozen=True)
class SegmentResult:
    trajectory: BezierTrajectory
    cost: float
    max_violation: float          # at the collocation samples
    audit_violation: float        # on the 10x finer audit grid
    wall_time: float
    iterations: int
    restarts_used: int


class _SegmentProblem:
    """Sampled cost/constraint machinery for one Bezier segment."""

    def __init__(self, model, q_start, q_end, t0, tf, weights, limits,
                 degree, n_samples, prev_gb,
                 qd_start=None, qd_end=None, qdd_start=None, qdd_end=None,
                 ignore_balance: bool = False):
        self.model = model
        self.nq = model.n + 1
        self.t0, self.tf = float(t0), float(tf)
        self.T = self.tf - self.t0
        self.degree = degree
        self.n_free = degree + 1 - 6
        if self.n_free < 0:
            raise ValueError("degree must be at least 5")
        self.weights = weights
        self.limits = limits
        self.q_start = as_q(q_start, model)
        self.q_end = as_q(q_end, model)
        self.prev_gb = float(gravity_roll_torque(model, self.q_start)) if prev_gb is None else float(prev_gb)

        head, tail = pinned_boundary_columns(self.q_start, qd_start, qdd_start,
                                             self.q_end, qd_end, qdd_end,
                                             degree, self.T)
        self.head, self.tail = head, tail

        s = np.linspace(0.0, 1.0, n_samples)
        self.s = s
        N = degree
        B0 = bernstein_matrix(N, s)                      # (S, N+1)
        B1 = bernstein_matrix(N - 1, s)
        B2 = bernstein_matrix(N - 2, s)
        D1 = np.zeros((N + 1, N))
        for j in range(N):
            D1[j, j] = -N
            D1[j + 1, j] = N
        D2 = np.zeros((N, N - 1))
        for j in range(N - 1):
            D2[j, j] = -(N - 1)
            D2[j + 1, j] = N - 1
        # control matrix P (nq, N+1) maps to samples through these operators
        self.Mq = B0.T                                   # (N+1, S)
        self.Mv = (D1 @ B1.T) / self.T                   # (N+1, S)
        self.Ma = (D1 @ D2 @ B2.T) / self.T**2           # (N+1, S)

        self.P_fix = np.zeros((self.nq, N + 1))
        self.P_fix[:, :3] = head
        self.P_fix[:, N - 2:] = tail

        _, self.W1, self.W2, self.w2_padded = weights.resolve(self.nq)
        self.tau_cap = limits.balance_torque_cap(model)
        tau_range, _ = max_torque_magnitude(model.total_mass, model.bike,
                                            limits.steering.delta_max)
        self.ignore_balance = ignore_balance
        self.g_cap = np.inf if ignore_balance else min(self.tau_cap / weights.lambda4, tau_range)
        self.vel_bound = h_max(model.total_mass, model.bike, limits.steering.delta_max) \
            * limits.steering.delta_rate_max
        self.tau_theta_max = limits.joint_torque_limits(model.n)

        # trapezoid quadrature weights over s, scaled by the window length
        if n_samples == 1:
            self.quad = np.array([self.T])
        else:
            w = np.full(n_samples, 1.0)
            w[0] = w[-1] = 0.5
            self.quad = w * (self.T / (n_samples - 1))

    def control_matrix(self, p):
        P = self.P_fix.copy()
        if self.n_free:
            P[:, 3:3 + self.n_free] = p.reshape(self.nq, self.n_free)
        return P

    def samples(self, p, mats=None):
        P = self.control_matrix(p)
        Mq, Mv, Ma = mats if mats is not None else (self.Mq, self.Mv, self.Ma)
        return (P @ Mq).T, (P @ Mv).T, (P @ Ma).T   # (S, nq) each

    def objective(self, p):
        Q, Qd, _ = self.samples(p)
        e = Q - self.q_start
        gb = gravity_roll_torque(self.model, Q)
        f = np.einsum("si,i,si->s", e, self.W1, e) \
            + np.einsum("si,i,si->s", Qd, self.W2, Qd) \
            + (gb - self.prev_gb) ** 2
        return float(self.quad @ f)

    def objective_grad(self, p):
        Q, Qd, _ = self.samples(p)
        e = Q - self.q_start
        gb = gravity_roll_torque(self.model, Q)
        JG = gravity_gradient(self.model, Q)             # (S, nq)
        # d f_s / d Q and d f_s / d Qd
        dQ = 2.0 * e * self.W1 + 2.0 * (gb - self.prev_gb)[:, None] * JG
        dQd = 2.0 * Qd * self.W2
        Mq_int = self.Mq[3:3 + self.n_free, :]           # (F, S)
        Mv_int = self.Mv[3:3 + self.n_free, :]
        g = (dQ.T * self.quad) @ Mq_int.T + (dQd.T * self.quad) @ Mv_int.T  # (nq, F)
        return g.ravel()

    def linear_constraints(self):
        """Box, rate and acceleration limits: rows of A p + b >= 0."""
        lo, hi = self.model.q_lower, self.model.q_upper
        blocks = []
        offs = []
        for M, bound_lo, bound_hi in (
                (self.Mq, lo[:, None], hi[:, None]),
                (self.Mv, -self.limits.q_rate_max, self.limits.q_rate_max),
                (self.Ma, -self.limits.q_acc_max, self.limits.q_acc_max)):
            M_int = M[3:3 + self.n_free, :]
            A = np.kron(np.eye(self.nq), M_int.T)        # (nq*S, nq*F)
            base = (self.P_fix @ M).ravel()              # sample values from pinned columns
            blocks.append(np.vstack([A, -A]))
            upper = np.broadcast_to(bound_hi, (self.nq, M.shape[1])).ravel()
            lower = np.broadcast_to(bound_lo, (self.nq, M.shape[1])).ravel()
            offs.append(np.concatenate([base - lower, upper - base]))
        A_all = np.vstack(blocks)
        b_all = np.concatenate(offs)
        return A_all, b_all

    def balance_values(self, p):
        Q, _, _ = self.samples(p)
        gb = gravity_roll_torque(self.model, Q)
        return np.concatenate([self.g_cap - gb, self.g_cap + gb])

    def balance_jac(self, p):
        Q, _, _ = self.samples(p)
        JG = gravity_gradient(self.model, Q)             # (S, nq)
        Mq_int = self.Mq[3:3 + self.n_free, :]           # (F, S)
        # d gb_s / d p_(c,f) = JG[s, c] * Mq_int[f, s]
        Jgb = np.einsum("sc,fs->scf", JG, Mq_int).reshape(len(self.s), -1)
        return np.vstack([-Jgb, Jgb])

    def dynamic_values(self, p, mats=None):
        """Velocity-bound and joint-torque constraint stack (>= 0 feasible)."""
        Q, Qd, Qdd = self.samples(p, mats)
        JG = gravity_gradient(self.model, Q)
        jdot = np.einsum("si,si->s", JG, Qd)
        tau = inverse_dynamics(self.model, Q, Qd, Qdd)
        tau_theta = tau[:, 1:]
        return np.concatenate([
            self.vel_bound - jdot,
            self.vel_bound + jdot,
            (self.tau_theta_max - tau_theta).ravel(),
            (self.tau_theta_max + tau_theta).ravel(),
        ])

    def all_violations(self, p, mats=None):
        A, b = self.linear_constraints()
        vals = [A @ p + b, self.dynamic_values(p, mats)]
        if not self.ignore_balance:
            vals.append(self.balance_values(p))
        return float(max(0.0, -min(np.min(v) for v in vals)))

    def audit(self, p, factor: int = 10):
        s = np.linspace(0.0, 1.0, factor * len(self.s))
        N = self.degree
        B0 = bernstein_matrix(N, s)
        B1 = bernstein_matrix(N - 1, s)
        B2 = bernstein_matrix(N - 2, s)
        D1 = np.zeros((N + 1, N))
        for j in range(N):
            D1[j, j] = -N
            D1[j + 1, j] = N
        D2 = np.zeros((N, N - 1))
        for j in range(N - 1):
            D2[j, j] = -(N - 1)
            D2[j + 1, j] = N - 1
        mats = (B0.T, (D1 @ B1.T) / self.T, (D1 @ D2 @ B2.T) / self.T**2)
        Q, Qd, Qdd = self.samples(p, mats)
        lo, hi = self.model.q_lower, self.model.q_upper
        box = np.minimum(Q - lo, hi - Q).min()
        rate = (self.limits.q_rate_max - np.abs(Qd)).min()
        acc = (self.limits.q_acc_max - np.abs(Qdd)).min()
        gb = gravity_roll_torque(self.model, Q)
        bal = np.inf if self.ignore_balance else (self.g_cap - np.abs(gb)).min()
        dyn = self.dynamic_values(p, mats).min()
        return float(max(0.0, -min(box, rate, acc, bal, dyn)))


def plan_segment(model: RobotModel, q_start, q_end, t0: float, tf: float,
                 weights: PlannerWeights | None = None,
                 limits: MotionLimits | None = None,
                 degree: int = 7, n_samples: int = 50,
                 prev_gb: float | None = None,
                 options: SolverOptions | None = None,
                 ignore_balance: bool = False) -> SegmentResult:
    """Plan one rest-to-rest Bezier segment between manifold configurations.

    Boundary position, rate and acceleration are enforced exactly through
    control-point pinning (rest states by default); all path constraints
    are collocated at ``n_samples`` uniform progress samples and
    re-audited on a 10x finer grid afterwards.
    """
    weights = PlannerWeights() if weights is None else weights
    limits = MotionLimits() if limits is None else limits
    options = SolverOptions(early_stop=2) if options is None else options
    wall0 = time.perf_counter()

    q_start = as_q(q_start, model)
    q_end = as_q(q_end, model)
    tau_range, _ = max_torque_magnitude(model.total_mass, model.bike, limits.steering.delta_max)
    if not ignore_balance:
        for name, q in (("start", q_start), ("end", q_end)):
            excess = abs(float(gravity_roll_torque(model, q))) - tau_range
            if excess > 1e-6:
                raise ValueError(f"segment {name} configuration off the balance manifold by "
                                 f"{excess:.2e} N m")
    T = tf - t0
    if T <= 0:
        raise ValueError("tf must exceed t0")
    stretch = np.max(np.abs(q_end - q_start))
    if stretch / T > limits.q_rate_max:
        raise InfeasibleSegmentError(
            f"straight-line motion needs {stretch / limits.q_rate_max:.2f} s, window is {T:.2f} s")

    prob = _SegmentProblem(model, q_start, q_end, t0, tf, weights, limits,
                           degree, n_samples, prev_gb, ignore_balance=ignore_balance)
    A_lin, b_lin = prob.linear_constraints()
    constraints = [
        {"type": "ineq", "fun": lambda p: A_lin @ p + b_lin, "jac": lambda p: A_lin},
        {"type": "ineq", "fun": prob.dynamic_values},
    ]
    if not ignore_balance:
        constraints.insert(1, {"type": "ineq", "fun": prob.balance_values,
                               "jac": prob.balance_jac})

    # straight-line initialization of the interior control points
    N = degree
    j = np.arange(3, 3 + prob.n_free)
    p0 = (q_start[:, None] + (q_end - q_start)[:, None] * (j / N)[None, :]).ravel()

    rng = np.random.default_rng(options.seed)
    best = None
    used = 0
    no_improve = 0
    for k in range(options.restarts):
        pk = p0 if k == 0 else p0 + rng.normal(0.0, options.sigma, size=p0.shape)
        res = minimize(prob.objective, pk, jac=prob.objective_grad, method="SLSQP",
                       constraints=constraints,
                       options={"maxiter": options.maxiter, "ftol": options.ftol})
        used = k + 1
        viol = prob.all_violations(res.x)
        feasible = viol <= max(options.ctol, 1e-8)
        if feasible and (best is None or not best[2] or res.fun < best[0] - 1e-15):
            best = (res.fun, res.x.copy(), True, int(res.nit))
            no_improve = 0
        else:
            if best is None:
                best = (res.fun, res.x.copy(), False, int(res.nit))
            no_improve += 1
            if options.early_stop is not None and best[2] and no_improve >= options.early_stop:
                break

    cost, p_star, feasible, iters = best
    if not feasible:
        raise SolverFailureError(
            f"segment constraints violated by {prob.all_violations(p_star):.2e} "
            f"after {used} restarts")
    audit = prob.audit(p_star)
    if audit > 1e-4:
        warnings.warn(f"inter-sample constraint violation {audit:.2e} on the audit grid",
                      stacklevel=2)
    traj = BezierTrajectory(control_points=prob.control_matrix(p_star), t0=t0, tf=tf)
    return SegmentResult(
        trajectory=traj, cost=float(cost),
        max_violation=prob.all_violations(p_star),
        audit_violation=audit,
        wall_time=time.perf_counter() - wall0,
        iterations=iters, restarts_used=used,
    )


# ---------------------------------------------------------------------------
# Mission orchestration (pose sequence -> configurations -> segments)


@dataclass(frozen=True)
class MissionTiming:
    hold: float = 15.0        # dwell at each pose, s
    transition: float = 8.0   # segment duration, s
    t_start: float = 0.0


@dataclass(frozen=True)
class PlanResult:
    q_star: list
    trajectories: list
    segments: list            # SegmentResult per transition
    bpik_results: list
    global_resolves: list     # per pose: True when the local-workspace solve was re-done globally
    timing: MissionTiming
    seed: int
    w2_padded: bool

    @property
    def costs(self):
        return [seg.cost for seg in self.segments]

    @property
    def constraint_residuals(self):
        return [seg.max_violation for seg in self.segments]

    @property
    def wall_times(self):
        return [seg.wall_time for seg in self.segments]

    @property
    def t_end(self) -> float:
        if not self.trajectories:
            return self.timing.t_start + self.timing.hold
        return self.trajectories[-1].tf + self.timing.hold

    def reference(self, t: float):
        """Piecewise reference (q*, qd*, qdd*) at time t: segments joined by holds."""
        for k, traj in enumerate(self.trajectories):
            if t < traj.t0:
                q = self.q_star[k]
                return q, np.zeros_like(q), np.zeros_like(q)
            if t <= traj.tf:
                return traj.eval(t)
        q = self.q_star[-1]
        return q, np.zeros_like(q), np.zeros_like(q)

    def hold_windows(self):
        """(t_lo, t_hi, pose index) spans where the reference dwells at a pose."""
        spans = []
        t_prev = self.timing.t_start
        for k, traj in enumerate(self.trajectories):
            spans.append((t_prev, traj.t0, k))
            t_prev = traj.tf
        spans.append((t_prev, t_prev + self.timing.hold, len(self.trajectories)))
        return spans

    def to_dict(self) -> dict:
        return {
            "meta": {
                "seed": self.seed,
                "euler_convention": "ZYX",
                "w2_padded": self.w2_padded,
                "units": {"angles": "deg", "time": "s", "torque": "N m"},
            },
            "q_star_deg": [np.asarray(q).tolist() for q in
                           (np.asarray(self.q_star) / DEG)],
            "segments": [
                {
                    "t0": seg.trajectory.t0,
                    "tf": seg.trajectory.tf,
                    "degree": seg.trajectory.degree,
                    "control_points_deg": (seg.trajectory.control_points / DEG).tolist(),
                    "cost": seg.cost,
                    "max_violation": seg.max_violation,
                    "audit_violation": seg.audit_violation,
                    "wall_time_s": seg.wall_time,
                    "iterations": seg.iterations,
                    "restarts": seg.restarts_used,
                }
                for seg in self.segments
            ],
            "bpik": [
                {
                    "pose_error": r.pose_error,
                    "position_error_m": r.position_error,
                    "orientation_error_rad": r.orientation_error,
                    "g_b": r.g_b,
                    "delta_deg": r.delta / DEG,
                    "bem_residual": r.bem_residual,
                    "closest": r.closest,
                    "restarts": r.restarts_used,
                    "iterations": r.iterations,
                    "global_resolve": flag,
                }
                for r, flag in zip(self.bpik_results, self.global_resolves)
            ],
        }


def plan_mission(model: RobotModel, poses, timing: MissionTiming | None = None,
                 weights: PlannerWeights | None = None,
                 limits: MotionLimits | None = None,
                 options: SolverOptions | None = None,
                 start_q=None,
                 include_approach: bool = True,
                 ignore_balance: bool = False) -> PlanResult:
    """Pose-regulation pipeline: per-pose inverse kinematics with the
    local-workspace-first search, then one Bezier segment per transition.

    The first pose is solved in the full workspace; later poses are first
    solved with the roll frozen at the previous solution and re-solved
    globally when the attained pose misses by more than the pose
    tolerance.  ``start_q`` (default zero configuration) seeds the chain;
    with ``include_approach`` a segment from it to the first pose is
    planned, otherwise the mission starts at the first solved pose.
    """
    if len(poses) < 1:
        raise ValueError("at least one pose required")
    timing = MissionTiming() if timing is None else timing
    weights = PlannerWeights() if weights is None else weights
    limits = MotionLimits() if limits is None else limits
    options = SolverOptions(early_stop=2) if options is None else options

    nq = model.n + 1
    _, _, _, w2_padded = weights.resolve(nq)
    q_prev = np.zeros(nq) if start_q is None else as_q(start_q, model)
    gb_prev = 0.0 if start_q is None else float(gravity_roll_torque(model, q_prev))

    q_star = [q_prev]
    results = []
    resolves = []
    for k, pose in enumerate(poses):
        if k == 0:
            res = bpik(model, pose, weights, limits, prev_q=q_prev, prev_gb=gb_prev,
                       options=options, ignore_balance=ignore_balance)
            resolved = False
        else:
            res = bpik(model, pose, weights, limits, prev_q=q_prev, prev_gb=gb_prev,
                       local_roll=float(q_prev[0]), options=options,
                       ignore_balance=ignore_balance)
            resolved = False
            if res.pose_error >= weights.epsilon_pose:
                res = bpik(model, pose, weights, limits, prev_q=q_prev, prev_gb=gb_prev,
                           options=options, ignore_balance=ignore_balance)
                resolved = True
        results.append(res)
        resolves.append(resolved)
        q_prev = res.q
        gb_prev = res.g_b
        q_star.append(res.q)

    if not include_approach:
        q_star = q_star[1:]

    segments = []
    trajectories = []
    t = timing.t_start + timing.hold
    for j in range(1, len(q_star)):
        try:
            seg = plan_segment(model, q_star[j - 1], q_star[j], t, t + timing.transition,
                               weights=weights, limits=limits, options=options,
                               ignore_balance=ignore_balance)
        except (SolverFailureError, InfeasibleSegmentError) as err:
            raise type(err)(f"segment {j} ({err})") from err
        segments.append(seg)
        trajectories.append(seg.trajectory)
        t = seg.trajectory.tf + timing.hold

    return PlanResult(
        q_star=q_star, trajectories=trajectories, segments=segments,
        bpik_results=results, global_resolves=resolves, timing=timing,
        seed=options.seed, w2_padded=w2_padded,
    )


def bezier_eval(traj: BezierTrajectory, t):
    """(q, qd, qdd) at time t; thin alias over the trajectory's evaluator."""
    return traj.eval(t)
