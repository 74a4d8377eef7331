"""Balance equilibrium manifold: membership, solving, capability and workspaces.

A configuration is on the manifold when the total gravitational roll
torque equals the steering-induced balance torque available at some
admissible steering increment.  Quasi-static motion along the manifold
is additionally limited by the steering rate, which bounds how fast the
gravitational torque may change.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dynamics import gravity_roll_torque
from .model import Configuration, RobotModel, as_q
from .steering import (RollApproximationWarning, SteeringLimits, balance_torque_90, h_max,
                       max_torque_magnitude, one_wheel_torque)
from .units import DEG

RESIDUAL_TOL = 1e-8          # N m, manifold membership tolerance
ROLL_BRACKET_GUARD = 20.0 * DEG  # root search window for equilibrium rolls
CAPABILITY_DELTA_RANGE = 50.0 * DEG  # covers the analytic torque maximum
ARM_SEARCH_JOINTS = (1, 2, 3)  # shoulder joints dominate the balance authority


class NoEquilibriumError(RuntimeError):
    """No equilibrium roll bracket exists: outside the balance capability."""


@dataclass(frozen=True)
class BemPoint:
    """A configuration on the manifold with its equilibrium steering torque."""

    q_e: Configuration
    tau_b: float
    residual: float
    delta: float | None = None

    def __post_init__(self):
        if abs(self.residual) > RESIDUAL_TOL:
            raise ValueError(f"BEM residual {self.residual:.3e} exceeds {RESIDUAL_TOL:.1e} N m")


@dataclass(frozen=True)
class CapabilityEstimate:
    strategy: str                 # one-wheel | two-wheel | two-wheel+arm
    phi_b_max: float
    achieving_delta: float
    achieving_theta: np.ndarray | None = None
    tau_max: float = 0.0


def bem_residual(model: RobotModel, q, delta) -> np.ndarray:
    """Signed residual G_b(q) - tau_b(delta), with the total system mass."""
    return gravity_roll_torque(model, q) - balance_torque_90(delta, model.total_mass, model.bike)


def solve_equilibrium_roll(model: RobotModel, theta, delta: float,
                           guard: float = ROLL_BRACKET_GUARD,
                           tol: float = RESIDUAL_TOL) -> float:
    """Roll angle at which the fixed-arm configuration balances at steering ``delta``.

    Deterministic bracketed root find on the residual; raises
    :class:`NoEquilibriumError` when no sign change exists inside the
    guard window.
    """
    theta = np.asarray(theta, dtype=float)

    def residual(phi):
        return float(bem_residual(model, np.concatenate([[phi], theta]), delta))

    grid = np.linspace(-guard, guard, 81)
    vals = np.array([residual(p) for p in grid])
    exact = np.flatnonzero(vals == 0.0)
    if exact.size:
        return float(grid[exact[0]])
    sign_change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if sign_change.size == 0:
        raise NoEquilibriumError(
            f"no equilibrium roll in [-{guard / DEG:.1f}, {guard / DEG:.1f}] deg at delta="
            f"{delta / DEG:.2f} deg")
    k = int(sign_change[0])
    phi = brentq(residual, grid[k], grid[k + 1], xtol=1e-14, rtol=8.9e-16)
    # secant polish onto the torque residual itself
    for _ in range(5):
        r = residual(phi)
        if abs(r) <= tol:
            break
        dr = (residual(phi + 1e-9) - residual(phi - 1e-9)) / 2e-9
        if dr == 0.0:
            break
        phi -= r / dr
    return float(phi)


def bem_point(model: RobotModel, theta, delta: float) -> BemPoint:
    """Solve the equilibrium roll and package it as a manifold point."""
    phi = solve_equilibrium_roll(model, theta, delta)
    q = np.concatenate([[phi], np.asarray(theta, dtype=float)])
    tau = float(balance_torque_90(delta, model.total_mass, model.bike))
    return BemPoint(
        q_e=Configuration.from_q(q),
        tau_b=tau,
        residual=float(gravity_roll_torque(model, q) - tau),
        delta=float(delta),
    )


def _max_arm_torque(model: RobotModel, phi_b: float, theta0: np.ndarray,
                    joints, sweeps: int = 3) -> tuple[float, np.ndarray]:
    """Coordinate search maximizing G_b over selected joints at fixed roll."""
    theta = np.asarray(theta0, dtype=float).copy()

    def g_of(theta_vec):
        return float(gravity_roll_torque(model, np.concatenate([[phi_b], theta_vec])))

    for _ in range(sweeps):
        for j in joints:
            idx = j - 1
            lo, hi = model.joint_lower[idx], model.joint_upper[idx]

            def neg(v, idx=idx):
                t = theta.copy()
                t[idx] = v
                return -g_of(t)

            grid = np.linspace(lo, hi, 61)
            vals = np.array([neg(v) for v in grid])
            k = int(np.argmin(vals))
            res = minimize_scalar(neg, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 60)]),
                                  method="bounded", options={"xatol": 1e-9})
            best = res.x if res.fun < vals[k] else grid[k]
            theta[idx] = float(best)
    return g_of(theta), theta


def max_roll_capability(model: RobotModel, strategy: str,
                        limits: SteeringLimits | None = None,
                        delta_range: float = CAPABILITY_DELTA_RANGE,
                        theta_ref=None,
                        search_joints=ARM_SEARCH_JOINTS,
                        full_joint_search: bool = False) -> CapabilityEstimate:
    """Static maximum balanced roll angle for a balancing strategy.

    Strategies: ``one-wheel`` (front steering only), ``two-wheel``
    (symmetric steering, arm frozen at ``theta_ref``) and
    ``two-wheel+arm`` (steering plus arm counterweighting over the
    searched joints).
    """
    if strategy not in ("one-wheel", "two-wheel", "two-wheel+arm"):
        raise ValueError(f"unknown strategy {strategy!r}")
    theta_ref = np.zeros(model.n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    mass = model.total_mass
    joints = tuple(range(1, model.n + 1)) if full_joint_search else tuple(search_joints)

    if strategy == "one-wheel":
        grid = np.linspace(0.0, delta_range, 1001)

        def tau_avail(phi):
            # capability scans probe rolls beyond the quasi-static guard on purpose
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RollApproximationWarning)
                return float(np.max(np.abs(one_wheel_torque(grid, phi, model.bike, mass=mass))))
    else:
        tau_two, delta_two = max_torque_magnitude(mass, model.bike, delta_range)

        def tau_avail(phi):
            return tau_two

    if strategy == "two-wheel+arm":
        def g_best(phi):
            return _max_arm_torque(model, phi, theta_ref, joints)[0]
    else:
        def g_best(phi):
            return float(gravity_roll_torque(model, np.concatenate([[phi], theta_ref])))

    # largest positive roll with g_best(phi) >= -tau_avail(phi); g_best is
    # decreasing in phi on the search window, so bracket and bisect
    def margin(phi):
        return g_best(phi) + tau_avail(phi)

    phi_hi = model.roll_limit
    if margin(phi_hi) >= 0.0:
        phi_max = phi_hi
    else:
        phi_max = brentq(margin, 0.0, phi_hi, xtol=1e-10)

    # achieving increment: the steering torque balancing G_b at phi_max
    if strategy == "one-wheel":
        grid = np.linspace(0.0, delta_range, 2001)
        taus = np.abs(one_wheel_torque(grid, phi_max, model.bike, mass=mass))
        ach_delta = float(grid[int(np.argmax(taus))])
        theta_star = None
    else:
        ach_delta = delta_two
        theta_star = None
        if strategy == "two-wheel+arm":
            _, theta_star = _max_arm_torque(model, phi_max, theta_ref, joints)
    return CapabilityEstimate(
        strategy=strategy,
        phi_b_max=float(phi_max),
        achieving_delta=ach_delta,
        achieving_theta=theta_star,
        tau_max=float(tau_avail(phi_max)),
    )


def velocity_bound_check(model: RobotModel, q, qdot,
                         limits: SteeringLimits) -> tuple[bool, float, float, float]:
    """Check |J_G qdot| <= h_max * delta_rate_max; returns (ok, margin, lhs, rhs)."""
    from .dynamics import gravity_gradient

    q = as_q(q, model)
    JG = gravity_gradient(model, q)
    lhs = float(np.abs(JG @ np.asarray(qdot, dtype=float)))
    rhs = h_max(model.total_mass, model.bike, limits.delta_max) * limits.delta_rate_max
    return lhs <= rhs, rhs - lhs, lhs, rhs


def workspace_contains(model: RobotModel, pose, limits, weights=None,
                       local_roll: float | None = None, seed_q=None):
    """Membership test for the reachable balanced pose workspace.

    Runs the balance-prioritized inverse kinematics and reports whether
    the pose is attained within the pose tolerance; always returns the
    closest balanced configuration found.
    """
    from .planner import PlannerWeights, bpik  # late import, planner builds on this module

    weights = PlannerWeights() if weights is None else weights
    result = bpik(model, pose, weights=weights, limits=limits,
                  local_roll=local_roll, prev_q=seed_q)
    contained = result.pose_error <= weights.epsilon_pose and result.feasible
    return contained, result
