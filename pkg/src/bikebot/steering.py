"""Two-wheel steering geometry and the steering-induced balance torque model.

The torque model is quasi-static: a steering increment ``delta`` on top
of an initial steering angle ``phi0`` shifts the wheel/ground contact
line sideways, and gravity acting through that shifted support line
produces a roll torque.  The general model composes the roll-frozen
contact radius with a linearized projected-steering-angle increment, so
that at ``phi0 = 90 deg`` it reduces exactly to the closed form used for
control.  Sign convention: positive ``delta`` produces negative torque,
which counteracts positive roll.

Note: the closed-form sensitivity treats the contact radius as constant
over the increment (its published derivation); away from 90 deg the full
torque model also carries the radius variation, so finite differences of
``balance_torque`` reproduce ``steering_sensitivity`` exactly at 90 deg
and only approximately elsewhere.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .model import BikebotParams
from .units import DEG

ROLL_GUARD = 15.0 * DEG  # beyond this the small-roll contact-radius freeze degrades


class RollApproximationWarning(UserWarning):
    """Quasi-static steering formulas used outside their small-roll validity."""


@dataclass(frozen=True)
class SteeringState:
    """Steering configuration: initial angle plus commanded increment."""

    phi0: float = np.pi / 2
    delta: float = 0.0
    symmetric: bool = True  # front/rear mirrored; required by all planner/controller paths

    @property
    def phi(self) -> float:
        return self.phi0 + self.delta


@dataclass(frozen=True)
class SteeringLimits:
    delta_max: float = 15.0 * DEG
    delta_rate_max: float = 20.0 * DEG  # rad/s

    def __post_init__(self):
        if self.delta_max <= 0.0 or self.delta_rate_max <= 0.0:
            raise ValueError("steering limits must be positive")


def _check_roll(phi_b):
    if np.any(np.abs(phi_b) > ROLL_GUARD):
        warnings.warn(
            "steering torque model evaluated at |roll| > 15 deg, outside the "
            "small-roll approximation",
            RollApproximationWarning,
            stacklevel=3,
        )


def wheel_ground_angle(phi, phi_b, epsilon) -> np.ndarray:
    """cos(gamma), gamma the angle between wheel plane and ground."""
    phi = np.asarray(phi, dtype=float)
    return np.sin(phi) * np.sin(epsilon) - np.cos(phi) * np.cos(epsilon) * np.sin(phi_b)


def contact_radius(phi, phi_b, params: BikebotParams) -> np.ndarray:
    """Radius of the contact-point arc: r = R cos(gamma)."""
    return params.R * wheel_ground_angle(phi, phi_b, params.epsilon)


def projected_steering_angle(phi, phi_b, epsilon) -> np.ndarray:
    """Steering angle projected onto the ground plane, continuous through 90 deg."""
    phi = np.asarray(phi, dtype=float)
    phi_b = np.asarray(phi_b, dtype=float)
    if np.any(np.isclose(np.cos(phi_b), 0.0, atol=1e-12)):
        raise ValueError("projected steering angle degenerates at |roll| = 90 deg")
    return np.arctan2(np.cos(epsilon) * np.sin(phi), np.cos(phi_b) * np.cos(phi))


def _projection_rate(phi0, phi_b, epsilon):
    """d(phi_g)/d(phi) evaluated at (phi0, phi_b)."""
    c_b, c_e = np.cos(phi_b), np.cos(epsilon)
    c0, s0 = np.cos(phi0), np.sin(phi0)
    return c_e * c_b / (c_b**2 * c0**2 + c_e**2 * s0**2)


def _line_offset(phi, phi_g, params: BikebotParams) -> np.ndarray:
    """Lateral offset of the contact line from the wheel-center ground line."""
    r = params.R * np.sin(phi) * np.sin(params.epsilon)  # roll-frozen radius
    return r * np.cos(phi_g)


def balance_torque(delta, phi0, phi_b, params: BikebotParams, mass: float | None = None) -> np.ndarray:
    """Steering-induced balance torque (N m) at a general initial angle.

    Torque is the weight times the lateral shift of the contact line
    between steering angles ``phi0`` and ``phi0 + delta``; the shift uses
    the projected-angle rate at ``phi0`` so that the 90 deg slice matches
    :func:`balance_torque_90` to round-off.
    """
    _check_roll(phi_b)
    mass = params.m_b if mass is None else mass
    delta = np.asarray(delta, dtype=float)
    phi_g0 = projected_steering_angle(phi0, phi_b, params.epsilon)
    rate = _projection_rate(phi0, phi_b, params.epsilon)
    moved = _line_offset(phi0 + delta, phi_g0 + rate * delta, params)
    rest = _line_offset(phi0, phi_g0, params)
    return mass * params.g * (moved - rest)


def balance_torque_90(delta, mass: float, params: BikebotParams) -> np.ndarray:
    """Closed-form torque at the 90 deg operating configuration.

    ``mass`` is the platform mass for the bare bikebot or the total
    system mass when the manipulator is mounted.
    """
    delta = np.asarray(delta, dtype=float)
    eps = params.epsilon
    return -mass * params.g * params.R * np.sin(eps) * np.cos(delta) * np.sin(delta / np.cos(eps))


def steering_sensitivity(phi0, params: BikebotParams, mass: float | None = None) -> np.ndarray:
    """|d tau_b / d delta| at delta = 0, roll = 0 (N m / rad), closed form.

    Written in sines/cosines so it stays finite through phi0 = 90 deg,
    where it attains the global maximum ``m g R tan(epsilon)``.
    """
    mass = params.m_b if mass is None else mass
    phi0 = np.asarray(phi0, dtype=float)
    s0, _ = np.sin(phi0), np.cos(phi0)
    ce = np.cos(params.epsilon)
    W2 = 1.0 - np.sin(phi0) ** 2 * np.sin(params.epsilon) ** 2  # cos^2 phi0 + ce^2 sin^2 phi0
    r = params.R * np.sin(params.epsilon) * np.abs(s0)
    return mass * params.g * r * ce**2 * np.abs(s0) / W2**1.5


def sensitivity_per_degree(phi0, params: BikebotParams, mass: float | None = None) -> np.ndarray:
    """Sensitivity in N m per degree of steering increment."""
    return steering_sensitivity(phi0, params, mass=mass) * DEG


def torque_rate_h(delta, mass: float, params: BikebotParams) -> np.ndarray:
    """h(delta) = d tau_b90 / d delta, analytic."""
    delta = np.asarray(delta, dtype=float)
    eps = params.epsilon
    ce = np.cos(eps)
    inner = -np.sin(delta) * np.sin(delta / ce) + np.cos(delta) * np.cos(delta / ce) / ce
    return -mass * params.g * params.R * np.sin(eps) * inner


def h_max(mass: float, params: BikebotParams, delta_max: float) -> float:
    """sup |h(delta)| over |delta| <= delta_max (grid scan + bounded refine)."""
    grid = np.linspace(-delta_max, delta_max, 2001)
    vals = np.abs(torque_rate_h(grid, mass, params))
    k = int(np.argmax(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    if lo == hi:
        return float(vals[k])
    res = minimize_scalar(
        lambda d: -abs(float(torque_rate_h(d, mass, params))),
        bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    return max(float(vals[k]), -float(res.fun))


def max_torque_magnitude(mass: float, params: BikebotParams, delta_range: float) -> tuple[float, float]:
    """(max |tau_b90|, achieving delta > 0) over |delta| <= delta_range."""
    grid = np.linspace(0.0, delta_range, 2001)
    vals = np.abs(balance_torque_90(grid, mass, params))
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda d: -abs(float(balance_torque_90(d, mass, params))),
        bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    if -res.fun > vals[k]:
        return -float(res.fun), float(res.x)
    return float(vals[k]), float(grid[k])


def invert_balance_torque_90(tau: float, mass: float, params: BikebotParams,
                             delta_max: float) -> tuple[float, bool]:
    """Steering increment realizing torque ``tau`` on the monotone branch.

    Returns ``(delta, saturated)``; the demand saturates at the increment
    limit (or at the torque peak if the limit lies beyond it).
    """
    from scipy.optimize import brentq

    _, peak_delta = max_torque_magnitude(mass, params, min(delta_max, np.pi / 2 * 0.999))
    hi = min(delta_max, peak_delta)
    lo = -hi
    tau_lo = float(balance_torque_90(lo, mass, params))  # largest positive torque
    tau_hi = float(balance_torque_90(hi, mass, params))  # largest negative torque
    if tau >= tau_lo:
        return lo, True
    if tau <= tau_hi:
        return hi, True
    if tau == 0.0:
        return 0.0, False
    delta = brentq(lambda d: float(balance_torque_90(d, mass, params)) - tau,
                   lo, hi, xtol=1e-13, rtol=8.9e-16)
    return float(delta), False


def one_wheel_torque(delta, phi_b, params: BikebotParams, mass: float | None = None) -> np.ndarray:
    """Balance torque when only the front wheel steers (rear contact fixed).

    Explicit construction on the ground plane: the front contact moves to
    its incremental lateral offset, the rear stays put, and the moment arm
    is the perpendicular distance from the mass-center ground projection
    (at mid-wheelbase on the original contact line) to the new line.
    """
    _check_roll(phi_b)
    mass = params.m_b if mass is None else mass
    delta = np.asarray(delta, dtype=float)
    phi0 = np.pi / 2
    phi_g0 = projected_steering_angle(phi0, phi_b, params.epsilon)
    rate = _projection_rate(phi0, phi_b, params.epsilon)
    y_front = _line_offset(phi0 + delta, phi_g0 + rate * delta, params)
    # line through rear contact (0, 0) and front contact (l, y_front)
    arm = y_front * (params.l / 2.0) / np.hypot(params.l, y_front)
    return mass * params.g * arm
