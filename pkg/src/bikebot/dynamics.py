"""Coupled platform-manipulator dynamics ``D(q) qdd + C(q, qd) qd + G(q) = tau``.

Matrices are assembled numerically from world-frame body Jacobians
(composite rigid-body style), so D and G are exact up to round-off; the
Coriolis matrix uses the Christoffel construction on centrally
finite-differenced dD/dq, which preserves the skew symmetry of
``dD/dt - 2C``.  Everything broadcasts over leading batch dimensions of
``q`` and ``qd``.
"""

from dataclasses import dataclass

import numpy as np

from .model import RobotModel, as_q, body_kinematics

FD_STEP = 1e-6  # rad, central differences of first derivatives


@dataclass(frozen=True)
class EnergyBreakdown:
    """Kinetic and potential energy split per rigid body (platform, then links)."""

    T_b: float
    T_links: np.ndarray
    U_b: float
    U_links: np.ndarray

    @property
    def T(self):
        return self.T_b + np.sum(self.T_links, axis=-1)

    @property
    def U(self):
        return self.U_b + np.sum(self.U_links, axis=-1)

    @property
    def total(self):
        return self.T + self.U


@dataclass(frozen=True)
class DynamicsMatrices:
    D: np.ndarray
    C: np.ndarray
    G: np.ndarray

    @property
    def D_bb(self):
        return self.D[..., 0, 0]

    @property
    def D_btheta(self):
        return self.D[..., 0, 1:]

    @property
    def D_thetab(self):
        return self.D[..., 1:, 0]

    @property
    def D_thetatheta(self):
        return self.D[..., 1:, 1:]

    @property
    def C_b(self):
        return self.C[..., 0, :]

    @property
    def C_theta(self):
        return self.C[..., 1:, :]

    @property
    def G_b(self):
        return self.G[..., 0]

    @property
    def G_theta(self):
        return self.G[..., 1:]


def _body_masses_inertias(model: RobotModel):
    masses = np.array([model.bike.m_b] + [link.m for link in model.links])
    inertias = np.stack(
        [np.diag([model.bike.I_b, 0.0, 0.0])] + [link.inertia for link in model.links]
    )
    return masses, inertias


def energies(model: RobotModel, q, qdot, delta: float = 0.0) -> EnergyBreakdown:
    """Kinetic/potential energy breakdown; ``delta`` feeds the optional
    steering-height hook on the platform's potential term."""
    q = as_q(q, model)
    qd = np.asarray(qdot, dtype=float)
    if qd.shape != q.shape:
        raise ValueError("qdot must match q in shape")
    coms, rots, Jv, Jw = body_kinematics(model, q)
    masses, inertias = _body_masses_inertias(model)

    v = np.einsum("...bij,...j->...bi", Jv, qd)
    w = np.einsum("...bij,...j->...bi", Jw, qd)
    I_world = np.einsum("...bij,bjk,...blk->...bil", rots, inertias, rots)
    T_bodies = 0.5 * masses * np.einsum("...bi,...bi->...b", v, v) \
        + 0.5 * np.einsum("...bi,...bij,...bj->...b", w, I_world, w)

    g = model.bike.g
    U_bodies = masses * g * coms[..., 2]
    dh = 0.0
    if model.delta_h_fn is not None:
        dh = model.bike.m_b * g * model.delta_h_fn(delta, q[..., 0])
    return EnergyBreakdown(
        T_b=T_bodies[..., 0],
        T_links=T_bodies[..., 1:],
        U_b=U_bodies[..., 0] + dh,
        U_links=U_bodies[..., 1:],
    )


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    q = as_q(q, model)
    _, rots, Jv, Jw = body_kinematics(model, q)
    return _mass_matrix_from_bodies(model, rots, Jv, Jw)


def mass_matrix_derivatives(model: RobotModel, q, step: float = FD_STEP) -> np.ndarray:
    """Central-difference dD/dq_k, shape (..., n+1, n+1, n+1) with the
    derivative index first among the trailing three."""
    q = as_q(q, model)
    nq = q.shape[-1]
    plus = q[..., None, :] + step * np.eye(nq)
    minus = q[..., None, :] - step * np.eye(nq)
    return (mass_matrix(model, plus) - mass_matrix(model, minus)) / (2.0 * step)


def _mass_matrix_from_bodies(model, rots, Jv, Jw):
    masses, inertias = _body_masses_inertias(model)
    D = np.einsum("b,...bki,...bkj->...ij", masses, Jv, Jv)
    I_world = np.einsum("...bij,bjk,...blk->...bil", rots, inertias, rots)
    D += np.einsum("...bki,...bkl,...blj->...ij", Jw, I_world, Jw)
    return D


def coriolis_matrix(model: RobotModel, q, qdot) -> np.ndarray:
    """Christoffel-symbol Coriolis matrix from numerical dD/dq."""
    q = as_q(q, model)
    qd = np.asarray(qdot, dtype=float)
    if qd.shape != q.shape:
        raise ValueError("qdot must match q in shape")
    nq = q.shape[-1]
    eye = np.eye(nq)
    probes = np.concatenate([q[..., None, :] + FD_STEP * eye,
                             q[..., None, :] - FD_STEP * eye], axis=-2)
    D_pm = mass_matrix(model, probes)
    dD = (D_pm[..., :nq, :, :] - D_pm[..., nq:, :, :]) / (2.0 * FD_STEP)
    term1 = np.einsum("...kij,...k->...ij", dD, qd)
    term2 = np.einsum("...jik,...k->...ij", dD, qd)
    term3 = np.einsum("...ijk,...k->...ij", dD, qd)
    return 0.5 * (term1 + term2 - term3)


def gravity_vector(model: RobotModel, q, delta: float = 0.0) -> np.ndarray:
    """G = dU/dq, exact through the body position Jacobians."""
    q = as_q(q, model)
    _, _, Jv, _ = body_kinematics(model, q)
    masses, _ = _body_masses_inertias(model)
    G = model.bike.g * np.einsum("b,...bj->...j", masses, Jv[..., 2, :])
    if model.delta_h_fn is not None:
        h = FD_STEP
        phi = q[..., 0]
        dU = model.bike.m_b * model.bike.g * (
            np.asarray(model.delta_h_fn(delta, phi + h)) - np.asarray(model.delta_h_fn(delta, phi - h))
        ) / (2.0 * h)
        G = G.copy()
        G[..., 0] += dU
    return G


def gravity_roll_torque(model: RobotModel, q, delta: float = 0.0) -> np.ndarray:
    """Scalar accessor for the total gravitational roll torque G_b(q)."""
    return gravity_vector(model, q, delta=delta)[..., 0]


def gravity_gradient(model: RobotModel, q, delta: float = 0.0) -> np.ndarray:
    """Row vector J_G = dG_b/dq.

    G_b equals ``-g * sum_i m_i * y_i`` of the body mass centers, so its
    gradient is exactly the y-row of the stacked position Jacobians; this
    replaces the finite-difference route (identical values, no step error).
    """
    q = as_q(q, model)
    _, _, Jv, _ = body_kinematics(model, q)
    masses, _ = _body_masses_inertias(model)
    JG = -model.bike.g * np.einsum("b,...bj->...j", masses, Jv[..., 1, :])
    if model.delta_h_fn is not None:
        h = 1e-4
        phi = q[..., 0]
        fn = model.delta_h_fn
        d2U = model.bike.m_b * model.bike.g * (
            np.asarray(fn(delta, phi + h)) - 2.0 * np.asarray(fn(delta, phi)) + np.asarray(fn(delta, phi - h))
        ) / h**2
        JG = JG.copy()
        JG[..., 0] += d2U
    return JG


def dynamics_matrices(model: RobotModel, q, qdot) -> DynamicsMatrices:
    q = as_q(q, model)
    qd = np.asarray(qdot, dtype=float)
    D, C, G = _dcg(model, q, qd)
    return DynamicsMatrices(D=D, C=C, G=G)


def _dcg(model: RobotModel, q, qd):
    """D, C, G sharing one body-kinematics pass for D and G."""
    _, rots, Jv, Jw = body_kinematics(model, q)
    D = _mass_matrix_from_bodies(model, rots, Jv, Jw)
    masses, _ = _body_masses_inertias(model)
    G = model.bike.g * np.einsum("b,...bj->...j", masses, Jv[..., 2, :])
    C = coriolis_matrix(model, q, qd)
    return D, C, G


def inverse_dynamics(model: RobotModel, q, qdot, qddot) -> np.ndarray:
    """Generalized forces realizing (q, qd, qdd): tau = D qdd + C qd + G."""
    q = as_q(q, model)
    qd = np.asarray(qdot, dtype=float)
    qdd = np.asarray(qddot, dtype=float)
    D, C, G = _dcg(model, q, qd)
    return np.einsum("...ij,...j->...i", D, qdd) + np.einsum("...ij,...j->...i", C, qd) + G


def forward_acceleration(model: RobotModel, q, qdot, tau) -> np.ndarray:
    """qdd = D^-1 (tau - C qd - G)."""
    q = as_q(q, model)
    qd = np.asarray(qdot, dtype=float)
    D, C, G = _dcg(model, q, qd)
    rhs = np.asarray(tau, dtype=float) - np.einsum("...ij,...j->...i", C, qd) - G
    return np.linalg.solve(D, rhs[..., None])[..., 0]
