"""Rotation and homogeneous-transform helpers.

All functions broadcast over leading batch dimensions: angles of shape
``(...,)`` produce matrices of shape ``(..., 3, 3)`` or ``(..., 4, 4)``.
Orientation is exchanged with the outside world as Z-Y-X (yaw, pitch,
roll) Euler angles; chained computation stays in rotation matrices.
"""

import numpy as np


def rot_x(angle):
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(a.shape + (3, 3))
    R[..., 0, 0] = 1.0
    R[..., 1, 1] = c
    R[..., 1, 2] = -s
    R[..., 2, 1] = s
    R[..., 2, 2] = c
    return R


def rot_y(angle):
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(a.shape + (3, 3))
    R[..., 1, 1] = 1.0
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def rot_z(angle):
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(a.shape + (3, 3))
    R[..., 2, 2] = 1.0
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


def homogeneous(R, p):
    """Assemble (..., 4, 4) from rotation (..., 3, 3) and translation (..., 3)."""
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    batch = np.broadcast_shapes(R.shape[:-2], p.shape[:-1])
    T = np.zeros(batch + (4, 4))
    T[..., :3, :3] = R
    T[..., :3, 3] = p
    T[..., 3, 3] = 1.0
    return T


def euler_zyx_to_matrix(euler):
    """Z-Y-X Euler angles [yaw, pitch, roll] -> rotation matrix."""
    e = np.asarray(euler, dtype=float)
    return rot_z(e[..., 0]) @ rot_y(e[..., 1]) @ rot_x(e[..., 2])


def matrix_to_euler_zyx(R):
    """Rotation matrix -> Z-Y-X Euler angles with pitch in (-pi/2, pi/2).

    At the gimbal singularity (|pitch| = pi/2) yaw is set to 0 and the
    remaining rotation is pushed into roll.
    """
    R = np.asarray(R, dtype=float)
    pitch = np.arcsin(np.clip(-R[..., 2, 0], -1.0, 1.0))
    near_singular = np.isclose(np.abs(R[..., 2, 0]), 1.0, atol=1e-12)
    yaw = np.where(near_singular, 0.0, np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    roll = np.where(
        near_singular,
        np.arctan2(-R[..., 0, 1], R[..., 1, 1]) * np.sign(-R[..., 2, 0]),
        np.arctan2(R[..., 2, 1], R[..., 2, 2]),
    )
    return np.stack([yaw, pitch, roll], axis=-1)


def is_rotation(R, tol=1e-10):
    """Orthonormality + det(+1) check."""
    R = np.asarray(R, dtype=float)
    eye = np.eye(3)
    ortho = np.max(np.abs(R @ np.swapaxes(R, -1, -2) - eye)) <= tol
    det_ok = np.max(np.abs(np.linalg.det(R) - 1.0)) <= tol
    return bool(ortho and det_ok)
