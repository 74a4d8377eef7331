"""Unit conversions at file/CLI boundaries.

All library internals use radians and meters.  Robot description files,
scenario files and every CSV/JSON output use degrees and centimeters,
matching the conventions of the hardware-facing tables.
"""

import numpy as np

DEG = np.pi / 180.0


def deg(x):
    """Degrees -> radians."""
    return np.asarray(x, dtype=float) * DEG


def rad_to_deg(x):
    """Radians -> degrees."""
    return np.asarray(x, dtype=float) / DEG


def cm_to_m(x):
    return np.asarray(x, dtype=float) * 0.01


def m_to_cm(x):
    return np.asarray(x, dtype=float) * 100.0


def wrap_angle(x):
    """Wrap angles to (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    wrapped = -np.mod(-x + np.pi, 2.0 * np.pi) + np.pi
    return wrapped


def pose_vector_to_file_units(xi):
    """Internal [m, m, m, rad, rad, rad] -> file [cm, cm, cm, deg, deg, deg]."""
    xi = np.asarray(xi, dtype=float)
    out = np.empty_like(xi)
    out[..., :3] = m_to_cm(xi[..., :3])
    out[..., 3:] = rad_to_deg(xi[..., 3:])
    return out


def pose_vector_from_file_units(xi):
    """File [cm, cm, cm, deg, deg, deg] -> internal [m, m, m, rad, rad, rad]."""
    xi = np.asarray(xi, dtype=float)
    out = np.empty_like(xi)
    out[..., :3] = cm_to_m(xi[..., :3])
    out[..., 3:] = deg(xi[..., 3:])
    return out
