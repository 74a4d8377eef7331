"""Bernstein-basis trajectories over normalized progress s in [0, 1].

Each generalized coordinate is one degree-N Bezier polynomial; the time
window [t0, tf] maps linearly onto s, so ds/dt is constant and time
derivatives are hodograph evaluations scaled by the window length.
"""

import math
from dataclasses import dataclass

import numpy as np


def bernstein_matrix(degree: int, s) -> np.ndarray:
    """Basis values b_j(s), shape (len(s), degree+1)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    j = np.arange(degree + 1)
    binom = np.array([math.comb(degree, k) for k in j], dtype=float)
    B = binom * np.power(s[:, None], j) * np.power(1.0 - s[:, None], degree - j)
    return B


def de_casteljau(points: np.ndarray, s) -> np.ndarray:
    """Evaluate Bezier curves by repeated linear interpolation.

    ``points`` has control points along the last axis; returns values with
    that axis replaced by the sample axis appended first.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    P = np.broadcast_to(points, (s.size,) + points.shape).copy()
    w = s.reshape((s.size,) + (1,) * points.ndim)
    while P.shape[-1] > 1:
        P = (1.0 - w) * P[..., :-1] + w * P[..., 1:]
    return P[..., 0]


@dataclass(frozen=True)
class BezierTrajectory:
    """Per-coordinate Bezier control points over a time window."""

    control_points: np.ndarray  # (n_coords, degree+1)
    t0: float
    tf: float

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        if cp.ndim != 2 or cp.shape[1] < 2:
            raise ValueError("control_points must be (n_coords, degree+1) with degree >= 1")
        if not self.tf > self.t0:
            raise ValueError("tf must exceed t0")
        object.__setattr__(self, "control_points", cp)

    @property
    def degree(self) -> int:
        return self.control_points.shape[1] - 1

    @property
    def n_coords(self) -> int:
        return self.control_points.shape[0]

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def _hodographs(self):
        N = self.degree
        d1 = N * np.diff(self.control_points, axis=1)
        d2 = (N - 1) * np.diff(d1, axis=1) if N >= 2 else np.zeros((self.n_coords, 1))
        return d1, d2

    def eval(self, t):
        """(q, qd, qdd) at time(s) t within [t0, tf]."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < self.t0 - 1e-12) or np.any(t_arr > self.tf + 1e-12):
            raise ValueError(f"t outside [{self.t0}, {self.tf}]")
        s = np.clip((t_arr - self.t0) / self.duration, 0.0, 1.0)
        d1, d2 = self._hodographs()
        q = de_casteljau(self.control_points, s).T
        qd = de_casteljau(d1, s).T / self.duration
        qdd = de_casteljau(d2, s).T / self.duration**2
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return q[:, 0], qd[:, 0], qdd[:, 0]
        return q, qd, qdd

    def sample_s(self, s):
        """(q, qd, qdd) at progress samples, arrays of shape (n_coords, len(s))."""
        d1, d2 = self._hodographs()
        q = de_casteljau(self.control_points, s).T
        qd = de_casteljau(d1, s).T / self.duration
        qdd = de_casteljau(d2, s).T / self.duration**2
        return q, qd, qdd


def pinned_boundary_columns(q0, qd0, qdd0, q1, qd1, qdd1, degree: int, duration: float):
    """First and last three control-point columns enforcing boundary q, qd, qdd."""
    if degree < 5:
        raise ValueError("degree must be at least 5 to pin position, rate and acceleration")
    N = float(degree)
    T = float(duration)
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    qd0 = np.zeros_like(q0) if qd0 is None else np.asarray(qd0, dtype=float)
    qd1 = np.zeros_like(q1) if qd1 is None else np.asarray(qd1, dtype=float)
    qdd0 = np.zeros_like(q0) if qdd0 is None else np.asarray(qdd0, dtype=float)
    qdd1 = np.zeros_like(q1) if qdd1 is None else np.asarray(qdd1, dtype=float)

    p0 = q0
    p1 = q0 + qd0 * T / N
    p2 = qdd0 * T**2 / (N * (N - 1.0)) + 2.0 * p1 - p0
    pN = q1
    pNm1 = q1 - qd1 * T / N
    pNm2 = qdd1 * T**2 / (N * (N - 1.0)) + 2.0 * pNm1 - pN
    return np.stack([p0, p1, p2], axis=1), np.stack([pNm2, pNm1, pN], axis=1)
