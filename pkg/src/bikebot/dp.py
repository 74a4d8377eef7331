"""Dynamic-programming reference solver for segment trajectory optimization.

Exact value iteration on a time-discretized level grid, run coordinate-wise
(other coordinates frozen at the incumbent path) and swept until no
improvement.  States are consecutive-sample pairs stored in banded form
(only pairs within the rate window are reachable), so rate limits bound
the transition step and acceleration limits bound the second difference,
both at grid resolution; joint-torque bounds are audited on the returned
path.  It shares the segment cost terms with the Bezier planner and
serves as the desk-scale optimality and timing oracle: grid resolution
refines with the number of time samples, so its wall time grows
superlinearly with the sample count while the Bezier solver stays
near-linear.
"""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import gravity_gradient, gravity_roll_torque, inverse_dynamics
from .model import RobotModel, as_q
from .planner import MotionLimits, PlannerWeights
from .steering import h_max, max_torque_magnitude
from .units import DEG

MAX_BP_BYTES = 500_000_000  # backpointer memory guard, per coordinate pass


@dataclass(frozen=True)
class DpGrid:
    velocity_levels: int = 32     # rate window half-width in grid steps at 50 samples
    margin_frac: float = 0.1      # grid margin beyond the endpoint span
    min_margin: float = 1.0 * DEG
    scale_with_samples: bool = True  # refine levels ~ sqrt(samples/50)

    def step(self, rate_max: float, dt: float, n_samples: int) -> float:
        levels = self.velocity_levels
        if self.scale_with_samples:
            levels = max(4, int(round(self.velocity_levels * np.sqrt(n_samples / 50.0))))
        return rate_max * dt / levels


@dataclass(frozen=True)
class DpResult:
    path: np.ndarray              # (n_samples, n+1)
    cost: float
    wall_time: float
    sweeps_run: int
    levels: tuple
    acc_violation: float          # beyond the grid-resolution acceleration window
    torque_violation: float


def _coordinate_grid(qs: float, qe: float, step: float, grid: DpGrid,
                     lo: float, hi: float) -> tuple[np.ndarray, int, int]:
    """Uniform levels containing both endpoints exactly."""
    move = qe - qs
    if abs(move) > step / 2.0:
        k = max(1, round(abs(move) / step))
        step = abs(move) / k
    margin_steps = int(np.ceil(max(grid.margin_frac * abs(move), grid.min_margin) / step))
    if abs(move) > step / 2.0:
        idx = np.arange(-margin_steps, round(abs(move) / step) + margin_steps + 1)
        levels = qs + np.sign(move) * step * idx
        if move < 0:
            levels = levels[::-1]
    else:
        levels = qs + step * np.arange(-margin_steps, margin_steps + 1)
    keep = (levels >= lo - 1e-12) & (levels <= hi + 1e-12)
    levels = np.ascontiguousarray(levels[keep])
    i_start = int(np.argmin(np.abs(levels - qs)))
    i_end = int(np.argmin(np.abs(levels - qe)))
    return levels, i_start, i_end


def _coordinate_dp(stage_cost, vel_cost_of, feas_mask, m, i_start, i_end,
                   w_rate, w_acc, n_stages):
    """Banded pair-state forward value iteration with rest endpoints.

    State at stage k is the pair (q_{k-1}, q_k), stored as
    ``F[cur, prev - cur + w_rate]``; transitions bound |step| by ``w_rate``
    and |second difference| by ``w_acc`` grid units.
    """
    INF = np.inf
    nb = 2 * w_rate + 1
    F = np.full((m, nb), INF)
    F[i_start, w_rate] = stage_cost[0, i_start] + stage_cost[1, i_start]
    bps = np.zeros((max(n_stages - 2, 0), m, nb), dtype=np.int8)
    for k in range(2, n_stages):
        newF = np.full((m, nb), INF)
        bp_k = bps[k - 2]
        for d in range(-w_rate, w_rate + 1):
            c_lo, c_hi = max(0, d), m + min(0, d)
            if c_lo >= c_hi:
                continue
            best = None
            bestarg = None
            for e in range(-w_acc, w_acc + 1):
                prev_off = e - d           # a - b for predecessor pair (a, b)
                if abs(prev_off) > w_rate:
                    continue
                vec = F[c_lo - d:c_hi - d, w_rate + prev_off]
                if best is None:
                    best = vec.copy()
                    bestarg = np.full(vec.shape, e, dtype=np.int8)
                else:
                    upd = vec < best
                    best[upd] = vec[upd]
                    bestarg[upd] = e
            if best is None:
                continue
            cs = np.arange(c_lo, c_hi)
            total = best + vel_cost_of(d) + stage_cost[k, c_lo:c_hi]
            if feas_mask is not None:
                total = np.where(feas_mask(k, d, cs), total, INF)
            newF[c_lo:c_hi, w_rate - d] = total
            bp_k[c_lo:c_hi, w_rate - d] = bestarg
        # rest boundaries pin three samples at each end (position, rate and
        # acceleration), matching the segment formulation exactly
        if k == 2:
            val = newF[i_start, w_rate]
            newF[:] = INF
            newF[i_start, w_rate] = val
        if k >= n_stages - 3:
            keep = newF[i_end].copy()
            newF[:] = INF
            newF[i_end] = keep
            if k >= n_stages - 2:
                val = keep[w_rate]
                newF[i_end, :] = INF
                newF[i_end, w_rate] = val
        F = newF
        if not np.isfinite(F).any():
            return None, None
    if n_stages >= 3 and not np.isfinite(F[i_end, w_rate]):
        return None, None
    idx = np.zeros(n_stages, dtype=int)
    b, c = i_end, i_end
    idx[n_stages - 1] = c
    idx[n_stages - 2] = b
    for k in range(n_stages - 1, 1, -1):
        e = int(bps[k - 2][c, w_rate + (b - c)])
        a = 2 * b - c + e
        idx[k - 2] = a
        b, c = a, b
    return float(F[i_end, w_rate]), idx


def dp_reference(model: RobotModel, q_start, q_end, t0: float, tf: float,
                 weights: PlannerWeights | None = None,
                 limits: MotionLimits | None = None,
                 n_samples: int = 50,
                 grid: DpGrid | None = None,
                 sweeps: int = 3,
                 prev_gb: float | None = None) -> DpResult:
    """Discrete-optimal segment trajectory on a level grid (rest-to-rest)."""
    weights = PlannerWeights() if weights is None else weights
    limits = MotionLimits() if limits is None else limits
    grid = DpGrid() if grid is None else grid
    wall0 = time.perf_counter()

    q_start = as_q(q_start, model)
    q_end = as_q(q_end, model)
    nq = model.n + 1
    _, W1, W2, _ = weights.resolve(nq)
    T = tf - t0
    gb_ref = float(gravity_roll_torque(model, q_start)) if prev_gb is None else float(prev_gb)

    if n_samples == 1:
        gb = gravity_roll_torque(model, q_start)
        cost = T * float((gb - gb_ref) ** 2)
        return DpResult(path=q_start[None, :], cost=cost, wall_time=time.perf_counter() - wall0,
                        sweeps_run=0, levels=(1,) * nq, acc_violation=0.0, torque_violation=0.0)
    if n_samples < 5:
        raise ValueError("n_samples must be 1 or at least 5")

    dt = T / (n_samples - 1)
    quad = np.full(n_samples, dt)
    quad[0] = quad[-1] = dt / 2.0

    tau_cap = limits.balance_torque_cap(model)
    tau_range, _ = max_torque_magnitude(model.total_mass, model.bike, limits.steering.delta_max)
    g_cap = min(tau_cap / weights.lambda4, tau_range)
    vel_bound = h_max(model.total_mass, model.bike, limits.steering.delta_max) \
        * limits.steering.delta_rate_max

    def build_levels(step):
        levels, starts, ends = [], [], []
        for c in range(nq):
            L, i0, i1 = _coordinate_grid(q_start[c], q_end[c], step, grid,
                                         model.q_lower[c], model.q_upper[c])
            levels.append(L)
            starts.append(i0)
            ends.append(i1)
        return levels, starts, ends

    def bp_bytes(levels, step):
        w = max(1, int(np.floor(limits.q_rate_max * dt / step + 1e-9)))
        return n_samples * max(L.size for L in levels) * (2 * w + 1)

    step = grid.step(limits.q_rate_max, dt, n_samples)
    levels, starts, ends = build_levels(step)
    if bp_bytes(levels, step) > MAX_BP_BYTES:
        scale = np.sqrt(bp_bytes(levels, step) / MAX_BP_BYTES)
        step *= scale
        levels, starts, ends = build_levels(step)
        warnings.warn(f"DP grid coarsened by {scale:.2f}x to fit the backpointer "
                      "memory budget", stacklevel=2)
        if bp_bytes(levels, step) > 2 * MAX_BP_BYTES:
            raise ValueError("DP grid too large even after coarsening")

    # quintic rest-to-rest incumbent, snapped to the grids
    s = np.linspace(0.0, 1.0, n_samples)
    blend = 10 * s**3 - 15 * s**4 + 6 * s**5
    X = q_start[None, :] + blend[:, None] * (q_end - q_start)[None, :]
    for c in range(nq):
        X[:, c] = levels[c][np.argmin(np.abs(X[:, c][:, None] - levels[c][None, :]), axis=1)]
    X[:3] = q_start
    X[-3:] = q_end

    def total_cost(P):
        e = P - q_start
        gb = gravity_roll_torque(model, P)
        state = np.einsum("si,i,si->s", e, W1, e) + (gb - gb_ref) ** 2
        v = (P[1:] - P[:-1]) / dt
        vel = np.einsum("si,i,si->s", v, W2, v)
        return float(quad @ state + dt * vel.sum())

    cost = total_cost(X)
    sweeps_run = 0
    for sweep in range(sweeps):
        improved = False
        for c in range(nq):
            L = levels[c]
            m = L.size
            if m < 2:
                continue
            dq = L[1] - L[0]
            w_rate = max(1, int(np.floor(limits.q_rate_max * dt / abs(dq) + 1e-9)))
            w_acc = max(1, int(np.floor(limits.q_acc_max * dt**2 / abs(dq) + 1e-9)))

            Qgrid = np.repeat(X[:, None, :], m, axis=1)
            Qgrid[:, :, c] = L[None, :]
            flat = Qgrid.reshape(-1, nq)
            gb = gravity_roll_torque(model, flat).reshape(n_samples, m)
            JG = gravity_gradient(model, flat).reshape(n_samples, m, nq)
            e_c = L[None, :] - q_start[c]
            state = quad[:, None] * (W1[c] * e_c**2 + (gb - gb_ref) ** 2)
            state = np.where(np.abs(gb) <= g_cap, state, np.inf)

            V_other = np.zeros_like(X)
            V_other[1:] = (X[1:] - X[:-1]) / dt
            V_other[:, c] = 0.0
            jg_dot_other = np.einsum("smi,si->sm", JG, V_other)
            jg_c = JG[:, :, c]

            def vel_cost_of(d):
                v = d * dq / dt
                return dt * (W2[c] * v * v)

            def feas_mask(k, d, cs):
                v = d * dq / dt
                tot = jg_dot_other[k, cs] + jg_c[k, cs] * v
                return np.abs(tot) <= vel_bound

            res = _coordinate_dp(state, vel_cost_of, feas_mask, m,
                                 starts[c], ends[c], w_rate, w_acc, n_samples)
            if res[0] is None:
                continue
            _, idx_path = res
            X_new = X.copy()
            X_new[:, c] = L[idx_path]
            new_cost = total_cost(X_new)
            if new_cost < cost - 1e-12:
                X = X_new
                cost = new_cost
                improved = True
        sweeps_run = sweep + 1
        if not improved:
            break

    # audits on the final path
    V = np.zeros_like(X)
    V[1:-1] = (X[2:] - X[:-2]) / (2 * dt)
    A = np.zeros_like(X)
    A[1:-1] = (X[2:] - 2 * X[1:-1] + X[:-2]) / dt**2
    grid_acc_slack = np.array([(levels[c][1] - levels[c][0]) if levels[c].size > 1 else 0.0
                               for c in range(nq)]) / dt**2
    acc_viol = float(max(0.0, np.max(np.abs(A) - limits.q_acc_max - grid_acc_slack)))
    tau = inverse_dynamics(model, X, V, A)
    tau_lim = limits.joint_torque_limits(model.n)
    torque_viol = float(max(0.0, np.max(np.abs(tau[:, 1:]) - tau_lim)))
    if acc_viol > 1e-9 or torque_viol > 1e-9:
        warnings.warn(f"DP path exceeds audited limits (acc {acc_viol:.2e}, "
                      f"torque {torque_viol:.2e})", stacklevel=2)

    return DpResult(
        path=X, cost=cost, wall_time=time.perf_counter() - wall0,
        sweeps_run=sweeps_run, levels=tuple(L.size for L in levels),
        acc_violation=acc_viol, torque_violation=torque_viol,
    )
