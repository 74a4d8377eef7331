"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see them
live).  Shared heavy artifacts (mission plans, closed-loop logs, timing
sweeps) are built once in module fixtures.
"""

import time

import numpy as np
import pytest

from bikebot.bem import bem_point, max_roll_capability, solve_equilibrium_roll
from bikebot.control import ArmGains, BalanceGains, tracking_error_report
from bikebot.dp import DpGrid, dp_reference
from bikebot.dynamics import (coriolis_matrix, energies, gravity_roll_torque, gravity_vector,
                              mass_matrix)
from bikebot.model import (BikebotParams, LinkParams, RobotModel, body_kinematics,
                           default_model, ee_pose_vector)
from bikebot.planner import (MissionTiming, MotionLimits, PlannerWeights, SolverOptions, bpik,
                             plan_mission, plan_segment)
from bikebot.sim import Disturbance, Scenario, SimConfig, hold_plan, run_scenario
from bikebot.steering import (SteeringLimits, balance_torque, balance_torque_90,
                              invert_balance_torque_90, max_torque_magnitude,
                              steering_sensitivity)
from bikebot.units import DEG

from test_steering import geometric_contact_line_torque


def _report(criterion: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def model():
    return default_model()


@pytest.fixture(scope="module")
def toy_model():
    return RobotModel(
        bike=BikebotParams(),
        links=(
            LinkParams(alpha=90 * DEG, a=0.0, d=0.2, m=1.0,
                       inertia=np.diag([2e-3, 2e-3, 1e-3])),
            LinkParams(alpha=0.0, a=0.3, d=0.0, m=0.8,
                       inertia=np.diag([1e-3, 8e-3, 8e-3])),
        ),
    )


TOY_WEIGHTS = PlannerWeights(W1=np.full(3, 0.02), W2=np.full(3, 1.0))


@pytest.fixture(scope="module")
def toy_endpoints(toy_model):
    th_a = np.array([0.0, -25 * DEG])
    th_b = np.array([30 * DEG, 20 * DEG])
    qa = np.concatenate([[solve_equilibrium_roll(toy_model, th_a, 0.0)], th_a])
    qb = np.concatenate([[solve_equilibrium_roll(toy_model, th_b, 0.0)], th_b])
    return qa, qb


def test_criterion_01_steering_sensitivity(model):
    t0 = time.perf_counter()
    bike = model.bike
    s90 = float(steering_sensitivity(np.pi / 2, bike)) * DEG  # N m / deg
    s0 = float(steering_sensitivity(0.0, bike))
    grid = np.arange(0.0, 180.0 + 1e-9, 0.1) * DEG
    vals = steering_sensitivity(grid, bike)
    argmax = grid[int(np.argmax(vals))]
    elapsed = time.perf_counter() - t0
    ok = (abs(s90 - 0.87) <= 0.01 and s0 == 0.0
          and abs(argmax - np.pi / 2) <= 0.5 * DEG and elapsed < 1.0)
    _report("criterion 1 (steering sensitivity)", ok,
            f"S(90deg)={s90:.4f} N m/deg, S(0)={s0}, argmax={argmax / DEG:.2f} deg, "
            f"{elapsed * 1e3:.0f} ms")


def test_criterion_02_torque_model_consistency(model):
    bike = model.bike
    deltas = np.linspace(-15 * DEG, 15 * DEG, 100)
    closed = balance_torque_90(deltas, bike.m_b, bike)
    general = balance_torque(deltas, np.pi / 2, 0.0, bike)
    rel = np.max(np.abs(general - closed)) / np.max(np.abs(closed))
    oracle_err = 0.0
    for phi0 in (np.pi / 2, 75 * DEG, 105 * DEG):
        for phi_b in (0.0, 5 * DEG, -4 * DEG):
            for d in (-12 * DEG, -4 * DEG, 3 * DEG, 11 * DEG):
                want = geometric_contact_line_torque(d, phi0, phi_b, bike, bike.m_b)
                got = float(balance_torque(d, phi0, phi_b, bike))
                oracle_err = max(oracle_err, abs(got - want))
    want90 = np.array([geometric_contact_line_torque(d, np.pi / 2, 0.0, bike, bike.m_b)
                       for d in deltas])
    oracle_err90 = np.max(np.abs(closed - want90))
    zero = float(balance_torque_90(0.0, bike.m_b, bike))
    odd = np.max(np.abs(balance_torque_90(deltas, bike.m_b, bike)
                        + balance_torque_90(-deltas, bike.m_b, bike)))
    ok = rel <= 1e-9 and oracle_err <= 1e-6 and oracle_err90 <= 1e-6 \
        and zero == 0.0 and odd <= 1e-12
    _report("criterion 2 (torque model self-consistency)", ok,
            f"90deg rel err={rel:.2e}, oracle err={max(oracle_err, oracle_err90):.2e}, "
            f"tau(0)={zero}, odd defect={odd:.2e}")


def test_criterion_03_dynamics_properties(model):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    N = 1000
    q = rng.uniform(-0.45, 0.45, size=(N, model.n + 1))
    qd = rng.uniform(-1.0, 1.0, size=(N, model.n + 1))

    D = mass_matrix(model, q)
    sym = float(np.max(np.abs(D - np.swapaxes(D, -1, -2))))
    pd_min = float(np.min(np.linalg.eigvalsh(D)))

    C = coriolis_matrix(model, q, qd)
    h = 1e-6
    Ddot = (mass_matrix(model, q + h * qd) - mass_matrix(model, q - h * qd)) / (2 * h)
    S = Ddot - 2 * C
    skew = float(np.max(np.abs(S + np.swapaxes(S, -1, -2))))

    # G against central differences of the potential, batched
    nq = model.n + 1
    eye = np.eye(nq)
    probes = np.concatenate([q[:, None, :] + h * eye, q[:, None, :] - h * eye], axis=1)
    coms_p, _, _, _ = body_kinematics(model, probes.reshape(-1, nq))
    masses = np.array([model.bike.m_b] + [lk.m for lk in model.links])
    U = model.bike.g * np.einsum("b,xb->x", masses, coms_p[:, :, 2]).reshape(N, 2 * nq)
    G_fd = (U[:, :nq] - U[:, nq:]) / (2 * h)
    G = gravity_vector(model, q)
    g_rel = float(np.max(np.abs(G - G_fd)) / np.max(np.abs(G)))

    # body position Jacobians and the end-effector Jacobian against differences
    _, _, Jv, _ = body_kinematics(model, q)
    coms_pm = coms_p.reshape(N, 2, nq, nq + 1, 3)
    Jv_fd = (coms_pm[:, 0] - coms_pm[:, 1]) / (2 * h)       # (N, j, body, 3)
    Jv_fd = np.moveaxis(Jv_fd, 1, -1)                        # (N, body, 3, j)
    jac_err = float(np.max(np.abs(Jv - Jv_fd)))
    scale = float(np.max(np.abs(Jv)))

    xi = ee_pose_vector(model, probes.reshape(-1, nq)).reshape(N, 2, nq, 6)
    from bikebot.model import system_jacobian

    Je = system_jacobian(model, q)
    Je_fd = np.moveaxis((xi[:, 0, :, :3] - xi[:, 1, :, :3]) / (2 * h), 1, -1)
    je_err = float(np.max(np.abs(Je[:, :3, :] - Je_fd)))

    elapsed = time.perf_counter() - t0
    ok = (sym <= 1e-9 and pd_min > 0 and skew <= 1e-6 and g_rel <= 1e-4
          and jac_err <= 1e-5 * max(1.0, scale) and je_err <= 1e-5 * max(1.0, scale)
          and elapsed < 60.0)
    _report("criterion 3 (dynamics properties, 1000 configs)", ok,
            f"sym={sym:.1e}, min eig={pd_min:.3f}, skew={skew:.1e}, G rel={g_rel:.1e}, "
            f"Jv err={jac_err:.1e}, Je err={je_err:.1e}, {elapsed:.1f} s")


@pytest.fixture(scope="module")
def capabilities(model):
    return {s: max_roll_capability(model, s)
            for s in ("one-wheel", "two-wheel", "two-wheel+arm")}


def test_criterion_04_bem_equilibria_and_capability(model, toy_model, capabilities):
    sym_roll = solve_equilibrium_roll(toy_model, np.zeros(2), 0.0)
    pt = bem_point(model, np.array([10, -30, 40, 15, -20, 5.]) * DEG, 0.04)
    one, two, arm = (capabilities[s].phi_b_max / DEG
                     for s in ("one-wheel", "two-wheel", "two-wheel+arm"))
    ok = (abs(sym_roll) <= 1e-9 and abs(pt.residual) <= 1e-8
          and one < two < arm and abs(two - 5.6) <= 1.5)
    _report("criterion 4 (BEM equilibria, ordering, two-wheel capability)", ok,
            f"symmetric roll={sym_roll:.1e} rad, residual={pt.residual:.1e} N m, "
            f"capability {one:.2f} < {two:.2f} < {arm:.2f} deg, two-wheel in 5.6+-1.5")


def test_criterion_04_arm_assisted_capability_window(capabilities):
    """Arm-assisted maximum roll within 11.6 +- 2.5 deg.

    Known red: with the published link masses and midpoint mass-center
    defaults the arm's peak lateral moment is ~1.47 kg m, which caps the
    estimate near 8.4 deg (see the decisions ledger for the analysis).
    """
    arm = capabilities["two-wheel+arm"].phi_b_max / DEG
    ok = abs(arm - 11.6) <= 2.5
    _report("criterion 4b (arm-assisted capability window)", ok,
            f"arm-assisted={arm:.2f} deg vs 11.6+-2.5 deg")


def test_criterion_05_bpik_round_trip(model):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    limits = MotionLimits()
    tau_cap = limits.balance_torque_cap(model)
    count = 0
    worst_pos = 0.0
    worst_ori = 0.0
    while count < 50:
        theta = rng.uniform(-0.9, 0.9, model.n)
        delta = rng.uniform(-10 * DEG, 10 * DEG)
        try:
            pt = bem_point(model, theta, delta)
        except Exception:
            continue
        if 1.5 * abs(gravity_roll_torque(model, pt.q_e.q)) > tau_cap:
            continue
        target = ee_pose_vector(model, pt.q_e.q)
        res = bpik(model, target, limits=limits, prev_q=pt.q_e.q,
                   options=SolverOptions(restarts=8, seed=count))
        assert 1.5 * abs(res.g_b) <= tau_cap + 1e-8
        worst_pos = max(worst_pos, res.position_error)
        worst_ori = max(worst_ori, res.orientation_error)
        count += 1
    elapsed = time.perf_counter() - t0
    ok = worst_pos <= 1e-3 and worst_ori <= 0.1 * DEG and elapsed < 300.0
    _report("criterion 5 (BPIK round trip, 50 poses)", ok,
            f"worst position={worst_pos * 1e3:.4f} mm, worst orientation="
            f"{worst_ori / DEG:.4f} deg, {elapsed:.0f} s")


@pytest.fixture(scope="module")
def toy_comparison(toy_model, toy_endpoints):
    qa, qb = toy_endpoints
    rows = {}
    for ns in (50, 100, 200):
        seg = plan_segment(toy_model, qa, qb, 0.0, 3.0, weights=TOY_WEIGHTS,
                           n_samples=ns, options=SolverOptions(restarts=1))
        dp = dp_reference(toy_model, qa, qb, 0.0, 3.0, weights=TOY_WEIGHTS,
                          n_samples=ns, grid=DpGrid(velocity_levels=48), sweeps=3)
        rows[ns] = (seg, dp)
    return rows


def test_criterion_06_trajectory_optimality(toy_model, toy_endpoints, toy_comparison):
    qa, qb = toy_endpoints
    seg, dp = toy_comparison[50]
    rel = abs(seg.cost - dp.cost) / dp.cost
    q0, qd0, qdd0 = seg.trajectory.eval(0.0)
    q1, qd1, qdd1 = seg.trajectory.eval(3.0)
    boundary = max(np.max(np.abs(q0 - qa)), np.max(np.abs(q1 - qb)),
                   np.max(np.abs(qd0)), np.max(np.abs(qd1)),
                   np.max(np.abs(qdd0)), np.max(np.abs(qdd1)))
    ok = (rel <= 0.05 and boundary <= 1e-12
          and seg.max_violation <= 1e-8 and seg.audit_violation <= 1e-4)
    _report("criterion 6 (trajectory optimality vs DP)", ok,
            f"cost gap={100 * rel:.2f}% (bezier {seg.cost:.5f} vs DP {dp.cost:.5f}), "
            f"boundary defect={boundary:.1e}, collocation viol={seg.max_violation:.1e}, "
            f"audit viol={seg.audit_violation:.1e}")


def test_criterion_07_planner_vs_dp_timing(toy_comparison):
    ratios = {ns: dp.wall_time / seg.wall_time for ns, (seg, dp) in toy_comparison.items()}
    ok = ratios[50] >= 10.0 and ratios[100] > ratios[50] and ratios[200] > ratios[100]
    times = {ns: (f"{seg.wall_time:.2f}s", f"{dp.wall_time:.1f}s")
             for ns, (seg, dp) in toy_comparison.items()}
    _report("criterion 7 (planner vs DP wall time)", ok,
            f"ratios {ratios[50]:.1f} -> {ratios[100]:.1f} -> {ratios[200]:.1f} "
            f"(bezier, DP times: {times})")


BALANCE_LIMITS = MotionLimits(
    steering=SteeringLimits(delta_max=45 * DEG, delta_rate_max=100 * DEG))


def test_criterion_08_closed_loop_balance(model):
    bare = model.with_massless_arm()
    plan = hold_plan(bare, np.zeros(bare.n + 1), hold=15.0)
    q0 = np.zeros(bare.n + 1)
    q0[0] = 4 * DEG
    cfg = SimConfig(duration=15.0, integrator="semi-implicit-euler")
    log = run_scenario(bare, plan, BalanceGains(k_p=8.5, k_d=2.0), limits=BALANCE_LIMITS,
                       config=cfg, initial_state=(q0, np.zeros(bare.n + 1)))
    k10 = np.searchsorted(log.t, 10.0)
    e10 = abs(log.e_b[k10]) / DEG
    report = tracking_error_report(bare, log.t, log.q, log.q_ref, log.pose_error)
    decay_ok = report.decay_rate >= 0.9 * (2.0 / 2.0)

    q0q = np.zeros(bare.n + 1)
    q0q[0] = 0.3 * DEG
    cfgq = SimConfig(duration=10.0, integrator="semi-implicit-euler",
                     sensor_quantization=0.1 * DEG)
    logq = run_scenario(bare, plan, BalanceGains(k_p=8.5, k_d=2.0), limits=BALANCE_LIMITS,
                        config=cfgq, initial_state=(q0q, np.zeros(bare.n + 1)))
    tail = logq.delta[logq.t > 5.0]
    flips = int(np.sum(np.abs(np.diff(np.sign(np.diff(tail)))) > 0))
    chatter = flips > 20 and tail.std() > 0.1 * DEG

    ok = e10 < 0.1 and decay_ok and chatter
    _report("criterion 8 (closed-loop balance)", ok,
            f"|e_b|(10s)={e10:.2e} deg, fitted decay={report.decay_rate:.3f} "
            f"(need >= 0.9), quantized-mode chattering: {flips} direction flips, "
            f"delta std={tail.std() / DEG:.2f} deg")


@pytest.fixture(scope="module")
def mission(model):
    limits = MotionLimits(steering=SteeringLimits(delta_max=15 * DEG,
                                                  delta_rate_max=100 * DEG))
    th1 = np.array([10, -35, 55, 10, -25, 5.]) * DEG
    phi1 = solve_equilibrium_roll(model, th1, 0.02)
    q1 = np.concatenate([[phi1], th1])
    q2 = np.concatenate([[phi1], th1 + np.array([0, 4, -5, 3, 4, -3.]) * DEG])
    q3 = np.concatenate([[phi1], th1 + np.array([-3, 7, -3, -4, 7, 4.]) * DEG])
    th4 = th1 + np.array([14, -8, 6, 10, -6, 8.]) * DEG
    phi4 = solve_equilibrium_roll(model, th4, -0.06)
    q4 = np.concatenate([[phi4], th4])
    poses = [ee_pose_vector(model, q) for q in (q1, q2, q3, q4)]
    plan = plan_mission(model, poses, timing=MissionTiming(hold=6.0, transition=6.0),
                        limits=limits, options=SolverOptions(restarts=2, early_stop=1),
                        start_q=q1, include_approach=False)
    return {"plan": plan, "limits": limits, "poses": poses, "q1": q1}


def _mission_scenario(model, mission, **kwargs):
    cfg = SimConfig(dt=2e-3, integrator="semi-implicit-euler")
    return Scenario(model=model, plan=mission["plan"], balance_gains=BalanceGains(),
                    arm_gains=ArmGains(), limits=mission["limits"], config=cfg, **kwargs)


def test_criterion_09_mission_reproduction(model, mission):
    plan = mission["plan"]
    log = _mission_scenario(model, mission).run()
    worst_pos = 0.0
    worst_ori = 0.0
    for t_lo, t_hi, _ in plan.hold_windows():
        mask = log.window(t_lo + 1.0, t_hi)  # settled part of each hold
        if not mask.any():
            continue
        stats = log.error_stats(mask)
        worst_pos = max(worst_pos, stats["position_error_mm"]["max"])
        worst_ori = max(worst_ori, stats["orientation_error_deg"]["max"])
    clean_ok = worst_pos <= 5.0 and worst_ori <= 0.3 and not log.balance_lost.any()

    # 0.4 deg class roll disturbance during the second transition
    seg2 = plan.trajectories[1]
    pulse = Disturbance(t_start=seg2.t0 + 1.0, duration=0.5, torque=4.0)
    with_corr = _mission_scenario(model, mission, disturbances=(pulse,)).run()
    without = _mission_scenario(model, mission, disturbances=(pulse,),
                                velocity_correction=False).run()
    peak = np.abs(with_corr.e_b).max() / DEG
    disturbance_class_ok = 0.1 <= peak <= 1.2
    s_with = with_corr.error_stats()
    s_without = without.error_stats()
    correction_ok = (s_without["position_error_mm"]["mean"]
                     > s_with["position_error_mm"]["mean"]
                     and s_without["orientation_error_deg"]["mean"]
                     > s_with["orientation_error_deg"]["mean"])

    ok = clean_ok and disturbance_class_ok and correction_ok
    _report("criterion 9 (mission reproduction)", ok,
            f"hold errors max {worst_pos:.3f} mm / {worst_ori:.4f} deg; disturbance peak "
            f"{peak:.2f} deg; correction on/off position "
            f"{s_with['position_error_mm']['mean']:.3f}/"
            f"{s_without['position_error_mm']['mean']:.3f} mm, orientation "
            f"{s_with['orientation_error_deg']['mean']:.4f}/"
            f"{s_without['orientation_error_deg']['mean']:.4f} deg")


def test_criterion_09_balance_priority_ablation(model, mission):
    limits = mission["limits"]
    q1 = mission["q1"]
    # a pose needing far more gravity torque than the steering can supply
    th_bad = np.array([85, -60, 25, 10, -6, 8.]) * DEG
    q_bad = np.concatenate([[6 * DEG], th_bad])
    tau_range, _ = max_torque_magnitude(model.total_mass, model.bike,
                                        limits.steering.delta_max)
    assert abs(gravity_roll_torque(model, q_bad)) > tau_range  # truly infeasible
    poses = [ee_pose_vector(model, q1), ee_pose_vector(model, q_bad)]
    plan = plan_mission(model, poses, timing=MissionTiming(hold=3.0, transition=6.0),
                        limits=limits, options=SolverOptions(restarts=1),
                        start_q=q1, include_approach=False, ignore_balance=True)
    cfg = SimConfig(dt=2e-3, integrator="semi-implicit-euler", stop_on_loss=True)
    log = run_scenario(model, plan, BalanceGains(), ArmGains(), limits=limits, config=cfg)
    lost = bool(log.balance_lost.any())
    seg = plan.trajectories[0]
    lost_in_transition = any(seg.t0 <= e["t"] <= seg.tf + 3.0
                             for e in log.events if e["event"] == "balance_lost")
    _report("criterion 9b (balance-priority ablation)", lost and lost_in_transition,
            f"balance lost={lost}, during/after the transition={lost_in_transition}, "
            f"events={log.events}")


def test_criterion_10_determinism(model, mission):
    a = _mission_scenario(model, mission)
    cfg = SimConfig(dt=2e-3, integrator="semi-implicit-euler", duration=3.0)
    s1 = Scenario(model=model, plan=mission["plan"], balance_gains=BalanceGains(),
                  arm_gains=ArmGains(), limits=mission["limits"], config=cfg)
    s2 = Scenario(model=model, plan=mission["plan"], balance_gains=BalanceGains(),
                  arm_gains=ArmGains(), limits=mission["limits"], config=cfg)
    bytes1 = s1.run().csv_bytes()
    bytes2 = s2.run().csv_bytes()
    ok = bytes1 == bytes2
    _report("criterion 10 (determinism)", ok,
            f"repeated run CSV identical: {ok} ({len(bytes1)} bytes)")
