"""Command-line surface: scenario files in, CSV/JSON artifacts out.

Subcommands: ``steer-sweep``, ``capability``, ``plan``, ``simulate`` and
``compare-dp``.  Scenario files are JSON with degrees/centimeters at the
boundary; every output embeds the config hash, seed, tool version and
assumption flags.  Exit codes: 0 success, 2 config error, 3 solver
failure, 4 simulation blow-up.
"""

import argparse
import concurrent.futures
import csv
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bem import max_roll_capability
from .control import ArmGains, BalanceGains
from .dp import DpGrid, dp_reference
from .model import RobotModel, default_model, model_from_dict
from .planner import (InfeasibleSegmentError, MissionTiming, MotionLimits, PlannerWeights,
                      SolverFailureError, SolverOptions, plan_mission, plan_segment)
from .sim import Disturbance, Scenario, SimConfig, SimulationBlowUpError, batch_stats, \
    run_scenario
from .steering import SteeringLimits, balance_torque, contact_radius, sensitivity_per_degree
from .units import DEG, deg, pose_vector_from_file_units, rad_to_deg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_BLOWUP = 4


class ConfigError(ValueError):
    """Scenario file failed validation; message carries the field path."""


def _require(cond: bool, where: str, msg: str):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _known_keys(section: dict, allowed, where: str):
    unknown = set(section) - set(allowed)
    _require(not unknown, where, f"unknown keys {sorted(unknown)}")


def _load_config(path: str) -> tuple[dict, str]:
    try:
        raw = Path(path).read_bytes()
    except OSError as err:
        raise ConfigError(f"config: cannot read {path}: {err}") from err
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config: invalid JSON at line {err.lineno} column {err.colno}: "
                          f"{err.msg}") from err
    _require(isinstance(cfg, dict), "config", "top level must be an object")
    return cfg, hashlib.sha256(raw).hexdigest()


def _build_model(cfg: dict) -> RobotModel:
    robot = cfg.get("robot", "default")
    if robot == "default":
        return default_model()
    if isinstance(robot, str):
        try:
            with open(robot) as fh:
                robot = json.load(fh)
        except OSError as err:
            raise ConfigError(f"robot: cannot read {robot}: {err}") from err
    try:
        return model_from_dict(robot)
    except ValueError as err:
        raise ConfigError(f"robot: {err}") from err


def _meta(cfg_hash: str, seed: int, extra: dict | None = None) -> dict:
    meta = {
        "config_sha256": cfg_hash,
        "seed": seed,
        "tool_version": __version__,
        "euler_convention": "ZYX",
    }
    if extra:
        meta.update(extra)
    return meta


def _write_csv(path: Path, meta: dict, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_weights(section: dict, where: str) -> PlannerWeights:
    _known_keys(section, {"lambda", "P", "W1", "W2", "epsilon_pose"}, where)
    kwargs = {}
    if "lambda" in section:
        lam = section["lambda"]
        _require(isinstance(lam, list) and len(lam) == 4, f"{where}.lambda",
                 "must be [lambda1, lambda2, lambda3, lambda4]")
        kwargs.update(lambda1=lam[0], lambda2=lam[1], lambda3=lam[2], lambda4=lam[3])
    for key in ("P", "W1", "W2"):
        if key in section:
            kwargs[key] = np.asarray(section[key], dtype=float)
    if "epsilon_pose" in section:
        kwargs["epsilon_pose"] = float(section["epsilon_pose"])
    try:
        return PlannerWeights(**kwargs)
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from err


def _parse_limits(section: dict, where: str) -> MotionLimits:
    _known_keys(section, {"q_rate_max_degps", "q_acc_max_degps2", "tau_theta_max_Nm",
                          "delta_max_deg", "delta_rate_max_degps", "tau_b_max_Nm"}, where)
    steering = SteeringLimits(
        delta_max=float(section.get("delta_max_deg", 15.0)) * DEG,
        delta_rate_max=float(section.get("delta_rate_max_degps", 20.0)) * DEG,
    )
    tau_theta = section.get("tau_theta_max_Nm")
    try:
        return MotionLimits(
            q_rate_max=float(section.get("q_rate_max_degps", 36.0)) * DEG,
            q_acc_max=float(section.get("q_acc_max_degps2", 120.0)) * DEG,
            tau_theta_max=None if tau_theta is None else np.asarray(tau_theta, dtype=float),
            steering=steering,
            tau_b_max=section.get("tau_b_max_Nm"),
        )
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from err


def _parse_solver(section: dict, where: str, seed: int) -> SolverOptions:
    _known_keys(section, {"restarts", "maxiter", "sigma_deg", "early_stop"}, where)
    return SolverOptions(
        restarts=int(section.get("restarts", 8)),
        maxiter=int(section.get("maxiter", 200)),
        sigma=float(section.get("sigma_deg", 5.0)) * DEG,
        early_stop=section.get("early_stop", 2),
        seed=seed,
    )


def _range_grid(spec, where: str) -> np.ndarray:
    _require(isinstance(spec, list) and len(spec) == 3, where, "must be [start, stop, step]")
    start, stop, step_sz = (float(v) for v in spec)
    _require(step_sz > 0, where, "step must be positive")
    if stop < start:
        return np.empty(0)
    n = int(np.floor((stop - start) / step_sz + 1e-9)) + 1
    return start + step_sz * np.arange(n)


# ---------------------------------------------------------------------------
# subcommands


def cmd_steer_sweep(cfg, cfg_hash, model, out: Path, seed: int) -> int:
    section = cfg.get("steer_sweep", {})
    _known_keys(section, {"phi0_range_deg", "delta_range_deg", "roll_range_deg"}, "steer_sweep")
    phi0 = _range_grid(section.get("phi0_range_deg", [0.0, 180.0, 1.0]),
                       "steer_sweep.phi0_range_deg")
    delta = _range_grid(section.get("delta_range_deg", [-15.0, 15.0, 1.0]),
                        "steer_sweep.delta_range_deg")
    roll = _range_grid(section.get("roll_range_deg", [-10.0, 10.0, 1.0]),
                       "steer_sweep.roll_range_deg")
    meta = _meta(cfg_hash, seed)

    r_rows = [(p, float(contact_radius(p * DEG, 0.0, model.bike))) for p in phi0]
    _write_csv(out / "steer_radius.csv", meta, ["phi0_deg", "r_m"], r_rows)

    s_rows = [(p, float(sensitivity_per_degree(p * DEG, model.bike))) for p in phi0]
    _write_csv(out / "steer_sensitivity.csv", meta, ["phi0_deg", "S_tau_Nm_per_deg"], s_rows)

    surf_rows = []
    for b in roll:
        taus = balance_torque(deg(delta), np.pi / 2, b * DEG, model.bike)
        surf_rows.extend((d, b, float(tau)) for d, tau in zip(delta, np.atleast_1d(taus)))
    _write_csv(out / "steer_torque_surface.csv", meta,
               ["delta_deg", "phi_b_deg", "tau_b_Nm"], surf_rows)

    if len(s_rows):
        peak = max(s_rows, key=lambda r: r[1])
        print(f"peak steering sensitivity {peak[1]:.3f} N m/deg at phi0 = {peak[0]:.1f} deg")
    print(f"wrote steer_radius.csv, steer_sensitivity.csv, steer_torque_surface.csv to {out}")
    return EXIT_OK


def cmd_capability(cfg, cfg_hash, model, out: Path, seed: int) -> int:
    section = cfg.get("capability", {})
    _known_keys(section, {"delta_range_deg", "full_joint_search", "theta_ref_deg"}, "capability")
    delta_range = float(section.get("delta_range_deg", 50.0)) * DEG
    theta_ref = section.get("theta_ref_deg")
    theta_ref = None if theta_ref is None else deg(np.asarray(theta_ref, dtype=float))
    estimates = {}
    for strategy in ("one-wheel", "two-wheel", "two-wheel+arm"):
        est = max_roll_capability(model, strategy, delta_range=delta_range,
                                  theta_ref=theta_ref,
                                  full_joint_search=bool(section.get("full_joint_search", False)))
        estimates[strategy] = {
            "phi_b_max_deg": float(rad_to_deg(est.phi_b_max)),
            "achieving_delta_deg": float(rad_to_deg(est.achieving_delta)),
            "achieving_theta_deg": None if est.achieving_theta is None
            else rad_to_deg(est.achieving_theta).tolist(),
            "tau_max_Nm": est.tau_max,
        }
        print(f"{strategy:14s} max roll {estimates[strategy]['phi_b_max_deg']:6.2f} deg "
              f"(delta* = {estimates[strategy]['achieving_delta_deg']:.1f} deg)")
    payload = {"meta": _meta(cfg_hash, seed), "estimates": estimates}
    _write_json(out / "capability.json", payload)
    print(f"wrote capability.json to {out}")
    return EXIT_OK


def _mission_inputs(cfg, seed):
    section = cfg.get("plan")
    _require(isinstance(section, dict), "plan", "section required")
    _known_keys(section, {"poses", "timing", "weights", "limits", "solver",
                          "include_approach", "ignore_balance_constraints"}, "plan")
    poses_in = section.get("poses")
    _require(isinstance(poses_in, list) and len(poses_in) >= 1, "plan.poses",
             "must list at least one pose 6-vector [x_cm, y_cm, z_cm, yaw_deg, pitch_deg, roll_deg]")
    poses = [pose_vector_from_file_units(np.asarray(p, dtype=float)) for p in poses_in]
    timing_in = section.get("timing", {})
    _known_keys(timing_in, {"hold_s", "transition_s", "t_start_s"}, "plan.timing")
    timing = MissionTiming(hold=float(timing_in.get("hold_s", 15.0)),
                           transition=float(timing_in.get("transition_s", 8.0)),
                           t_start=float(timing_in.get("t_start_s", 0.0)))
    weights = _parse_weights(section.get("weights", {}), "plan.weights")
    limits = _parse_limits(section.get("limits", {}), "plan.limits")
    options = _parse_solver(section.get("solver", {}), "plan.solver", seed)
    include_approach = bool(section.get("include_approach", True))
    ignore_balance = bool(section.get("ignore_balance_constraints", False))
    return poses, timing, weights, limits, options, include_approach, ignore_balance


def cmd_plan(cfg, cfg_hash, model, out: Path, seed: int) -> int:
    poses, timing, weights, limits, options, include_approach, ignore_balance = \
        _mission_inputs(cfg, seed)
    result = plan_mission(model, poses, timing=timing, weights=weights, limits=limits,
                          options=options, include_approach=include_approach,
                          ignore_balance=ignore_balance)
    payload = result.to_dict()
    payload["meta"].update(_meta(cfg_hash, seed, {"w2_padded": result.w2_padded}))
    _write_json(out / "plan.json", payload)

    rows = []
    for j, seg in enumerate(result.segments):
        ts = np.linspace(seg.trajectory.t0, seg.trajectory.tf, 50)
        q, qd, qdd = seg.trajectory.eval(ts)
        for i, t in enumerate(ts):
            rows.append((j, float(t), *(float(v) for v in rad_to_deg(q[:, i])),
                         float(np.max(np.abs(qd[:, i])) / DEG),
                         float(np.max(np.abs(qdd[:, i])) / DEG)))
    nq = model.n + 1
    header = (["segment", "t_s"] + [f"q{i}_deg" for i in range(nq)]
              + ["max_rate_degps", "max_acc_degps2"])
    _write_csv(out / "plan_samples.csv", _meta(cfg_hash, seed), header, rows)
    for j, seg in enumerate(result.segments):
        print(f"segment {j}: cost {seg.cost:.4f}, max violation {seg.max_violation:.2e}, "
              f"{seg.wall_time:.2f} s")
    print(f"wrote plan.json, plan_samples.csv to {out}")
    return EXIT_OK


def cmd_simulate(cfg, cfg_hash, model, out: Path, seed: int, quantized_imu: bool,
                 jobs: int) -> int:
    poses, timing, weights, limits, options, include_approach, ignore_balance = \
        _mission_inputs(cfg, seed)
    section = cfg.get("simulate", {})
    _known_keys(section, {"gains", "sim", "disturbances", "trials", "velocity_correction"},
                "simulate")
    gains_in = section.get("gains", {})
    _known_keys(gains_in, {"k_p", "k_d", "K_p", "kappa", "epsilon_b_deg"}, "simulate.gains")
    balance_gains = BalanceGains(k_p=float(gains_in.get("k_p", 8.5)),
                                 k_d=float(gains_in.get("k_d", 2.0)))
    arm_gains = ArmGains(K_p=np.asarray(gains_in.get("K_p", 1.0), dtype=float),
                         kappa=float(gains_in.get("kappa", 5.0)),
                         epsilon_b=float(gains_in.get("epsilon_b_deg", 0.4)) * DEG)
    sim_in = section.get("sim", {})
    _known_keys(sim_in, {"dt_s", "control_period_s", "duration_s", "integrator",
                         "quantization_deg", "stop_on_loss"}, "simulate.sim")
    quant = sim_in.get("quantization_deg")
    if quantized_imu and quant is None:
        quant = 0.1
    try:
        sim_cfg = SimConfig(
            dt=float(sim_in.get("dt_s", 1e-3)),
            control_period=float(sim_in.get("control_period_s", 1e-2)),
            duration=sim_in.get("duration_s"),
            integrator=sim_in.get("integrator", "rk4"),
            sensor_quantization=None if quant is None else float(quant) * DEG,
            seed=seed,
            stop_on_loss=bool(sim_in.get("stop_on_loss", False)),
        )
    except ValueError as err:
        raise ConfigError(f"simulate.sim: {err}") from err
    disturbances = []
    for i, item in enumerate(section.get("disturbances", [])):
        _known_keys(item, {"t_start_s", "duration_s", "torque_Nm"}, f"simulate.disturbances[{i}]")
        disturbances.append(Disturbance(t_start=float(item["t_start_s"]),
                                        duration=float(item["duration_s"]),
                                        torque=float(item["torque_Nm"])))
    trials = int(section.get("trials", 1))
    _require(trials >= 1, "simulate.trials", "must be >= 1")

    plan = plan_mission(model, poses, timing=timing, weights=weights, limits=limits,
                        options=options, include_approach=include_approach,
                        ignore_balance=ignore_balance)
    scenario = Scenario(model=model, plan=plan, balance_gains=balance_gains,
                        arm_gains=arm_gains, limits=limits, config=sim_cfg,
                        disturbances=tuple(disturbances),
                        velocity_correction=bool(section.get("velocity_correction", True)))
    meta = _meta(cfg_hash, seed, {"w2_padded": plan.w2_padded,
                                  "quantized_imu": quant is not None})

    if trials == 1:
        log = scenario.run()
        log.meta.update(meta)
        log.to_csv(out / "sim_log.csv")
        summary = {"meta": meta, "stats": log.error_stats(),
                   "events": log.events,
                   "hold_stats": _hold_stats(log, plan)}
        _write_json(out / "sim_summary.json", summary)
        stats = summary["stats"]
        print(f"pose error: {stats['position_error_mm']['mean']:.2f} mm mean position, "
              f"{stats['orientation_error_deg']['mean']:.3f} deg mean orientation")
        print(f"wrote sim_log.csv, sim_summary.json to {out}")
        return EXIT_OK

    trial_scenarios = []
    for k in range(trials):
        cfg_k = replace(sim_cfg, seed=seed + k)
        trial_scenarios.append(replace(scenario, config=cfg_k))
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            logs = list(pool.map(_run_trial, trial_scenarios))
    else:
        logs = [s.run() for s in trial_scenarios]
    per_trial = []
    for k, log in enumerate(logs):
        log.meta.update(meta)
        log.meta["trial"] = k
        log.to_csv(out / f"sim_log_trial{k:02d}.csv")
        per_trial.append({"trial": k, "seed": seed + k, **log.error_stats()})
    aggregate = {"meta": meta, "trials": per_trial, "aggregate": batch_stats(logs)}
    _write_json(out / "sim_summary.json", aggregate)
    agg = aggregate["aggregate"]
    print(f"{trials} trials: position {agg['position_error_mm']['mean']:.2f} mm mean, "
          f"orientation {agg['orientation_error_deg']['mean']:.3f} deg mean")
    print(f"wrote per-trial CSVs and sim_summary.json to {out}")
    return EXIT_OK


def _run_trial(scenario: Scenario):
    return scenario.run()


def _hold_stats(log, plan) -> list:
    stats = []
    for t_lo, t_hi, idx in plan.hold_windows():
        mask = log.window(t_lo, t_hi)
        if mask.any():
            stats.append({"pose_index": idx, "t_lo_s": t_lo, "t_hi_s": t_hi,
                          **log.error_stats(mask)})
    return stats


def cmd_compare_dp(cfg, cfg_hash, model, out: Path, seed: int) -> int:
    section = cfg.get("compare_dp", {})
    _known_keys(section, {"q_start_deg", "q_end_deg", "t_span_s", "n_samples",
                          "weights", "limits", "grid", "sweeps"}, "compare_dp")
    _require("q_start_deg" in section and "q_end_deg" in section, "compare_dp",
             "q_start_deg and q_end_deg are required")
    q_start = deg(np.asarray(section["q_start_deg"], dtype=float))
    q_end = deg(np.asarray(section["q_end_deg"], dtype=float))
    t_span = float(section.get("t_span_s", 3.0))
    samples = section.get("n_samples", [50, 100, 200])
    weights = _parse_weights(section.get("weights", {}), "compare_dp.weights")
    limits = _parse_limits(section.get("limits", {}), "compare_dp.limits")
    grid_in = section.get("grid", {})
    _known_keys(grid_in, {"velocity_levels", "margin_frac"}, "compare_dp.grid")
    grid = DpGrid(velocity_levels=int(grid_in.get("velocity_levels", 32)),
                  margin_frac=float(grid_in.get("margin_frac", 0.1)))

    rows = []
    for ns in samples:
        seg = plan_segment(model, q_start, q_end, 0.0, t_span, weights=weights,
                           limits=limits, n_samples=int(ns),
                           options=SolverOptions(restarts=1, seed=seed))
        dp = dp_reference(model, q_start, q_end, 0.0, t_span, weights=weights,
                          limits=limits, n_samples=int(ns), grid=grid,
                          sweeps=int(section.get("sweeps", 3)))
        rows.append((int(ns), seg.cost, seg.wall_time, dp.cost, dp.wall_time,
                     dp.wall_time / seg.wall_time))
        print(f"N_s={ns:4d}: proposed {seg.wall_time:7.2f} s (cost {seg.cost:.5f}), "
              f"DP {dp.wall_time:8.2f} s (cost {dp.cost:.5f}), "
              f"time ratio {dp.wall_time / seg.wall_time:6.1f}")
    header = ["n_samples", "bezier_cost", "bezier_time_s", "dp_cost", "dp_time_s", "time_ratio"]
    _write_csv(out / "compare_dp.csv", _meta(cfg_hash, seed), header, rows)
    _write_json(out / "compare_dp.json", {
        "meta": _meta(cfg_hash, seed),
        "rows": [dict(zip(header, row)) for row in rows],
    })
    print(f"wrote compare_dp.csv, compare_dp.json to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bikebot",
        description="Balance-prioritized planning, control and simulation toolkit")
    parser.add_argument("command",
                        choices=["steer-sweep", "capability", "plan", "simulate", "compare-dp"])
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for batch runs")
    parser.add_argument("--quantized-imu", action="store_true",
                        help="simulate with 0.1 deg roll measurement resolution")
    args = parser.parse_args(argv)

    try:
        cfg, cfg_hash = _load_config(args.config)
        known_top = {"robot", "seed", "steer_sweep", "capability", "plan", "simulate",
                     "compare_dp"}
        _known_keys(cfg, known_top, "config")
        model = _build_model(cfg)
        seed = int(cfg.get("seed", 0)) if args.seed is None else args.seed
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "steer-sweep":
            return cmd_steer_sweep(cfg, cfg_hash, model, out, seed)
        if args.command == "capability":
            return cmd_capability(cfg, cfg_hash, model, out, seed)
        if args.command == "plan":
            return cmd_plan(cfg, cfg_hash, model, out, seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, cfg_hash, model, out, seed, args.quantized_imu, args.jobs)
        return cmd_compare_dp(cfg, cfg_hash, model, out, seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailureError, InfeasibleSegmentError) as err:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "error.json", {"error": type(err).__name__, "message": str(err)})
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except SimulationBlowUpError as err:
        print(f"simulation blow-up: {err}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
