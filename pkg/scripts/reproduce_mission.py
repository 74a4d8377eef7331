#!/usr/bin/env python3
"""Four-pose inspection mission: build balanced target poses, plan with the
balance-prioritized pipeline, simulate the closed loop and report hold-phase
pose error statistics."""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from bikebot.bem import solve_equilibrium_roll
from bikebot.cli import main
from bikebot.model import default_model, ee_pose_vector
from bikebot.units import DEG, m_to_cm, rad_to_deg

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/mission")


def build_poses():
    m = default_model()
    th1 = np.array([10, -35, 55, 10, -25, 5.]) * DEG
    phi1 = solve_equilibrium_roll(m, th1, 0.02)
    q_list = [
        np.concatenate([[phi1], th1]),
        np.concatenate([[phi1], th1 + np.array([0, 4, -5, 3, 4, -3.]) * DEG]),
        np.concatenate([[phi1], th1 + np.array([-3, 7, -3, -4, 7, 4.]) * DEG]),
    ]
    th4 = th1 + np.array([14, -8, 6, 10, -6, 8.]) * DEG
    q_list.append(np.concatenate([[solve_equilibrium_roll(m, th4, -0.06)], th4]))
    poses = []
    for q in q_list:
        xi = ee_pose_vector(m, q)
        poses.append(np.concatenate([m_to_cm(xi[:3]), rad_to_deg(xi[3:])]).tolist())
    return poses


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    config = {
        "robot": "default",
        "seed": 0,
        "plan": {
            "poses": build_poses(),
            "timing": {"hold_s": 10.0, "transition_s": 8.0},
            "solver": {"restarts": 2, "early_stop": 1},
            "limits": {"delta_rate_max_degps": 100.0},
            "include_approach": True,
        },
        "simulate": {
            "sim": {"dt_s": 2e-3, "integrator": "semi-implicit-euler"},
            "gains": {"k_p": 8.5, "k_d": 2.0, "kappa": 5.0, "epsilon_b_deg": 0.4},
        },
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(config, fh)
        cfg_path = fh.name
    code = main(["plan", "--config", cfg_path, "--out", str(OUT)])
    if code:
        sys.exit(code)
    sys.exit(main(["simulate", "--config", cfg_path, "--out", str(OUT)]))
