#!/usr/bin/env python3
"""Wall-time comparison of the Bezier segment planner against the DP
reference on the 2-link toy model, across collocation sample counts.
The DP pass is slow by design; expect several minutes."""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from bikebot.bem import solve_equilibrium_roll
from bikebot.cli import main
from bikebot.model import BikebotParams, LinkParams, RobotModel, model_to_dict
from bikebot.units import DEG, rad_to_deg

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/compare_dp")


def toy():
    return RobotModel(
        bike=BikebotParams(),
        links=(
            LinkParams(alpha=90 * DEG, a=0.0, d=0.2, m=1.0,
                       inertia=np.diag([2e-3, 2e-3, 1e-3])),
            LinkParams(alpha=0.0, a=0.3, d=0.0, m=0.8,
                       inertia=np.diag([1e-3, 8e-3, 8e-3])),
        ),
    )


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    model = toy()
    th_a = np.array([0.0, -25 * DEG])
    th_b = np.array([30 * DEG, 20 * DEG])
    qa = np.concatenate([[solve_equilibrium_roll(model, th_a, 0.0)], th_a])
    qb = np.concatenate([[solve_equilibrium_roll(model, th_b, 0.0)], th_b])
    config = {
        "robot": model_to_dict(model),
        "seed": 0,
        "compare_dp": {
            "q_start_deg": rad_to_deg(qa).tolist(),
            "q_end_deg": rad_to_deg(qb).tolist(),
            "t_span_s": 3.0,
            "n_samples": [50, 100, 200],
            "weights": {"W1": [0.02] * 3, "W2": [1.0] * 3},
            "grid": {"velocity_levels": 48},
        },
    }
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(config, fh)
        cfg_path = fh.name
    sys.exit(main(["compare-dp", "--config", cfg_path, "--out", str(OUT)]))
