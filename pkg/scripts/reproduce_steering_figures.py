#!/usr/bin/env python3
"""Steering model sweeps: contact radius and sensitivity vs initial steering
angle, plus the torque surface over (increment, roll) at the 90 deg operating
configuration.  Writes CSVs ready for external plotting."""

import json
import sys
import tempfile
from pathlib import Path

from bikebot.cli import main

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/steering")

CONFIG = {
    "robot": "default",
    "seed": 0,
    "steer_sweep": {
        "phi0_range_deg": [0.0, 180.0, 1.0],
        "delta_range_deg": [-15.0, 15.0, 0.5],
        "roll_range_deg": [-10.0, 10.0, 1.0],
    },
}

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(CONFIG, fh)
        cfg_path = fh.name
    sys.exit(main(["steer-sweep", "--config", cfg_path, "--out", str(OUT)]))
