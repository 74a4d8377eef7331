#!/usr/bin/env python3
"""Static balance capability estimates for the three balancing strategies
(front-wheel only, symmetric two-wheel, two-wheel plus arm counterweighting)."""

import json
import sys
import tempfile
from pathlib import Path

from bikebot.cli import main

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/capability")

CONFIG = {
    "robot": "default",
    "seed": 0,
    "capability": {"delta_range_deg": 50.0, "full_joint_search": False},
}

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(CONFIG, fh)
        cfg_path = fh.name
    sys.exit(main(["capability", "--config", cfg_path, "--out", str(OUT)]))
