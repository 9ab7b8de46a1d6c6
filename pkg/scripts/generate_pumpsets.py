#!/usr/bin/env python3
"""Regenerate data/pumpsets.json: 200 pump units with seeded synthetic
demand data, success probabilities drawn from Beta(2, 5) and 50 start
demands per unit."""

import json
from pathlib import Path

import numpy as np

SEED = 7
N_UNITS = 200
DEMANDS = 50
TRUE_A, TRUE_B = 2.0, 5.0


def main() -> None:
    rng = np.random.default_rng(SEED)
    probs = rng.beta(TRUE_A, TRUE_B, size=N_UNITS)
    units = [
        {
            "id": f"pump-{i + 1:03d}",
            "trials": DEMANDS,
            "successes": int(rng.binomial(DEMANDS, p)),
            "provenance": "observed",
        }
        for i, p in enumerate(probs)
    ]
    out = Path(__file__).resolve().parent.parent / "data" / "pumpsets.json"
    out.write_text(
        json.dumps({"family": "beta-binomial", "units": units}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"wrote {out} ({N_UNITS} units)")


if __name__ == "__main__":
    main()
