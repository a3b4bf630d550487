"""Recompute the frozen brute-force answers in ``tests/data``.

    python tests/regen_oracles.py

Slow (every binary pattern of every instance is an LP); the outputs are
checked in and only need regenerating when the generators change.
"""
from __future__ import annotations

import json
import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from oracles import milp_brute_force, model_digest, random_milp  # noqa: E402

N_MILP = 200
DATA = os.path.join(os.path.dirname(__file__), "data")


def milp_records(n=N_MILP):
    out = []
    for seed in range(n):
        model = random_milp(seed)
        status, obj, pattern = milp_brute_force(model)
        out.append({"seed": seed, "digest": model_digest(model), "binaries": len(model.binaries()),
                    "status": status, "objective": obj if status == "optimal" else None,
                    "pattern": None if pattern is None else [int(v) for v in pattern]})
        print(seed, status, obj, flush=True)
    return out


if __name__ == "__main__":
    os.makedirs(DATA, exist_ok=True)
    with open(os.path.join(DATA, "milp_oracle.json"), "w") as fh:
        json.dump(milp_records(), fh, indent=1)
        fh.write("\n")
