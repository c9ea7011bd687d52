"""Fit c_emp on seeds 0-3 and test it against seeds 4-7.

Usage: python3 scripts/variation_split.py [--d 1] [--L 128] [--spacing 0.25]
"""

import argparse
import json

from deloclab.config import RunConfig
from deloclab.sweep import calibrate_c1, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--L", type=float, default=128.0)
    ap.add_argument("--spacing", type=float, default=0.25)
    args = ap.parse_args()

    base = RunConfig().replace(torus={"d": args.d, "L": args.L, "gammas": (1.0,) * (args.d - 1)},
                               grid={"spacing": args.spacing}, solver={"mode": "lowest", "k": 4})
    c1 = calibrate_c1(base, seeds=range(4)).c1
    if c1 is None:
        raise SystemExit("calibration failed")
    res = run_sweep(base.replace(scales={"c1": c1}), seeds=range(8), energies="auto", workers=1)
    halves = {"calibration": [], "validation": []}
    for cfg, rec in zip(res.jobs, res.records):
        key = "calibration" if cfg.potential.seed < 4 else "validation"
        halves[key] += [p["variation"]["c_emp"] for p in rec.pairs if "variation" in p]
    fit, worst = max(halves["calibration"]), max(halves["validation"])
    print(json.dumps({"c1": c1, "c_fit": fit, "validation_max": worst, "ratio": worst / fit}, indent=2))


if __name__ == "__main__":
    main()
