#!/usr/bin/env python3
"""Pilot calibration of the consistency-check error threshold.

Runs the estimator-consistency experiment with ten times the usual number of
replications and derives the final-median bound used by the standard run:
pilot median at the largest sample size plus four standard errors of a
50-replication median (estimated from the pilot's IQR), rounded up. The
resulting JSON is committed under calibration/ so every later run checks
against a fixed, reproducible number.

Usage: python3 scripts/calibrate_thresholds.py [--reps 500] [--out PATH]
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np

from condcopula.harness import ExperimentConfig, consistency_experiment

PILOT_SEED = 20240817  # distinct from the verification run's seed on purpose


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--target-reps", type=int, default=50,
                    help="replication count of the run being calibrated")
    ap.add_argument(
        "--out",
        default=str(Path(__file__).resolve().parents[1]
                    / "calibration" / "pilot_calibration.json"),
    )
    args = ap.parse_args()

    cfg = ExperimentConfig(
        experiment="consistency_pilot",
        model={"family": "clayton", "link": "sine:0.4,0.25"},
        n_ladder=(250, 500, 1000, 2000),
        replications=args.reps,
        seed=PILOT_SEED,
        eval_points=(0.5,),
        grid_size=21,
        tolerances={"final_median": math.inf},  # the pilot only measures
    )
    report = consistency_experiment(cfg)

    final_n = cfg.n_ladder[-1]
    vals = np.asarray(
        [v for v in report.raw["sup_error"][final_n] if np.isfinite(v)]
    )
    med = float(np.median(vals))
    q25, q75 = np.percentile(vals, [25, 75])
    sigma = float((q75 - q25) / 1.349)  # normal-consistent spread estimate
    se_median = 1.2533 * sigma / math.sqrt(args.target_reps)
    threshold = math.ceil((med + 4.0 * se_median) * 1000.0) / 1000.0

    pilot_config = cfg.to_dict()
    # the pilot's unbounded tolerance is not representable in strict JSON
    pilot_config["tolerances"] = {
        k: (v if math.isfinite(v) else None)
        for k, v in pilot_config["tolerances"].items()
    }
    payload = {
        "pilot_config": pilot_config,
        "pilot_config_hash": report.config_hash,
        "median_sup_error": report.metrics["median_sup_error"],
        "final_n": final_n,
        "final_median": med,
        "final_iqr_sigma": sigma,
        "se_of_median_at_target_reps": se_median,
        "target_reps": args.target_reps,
        "final_median_threshold": threshold,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload["median_sup_error"], indent=2))
    print(f"final median {med:.5f}, threshold {threshold:.3f} -> {out}")


if __name__ == "__main__":
    main()
