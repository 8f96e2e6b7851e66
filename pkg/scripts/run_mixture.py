"""Mixture de-noising benchmark: infer a two-component Gaussian mixture
population from noisy observations using BSL with GMM-score summaries.

Usage:
    python3 scripts/run_mixture.py --out runs/mixture --iters 20000
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from popcal.cli import main as popcal_main


def build_config(args):
    return {
        "seed": args.seed,
        "out": args.out,
        "model": {"tag": "mixture", "noise_sd": 0.045},
        "family": {"tag": "gaussian_mixture_2", "ordered": True},
        "theta": {
            "labels": ["mu1", "mu2", "sd1", "sd2", "weight"],
            "priors": [
                {"dist": "gaussian", "mean": 0.0, "sd": 1.0},
                {"dist": "gaussian", "mean": 0.0, "sd": 1.0},
                {"dist": "exponential", "rate": 1.0},
                {"dist": "exponential", "rate": 1.0},
                {"dist": "uniform", "low": 0.0, "high": 1.0},
            ],
            "constraints": [["less_than", "mu1", "mu2"]],
        },
        "observed": {
            "synthetic": {
                "theta_star": [0.3, 0.5, 0.015, 0.043, 1.0 / 3.0],
                "n": args.n,
                "seed": 1,
            }
        },
        "summary": {"tag": "gmm2_score"},
        "engine": {
            "tag": "bsl_mcmc",
            "iters": args.iters,
            "m": 50,
            "init": "pilot_best",
            "proposal": {"kind": "pilot", "pilot": {"n_chains": 2, "iters": 1500, "m": 50}},
        },
        "bands": {"grid": {"0": [0.0, 0.8, 161]}},
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/mixture")
    parser.add_argument("--seed", type=int, default=101)
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--iters", type=int, default=20_000)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    Path(args.out).mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(build_config(args), fh)
        cfg_path = fh.name
    return popcal_main(["calibrate", "--config", cfg_path, "--threads", str(args.threads)])


if __name__ == "__main__":
    sys.exit(main())
