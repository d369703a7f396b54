#!/usr/bin/env python3
"""Desk-scale overfit experiment: four training stages on one synthetic
7-frame clip, then an end-to-end rate-ladder measurement."""

import argparse
import json

from nbvc.model import save_checkpoint
from nbvc.training.smoke import run_rd_smoke


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps-per-stage", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--checkpoint-out", default=None)
    parser.add_argument("--json-out", default=None)
    args = parser.parse_args()

    result = run_rd_smoke(steps_per_stage=args.steps_per_stage, seed=args.seed,
                          learning_rate=args.learning_rate, verbose=True)
    summary = {
        "runtime_seconds": result.runtime_seconds,
        "stage_seconds": result.stage_seconds,
        "bpp": result.bpp,
        "mse": result.mse,
        "psnr_all": result.psnr_all,
        "psnr_b_only": result.psnr_b_only,
    }
    print(json.dumps(summary, indent=2))
    if args.checkpoint_out:
        save_checkpoint(result.model, args.checkpoint_out)
        print(f"checkpoint -> {args.checkpoint_out}")
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
