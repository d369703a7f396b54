#!/usr/bin/env python3
"""Run one or more training stages on a directory of frame sequences.

Config file: JSON with any TrainingConfig keys plus optional "stages"
(list of {stage, steps, ...} overrides applied per stage) and "model"
(ModelConfig keys). Example:

    {
      "model": {"intra_mode": "learned"},
      "learning_rate": 1e-4,
      "crop_size": [128, 128],
      "stages": [
        {"stage": "motion-warmup", "steps": 2000},
        {"stage": "single-frame-e2e", "steps": 2000},
        {"stage": "multi-rate", "steps": 2000},
        {"stage": "cascaded", "steps": 2000, "sequence_length": 7}
      ]
    }
"""

import argparse
import json

import torch

from nbvc.model import BFrameCodec, ModelConfig, save_checkpoint
from nbvc.training import SequenceFolderDataset, TrainingConfig, run_stage


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", required=True,
                        help="root directory of frame-sequence folders")
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--checkpoint-out", required=True)
    parser.add_argument("--checkpoint-in", default=None,
                        help="resume from an existing checkpoint")
    args = parser.parse_args()

    with open(args.config) as fh:
        raw = json.load(fh)
    stage_specs = raw.pop("stages", [{"stage": raw.get("stage", "single-frame-e2e")}])
    model_keys = raw.pop("model", {})
    if "crop_size" in raw and raw["crop_size"] is not None:
        raw["crop_size"] = tuple(raw["crop_size"])

    if args.checkpoint_in:
        from nbvc.model import load_checkpoint

        model = load_checkpoint(args.checkpoint_in)
    else:
        torch.manual_seed(int(raw.get("seed", 0)))
        model = BFrameCodec(ModelConfig.from_dict(model_keys)
                            if model_keys else ModelConfig())

    dataset = SequenceFolderDataset(args.data)
    for spec in stage_specs:
        merged = dict(raw)
        merged.update(spec)
        if "crop_size" in merged and merged["crop_size"] is not None:
            merged["crop_size"] = tuple(merged["crop_size"])
        cfg = TrainingConfig(**merged)
        report = run_stage(model, cfg, dataset)
        ma = report.moving_average()
        print(f"[{cfg.stage}] {cfg.steps} steps; loss MA {ma[0]:.4f} -> {ma[-1]:.4f}")
        save_checkpoint(model, args.checkpoint_out)
    print(f"checkpoint -> {args.checkpoint_out}")


if __name__ == "__main__":
    main()
