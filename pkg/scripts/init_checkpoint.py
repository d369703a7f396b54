#!/usr/bin/env python3
"""Create a seeded untrained checkpoint (useful for coding smoke tests)."""

import argparse

import torch

from nbvc.model import BFrameCodec, ModelConfig, save_checkpoint


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output", required=True)
    parser.add_argument("--config", default="tiny", choices=["tiny", "base"])
    parser.add_argument("--intra-mode", default="raw", choices=["raw", "learned"])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    torch.manual_seed(args.seed)
    cfg = (ModelConfig.tiny(intra_mode=args.intra_mode) if args.config == "tiny"
           else ModelConfig(intra_mode=args.intra_mode))
    model = BFrameCodec(cfg)
    save_checkpoint(model, args.output)
    n_params = sum(p.numel() for p in model.parameters())
    print(f"wrote {args.output} ({args.config}, {n_params / 1e6:.2f}M params, "
          f"seed {args.seed})")


if __name__ == "__main__":
    main()
