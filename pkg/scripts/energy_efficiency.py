"""EE-trained Model-GNN with a per-user rate floor versus full-power ZFBF."""
import argparse
import json

import torch

from modelgnn.experiments import ee_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r-min", type=float, default=2.0)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--learning-rate", type=float, default=0.01)
    ap.add_argument("--p-max-watts", type=float, help="radiated budget in watts (default 20 W per antenna)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    torch.set_default_dtype(torch.float64)

    extra = {"p_max_watts": args.p_max_watts} if args.p_max_watts else {}
    r = ee_run(8, 4, 10.0, args.r_min, epochs=args.epochs, learning_rate=args.learning_rate,
               seed=args.seed, **extra)
    print(json.dumps(r, indent=2))


if __name__ == "__main__":
    main()
