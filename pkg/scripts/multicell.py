"""Coordinated multi-cell Model-GNN against the multi-cell WMMSE oracle."""
import argparse

import numpy as np
import torch

from modelgnn.experiments import multicell_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, default=2)
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--widths", help="comma separated, e.g. 2,32,32,8,2")
    ap.add_argument("--keep-nonneighbor", action="store_true")
    args = ap.parse_args()
    torch.set_default_dtype(torch.float64)

    widths = [int(w) for w in args.widths.split(",")] if args.widths else None
    ratios = []
    for s in range(args.seeds):
        r = multicell_run(args.M, args.N, args.K, 10.0, epochs=args.epochs, widths=widths, seed=s,
                          omit_nonneighbor=not args.keep_nonneighbor)
        ratios.append(r["se_ratio"])
        print(f"seed {s}: {r['se_ratio']:.2f}% ({r['train_seconds']:.0f}s)", flush=True)
    print(f"mean: {np.mean(ratios):.2f}%")


if __name__ == "__main__":
    main()
