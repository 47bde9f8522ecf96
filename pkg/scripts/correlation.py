"""Median channel/beam correlation of an SE-trained Vanilla-GNN as the problem grows."""
import argparse

import torch

from modelgnn.experiments import SeRun, correlation_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", nargs="+", default=["32x8", "64x16"], help="NxK pairs")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--widths", default="2,32,32,2")
    args = ap.parse_args()
    torch.set_default_dtype(torch.float64)

    widths = [int(w) for w in args.widths.split(",")]
    print("seed,N,K,median_correlation")
    for s in range(args.seeds):
        for size in args.sizes:
            N, K = (int(x) for x in size.split("x"))
            run = SeRun("vanilla", N, K, 10.0, n_train=args.samples, n_test=50, epochs=args.epochs,
                        batch_size=20, widths=widths, seed=s)
            print(f"{s},{N},{K},{correlation_run(run)['median_correlation']:.6f}", flush=True)


if __name__ == "__main__":
    main()
