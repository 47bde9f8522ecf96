"""SE ratio of Model-GNN and Vanilla-GNN against WMMSE at (8, 4) for several SNRs."""
import argparse

import numpy as np
import torch

from modelgnn.experiments import SeRun, se_ratio_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snr", type=float, nargs="+", default=[0.0, 10.0, 20.0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--model-epochs", type=int, default=100)
    ap.add_argument("--vanilla-epochs", type=int, default=40)
    args = ap.parse_args()
    torch.set_default_dtype(torch.float64)

    epochs = {"model": args.model_epochs, "vanilla": args.vanilla_epochs}
    print("snr_db,arch,se_ratio_mean,se_ratio_std,train_seconds")
    for snr in args.snr:
        for arch in ("model", "vanilla"):
            runs = [se_ratio_run(SeRun(arch, args.N, args.K, snr, n_train=args.samples,
                                       epochs=epochs[arch], seed=s)) for s in range(args.seeds)]
            ratios = [r["se_ratio"] for r in runs]
            secs = np.mean([r["train_seconds"] for r in runs])
            print(f"{snr:g},{arch},{np.mean(ratios):.2f},{np.std(ratios):.2f},{secs:.1f}", flush=True)


if __name__ == "__main__":
    main()
