"""Train once with K ~ exp(mean), report the SE ratio at several fixed K."""
import argparse

import torch

from modelgnn.experiments import generalization_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--mean-k", type=float, default=4.0)
    ap.add_argument("--eval-k", type=int, nargs="+", default=[4, 8, 12])
    ap.add_argument("--model-epochs", type=int, default=200)
    ap.add_argument("--vanilla-epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    torch.set_default_dtype(torch.float64)

    print("arch," + ",".join(f"K={k}" for k in args.eval_k))
    for arch, epochs in (("model", args.model_epochs), ("vanilla", args.vanilla_epochs)):
        r = generalization_run(arch, args.N, args.mean_k, args.eval_k, 10.0, n_train=1000,
                               n_test=100, epochs=epochs, seed=args.seed)
        print(arch + "," + ",".join(f"{r['se_ratio'][k]:.2f}" for k in args.eval_k), flush=True)


if __name__ == "__main__":
    main()
