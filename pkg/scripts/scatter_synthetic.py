"""Per-example eta against loss and gradient norm on synthetic regression.

Writes a CSV for plotting and prints rank correlations and the overlap of
the low/high tails.

    python scripts/scatter_synthetic.py --out scatter.csv
"""
import argparse
import csv

import numpy as np
from scipy import stats

from fisherloss import fil, glm, synthbench


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--leverage-points", type=int, default=5)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--out", help="CSV path for the first seed")
    args = ap.parse_args()

    for seed in args.seeds:
        ds = synthbench.gen_regression(args.n, args.d, seed=seed, leverage_points=args.leverage_points)
        p = glm.fit_linear(ds, 0.0)
        eta = fil.example_etas(ds, p, 1.0)
        loss = glm.losses(p.kind, p.w, ds.X, ds.y)
        gnorm = np.linalg.norm(glm.gradients(p.kind, p.w, ds.X, ds.y), axis=1)
        k = ds.n // 10
        er, lr = np.argsort(eta, kind="stable"), np.argsort(loss, kind="stable")
        low_high = len(set(er[:k]) & set(lr[-k:]))
        high_low = len(set(er[-k:]) & set(lr[:k]))
        print(f"seed {seed}: spearman(eta, loss) {stats.spearmanr(eta, loss).statistic:+.3f}, "
              f"spearman(eta, |grad|) {stats.spearmanr(eta, gnorm).statistic:+.3f}, "
              f"low-eta & high-loss {low_high}, high-eta & low-loss {high_low}")
        if args.out and seed == args.seeds[0]:
            with open(args.out, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["index", "eta", "loss", "grad_norm"])
                w.writerows(zip(range(ds.n), eta, loss, gnorm))


if __name__ == "__main__":
    main()
