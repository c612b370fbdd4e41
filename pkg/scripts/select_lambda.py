"""Pick the logistic lam whose training accuracy matches unregularized linear regression.

The linear model is fit on {-1, 1} targets; the logistic grid runs on the
same data with {0, 1} targets.

    python scripts/select_lambda.py --n 500 --d 10
"""
import argparse

import numpy as np

from fisherloss import glm, synthbench


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds01 = synthbench.gen_classification(args.n, args.d, seed=args.seed)
    dspm = ds01.with_rows(y=2 * ds01.y - 1)
    ref = glm.accuracy(glm.fit_linear(dspm, 0.0), dspm)
    grid = tuple(10.0 ** np.arange(-8, 1))
    for lam in grid:
        print(f"lam {lam:8.0e}: train accuracy {glm.accuracy(glm.fit_logistic(ds01, lam), ds01):.4f}")
    print(f"linear reference {ref:.4f}; selected lam {glm.select_logistic_lambda(ds01, ref, grid):.0e}")


if __name__ == "__main__":
    main()
