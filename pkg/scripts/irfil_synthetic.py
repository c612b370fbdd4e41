"""Coefficient of variation of per-example eta over IRFIL rounds, with held-out accuracy.

    python scripts/irfil_synthetic.py --iters 10 --seeds 0 1 2
"""
import argparse

from fisherloss import glm, irfil, synthbench


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--lam", type=float, default=0.0)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()

    for seed in args.seeds:
        train, test = synthbench.holdout(synthbench.gen_regression, args.n, args.n_test, d=args.d,
                                         seed=seed, targets="sign")
        trace = irfil.run_irfil(train, "squared", args.lam, 1.0, args.iters, seed=seed)
        print(f"seed {seed}")
        print(" iter   mean eta    std eta      cv")
        for t, (m, s, c) in enumerate(zip(trace.eta_mean, trace.eta_std, trace.eta_cv)):
            print(f" {t:4d} {m:10.4f} {s:10.4f} {c:9.5f}")
        before = glm.accuracy(trace.models[0], test)
        after = glm.accuracy(trace.final_params, test)
        print(f" test accuracy {before:.3f} -> {after:.3f}")


if __name__ == "__main__":
    main()
