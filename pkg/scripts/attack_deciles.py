"""White-box attribute-inversion accuracy by initial-eta decile, before and after IRFIL.

    python scripts/attack_deciles.py --sigma 0.02 --trials 100 --irfil-iters 2 10
"""
import argparse

import numpy as np

from fisherloss import attacks, glm, irfil, synthbench


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--candidates", type=int, default=3)
    ap.add_argument("--effect-size", type=float, default=1.0)
    ap.add_argument("--lam", type=float, default=1e-2)
    ap.add_argument("--sigma", type=float, default=0.02)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--irfil-iters", type=int, nargs="+", default=[2, 10])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    ds, task = synthbench.gen_attack_task(args.n, args.d, args.candidates, args.effect_size, seed=args.seed)
    params = glm.fit_linear(ds, args.lam)
    etas = attacks.attribute_etas(ds, params, task)

    def row(label, p):
        r = attacks.evaluate_attack(ds, task, p, "whitebox", args.trials, args.sigma, args.seed,
                                    etas=etas, threads=args.threads)
        cells = " ".join(f"{a:5.2f}" for a in r.decile_accuracy)
        print(f"{label:>10} {cells}   mean {r.accuracy:.3f}  top-bottom {r.top_bottom_gap:+.3f}  "
              f"max-min {r.decile_spread:.3f}")

    print(f"sigma={args.sigma}, trials={args.trials}, prior={np.round(task.prior, 3).tolist()}")
    print(f"{'decile':>10} " + " ".join(f"{k:5d}" for k in range(10)))
    row("unweighted", params)
    for t in args.irfil_iters:
        trace = irfil.run_irfil(ds, "squared", args.lam, args.sigma, t, args.seed, coordinates=task.span)
        row(f"irfil {t}", trace.final_params)


if __name__ == "__main__":
    main()
