"""Error curves of the iterative delay estimator, cyclic vs alpha = 0.

    python scripts/run_convergence.py --cnr 44 28 --seeds 10
"""

import argparse

import numpy as np

from cyclogps.experiments import ConvergenceConfig, run_convergence, timed, write_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cnr", type=float, nargs="+", default=[44.0, 28.0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    for cnr in args.cnr:
        cfg = ConvergenceConfig(cnr=cnr, seeds=args.seeds, base_seed=args.seed)
        res, wall = timed(run_convergence, cfg)
        summary = {k: {kk: vv for kk, vv in v.items() if kk != "errors"} for k, v in res.items()}
        run = write_run(args.out, "converge", cfg.to_dict(), {}, extra={"summary": summary}, wall_time=wall)
        for name, v in res.items():
            errs = np.array([np.abs(e[-1]) for e in v["errors"]])
            np.savetxt(run / f"{name}_errors.csv", np.column_stack([np.abs(e) for e in v["errors"]]),
                       delimiter=",", header=",".join(f"seed{j}" for j in range(len(errs))), comments="", fmt="%.8g")
            print(f"{cnr:g} dB-Hz {name:8s} converged {v['converged']}/{cfg.seeds}  "
                  f"median iters {v['median_iterations']}  median final |err| {np.median(errs):.3f}")
        print(run)


if __name__ == "__main__":
    main()
