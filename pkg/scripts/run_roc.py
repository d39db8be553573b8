"""ROC of the joint cyclic search against the noncoherent baseline at one CNR.

    python scripts/run_roc.py --cnr 30 --trials 500
"""

import argparse
import logging

from cyclogps.experiments import TrialConfig, run_roc, timed, write_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cnr", type=float, default=30.0)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = TrialConfig(cnr_list=(args.cnr,), trials_per_point=args.trials, base_seed=args.seed)
    curves, wall = timed(run_roc, cfg, args.cnr)
    run = write_run(args.out, "roc", cfg.to_dict(), curves, wall_time=wall, header_note=f"ROC at {args.cnr} dB-Hz")
    print("pfa   " + "  ".join(f"{m:>12}" for m in curves))
    for row in zip(*curves.values()):
        print(f"{row[0].x:<5g} " + "  ".join(f"{p.y:12.3f}" for p in row))
    print(run)


if __name__ == "__main__":
    main()
