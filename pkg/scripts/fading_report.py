"""Word-length report for the recursive Rayleigh generator.

Prints the largest sinusoid count per coefficient width, the worst-case
frequency bias against the exact value, and the optimal (P, T) for a few
bit-rate budgets.

    python scripts/fading_report.py --fd 100
"""

import argparse

import numpy as np

from cyclogps import fading


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fd", type=float, default=100.0)
    ap.add_argument("--budgets", type=float, nargs="+", default=[2e4, 1e5, 1e6])
    args = ap.parse_args()

    print("P   max L")
    for P in range(8, 25, 4):
        print(f"{P:<3} {fading.max_feasible_L(P)}")

    print("\nomega     P   bias        exact       rel err")
    for w in np.pi / np.array([32, 16, 8, 4]):
        for P in (8, 12, 16):
            qa = fading.quant_analysis(w, P)
            exact = fading.exact_frequency_bias(w, qa.delta_b)
            print(f"{w:.5f}  {P:<3} {qa.delta_omega:+.3e}  {exact:+.3e}  {abs(qa.delta_omega / exact - 1):.4f}")

    print("\nbudget (bit/s)  P*  T* (s)      e_s*")
    for C in args.budgets:
        res = fading.optimize_wordlength(C, args.fd)
        print(f"{C:<15g} {res.P:<3} {res.T:.4e}  {res.e_s:.4e}")


if __name__ == "__main__":
    main()
