#!/usr/bin/env python3
"""Cutoff-extremal energy expansion: measured vs predicted slopes.

Runs the planar model (flat boundary or unit-curvature disk) over a range
of profile scales and prints the fitted first-order slope of the Sobolev
norm against the coefficient-based prediction.
"""

import argparse

from vextrace.halfspace import expansion_coefficients, norm_expansion_check

EPS = (0.08, 0.056, 0.04, 0.028, 0.02, 0.014, 0.01, 0.007, 0.005, 0.0035)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=1.3)
    ap.add_argument("--dtp0", type=float, default=0.0,
                    help="inward normal derivative of p at the base point")
    args = ap.parse_args()

    for model, H in (("flat", 0.0), ("disk", 1.0)):
        co = expansion_coefficients(
            2, args.p, f0=1.0, dtp0=args.dtp0, H=H, hbar=H,
            enforce_hypotheses=False,
        )
        fit = norm_expansion_check(2, args.p, co, EPS, model=model)
        print(f"{model:<5} case={fit.case:<18} fitted={fit.fitted_slope:+.4f} "
              f"predicted={fit.predicted_slope:+.4f} residual={fit.residual:.2e}")
        for eps, sob, defect in zip(fit.epsilons, fit.sobolev_norms, fit.defects):
            print(f"    eps={eps:<7} |v|_(1,p)={sob:.8f} defect={defect:.2e}")


if __name__ == "__main__":
    main()
