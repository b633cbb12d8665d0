"""Run the numerical verification suites and print their residual tables.

Covers the first-order interference prediction on closed-form quadratic
instances, linear aggregation, the constrained optimal update, the
projected-gradient alignment bound, and the orthogonalization identity.
"""

import argparse
import json

from mtunlearn import theory


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", action="store_true", help="print the full report")
    args = parser.parse_args()

    report = theory.run_all_checks(seed=args.seed)
    if args.json:
        print(theory.report_to_json(report))
        return
    for suite in report["suites"]:
        status = "pass" if suite["passed"] else "FAIL"
        detail = {
            k: v
            for k, v in suite.items()
            if k not in ("suite", "passed", "doubling_ratios")
        }
        print(f"{suite['suite']:28s} {status}  {json.dumps(detail)}")

    # residual decay for one instance: halving rho should quarter the residual
    def factory(rho):
        return theory.random_quadratic_problem(
            dim=20, n_instances=8, n_tasks=3, out_dim=2,
            n_forget_instances=2, rho=rho, seed=args.seed,
        )

    fit = theory.residual_order_fit(factory, [0.01, 0.02, 0.04])
    print("\nresidual vs rho (slope should be close to 2):")
    for rho, res in zip(fit["rho"], fit["residual"]):
        print(f"  rho={rho:<5g} residual={res:.3e}")
    print(f"  fitted log-log slope: {fit['slope']:.3f}")


if __name__ == "__main__":
    main()
