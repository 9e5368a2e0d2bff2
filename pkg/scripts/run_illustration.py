#!/usr/bin/env python3
"""Walk through the two-voter scenario with the library API.

One of two connected voters is targeted by a campaign at random; the other is
indirectly exposed. The script builds the coefficient covariance, compares the
minimum-norm bound against the pairwise Young's-inequality bound, tests both
for admissibility, and checks the bound estimator by enumeration.

Usage: python scripts/run_illustration.py
"""

import numpy as np

from varbound import (
    Design,
    EstimatorSpec,
    ExposureModel,
    Objective,
    SolverConfig,
    aronow_samii_slack,
    build_variance_problem,
    enumerate_assignments,
    ht_bound_estimate,
    linalg,
    observe,
    solve_optvb,
    test_admissibility,
    validate_bound,
)


def show(name, M):
    print(f"{name} =")
    print(np.array2string(np.asarray(M), precision=4, suppress_small=True))
    print()


def main():
    design = Design.explicit([((1, 0), 0.5), ((0, 1), 0.5)])
    model = ExposureModel.spillover([[1], [0]])
    spec = EstimatorSpec(kind="horvitz-thompson")
    problem, table = build_variance_problem(design, model, spec)
    show("coefficient covariance A", problem.A)
    print("unobservable pairs:", sorted(problem.omega), "\n")

    config = SolverConfig(eps_abs=1e-11, eps_rel=1e-9)
    frob = solve_optvb(problem, Objective.frobenius_squared(), config)
    show("minimum-norm bound B", frob.B_star)

    S_pair = aronow_samii_slack(problem.A, problem.omega)
    show("pairwise bound B", problem.A + S_pair)

    for name, B in (("minimum-norm", frob.B_star), ("pairwise", problem.A + S_pair)):
        v = validate_bound(problem.A, B, problem.omega, 1e-7)
        verdict = test_admissibility(B - problem.A, problem.omega, config)
        print(
            f"{name:13s} valid={v.valid}  alpha={verdict.alpha: .6f}  "
            f"admissible={verdict.admissible}"
        )
    print()

    rng = np.random.default_rng(7)
    theta = rng.normal(size=4)
    target = linalg.quadratic_form_value(frob.B_star, theta, 2)
    mean = sum(
        p * ht_bound_estimate(frob.B_star, observe(model, z, theta), table, 2)
        for z, p in enumerate_assignments(design)
    )
    print(f"bound value {target:.6f}, expected estimate {mean:.6f} "
          f"(gap {abs(mean - target):.2e})")


if __name__ == "__main__":
    main()
