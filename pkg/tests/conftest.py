"""Shared fixtures: the two-voter worked example and a randomized scenario pool."""

import numpy as np
import pytest

from varbound import (
    Design,
    EstimatorSpec,
    ExposureModel,
    build_variance_problem,
)

# reference matrices for the two-voter example: one of two units is targeted
# at random, the other is indirectly exposed through their tie
U_VEC = np.array([1.0, -1.0, 1.0, -1.0])
A_ILLU = np.outer(U_VEC, U_VEC)
B_MINNORM = np.array(
    [[2.0, 0, 0, -2], [0, 2, -2, 0], [0, -2, 2, 0], [-2, 0, 0, 2]]
)
B_PAIRWISE = np.array(
    [[3.0, 0, 0, -1], [0, 3, -1, 0], [0, -1, 3, 0], [-1, 0, 0, 3]]
)
OMEGA_ILLU = frozenset({(0, 1), (2, 3), (0, 2), (1, 3)})


def illustration_parts():
    design = Design.explicit([((1, 0), 0.5), ((0, 1), 0.5)])
    model = ExposureModel.spillover([[1], [0]])
    spec = EstimatorSpec(kind="horvitz-thompson")
    return design, model, spec


@pytest.fixture(scope="session")
def illustration():
    design, model, spec = illustration_parts()
    problem, table = build_variance_problem(design, model, spec)
    return {
        "design": design,
        "model": model,
        "spec": spec,
        "problem": problem,
        "table": table,
    }


def random_scenario(rng, estimators=("horvitz-thompson",)):
    """A small enumerable scenario with positive exposure probabilities.

    Mixes bernoulli / complete / cluster / paired designs with identity and
    spillover exposures. Difference-in-means is only drawn together with
    complete randomization, where no assignment empties a group.
    """
    while True:
        n = int(rng.integers(2, 5))
        flavor = rng.choice(["bern-id", "cr-id", "cluster-id", "paired-id",
                             "bern-spill", "cr-spill"])
        if flavor == "paired-id" and n % 2 == 1:
            continue
        if flavor == "bern-id":
            design = Design.bernoulli(n, float(rng.uniform(0.3, 0.7)))
            model = ExposureModel.identity(n)
        elif flavor == "cr-id":
            design = Design.complete(n, int(rng.integers(1, n)))
            model = ExposureModel.identity(n)
        elif flavor == "cluster-id":
            if n < 4:
                continue
            design = Design.cluster([[0, 1], list(range(2, n))], 1)
            model = ExposureModel.identity(n)
        elif flavor == "paired-id":
            design = Design.paired([(2 * i, 2 * i + 1) for i in range(n // 2)])
            model = ExposureModel.identity(n)
        else:
            # ring graph so every unit can be indirectly exposed
            adjacency = [[(i - 1) % n, (i + 1) % n] for i in range(n)]
            if n == 2:
                adjacency = [[1], [0]]
            model = ExposureModel.spillover(adjacency)
            if flavor == "bern-spill":
                design = Design.bernoulli(n, float(rng.uniform(0.3, 0.7)))
            else:
                design = Design.complete(n, int(rng.integers(1, n)))
        kind = str(rng.choice(estimators))
        if kind == "difference-in-means" and not (
            flavor == "cr-id" and 1 <= design.m <= n - 1
        ):
            kind = "horvitz-thompson"
        return design, model, EstimatorSpec(kind=kind)
