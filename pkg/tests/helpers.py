"""Shared test state: the suite-wide KKT log and acceptance result lines."""

import numpy as np

from senet.model import Dataset, standardize

KKT_TOL = {"gaussian": 1e-6, "binomial": 1e-5, "poisson": 1e-5}

# (family, independent KKT residual) for every converged fit made by any test
FIT_LOG: list[tuple[str, float]] = []
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def kkt_violations():
    return [(f, v) for f, v in FIT_LOG if v > KKT_TOL[f]]


def random_data(rng, n, p, family="gaussian", scale=1.0):
    X = rng.normal(size=(n, p))
    f = X @ rng.normal(0, scale, size=p)
    if family == "gaussian":
        y = f + rng.normal(size=n)
    elif family == "binomial":
        y = (rng.random(n) < 1 / (1 + np.exp(-f))).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
    else:
        y = rng.poisson(np.exp(np.clip(f, -3, 3))).astype(float)
    return standardize(Dataset(X, y), center_response=family == "gaussian")
