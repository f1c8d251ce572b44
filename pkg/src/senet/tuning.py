"""K-fold cross-validation over a (lambda1, lambda2) grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError
from .graph import PenaltyMatrix
from .model import Dataset, GlmFamily, standardize, unit_deviance
from .solver import FitConfig, lambda1_max, solve_path

CRITERIA = ("deviance", "misclassification")
RULES = ("min", "1se")


@dataclass
class CVResult:
    """Outcome of :func:`cross_validate`.

    ``table`` has one row per grid cell with the mean and standard error of
    the held-out loss; the selected cell minimizes the mean loss.
    """

    lambda1: float
    lambda2: float
    loss: float | None
    folds: int
    criterion: str
    seed: int
    table: list[dict] = field(default_factory=list)
    rule: str = "min"

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "loss": self.loss,
            "folds": self.folds,
            "criterion": self.criterion,
            "seed": self.seed,
            "table": self.table,
        }


def make_folds(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Balanced fold labels ``0..folds-1`` in seeded random order."""
    if folds < 2:
        raise InvalidParameterError("need at least 2 folds")
    if n < folds:
        raise InvalidParameterError(f"n = {n} is smaller than the number of folds ({folds})")
    labels = np.arange(n) % folds
    return np.random.default_rng(seed).permutation(labels)


def heldout_loss(fam: GlmFamily, y, f, criterion: str = "deviance") -> float:
    """Mean held-out loss per observation."""
    if criterion == "deviance":
        return float(np.mean(unit_deviance(fam, y, f)))
    if criterion == "misclassification":
        if fam.name != "binomial":
            raise InvalidParameterError("misclassification needs the binomial family")
        return float(np.mean((f > 0).astype(float) != y))
    raise InvalidParameterError(f"unknown criterion {criterion!r}")


def default_lambda1_grid(data: Dataset, fam: GlmFamily, size: int = 20, min_ratio: float = 1e-3,
                         weights=None, fit_intercept: bool = True) -> np.ndarray:
    lmax = lambda1_max(data, fam, weights, fit_intercept)
    if size == 1:
        return np.array([lmax])
    return np.geomspace(max(lmax, 1e-10), max(lmax, 1e-10) * min_ratio, size)


def cross_validate(raw: Dataset, fam: GlmFamily, lam: PenaltyMatrix, lambda2_grid,
                   lambda1_grid=None, folds: int = 10, seed: int = 0,
                   criterion: str = "deviance", cfg: FitConfig | None = None,
                   path_size: int = 20, min_ratio: float = 1e-3, rule: str = "min") -> CVResult:
    """Pick ``(lambda1, lambda2)`` by K-fold cross-validation.

    Each training fold is standardized on its own. Because the objective sums
    the loss over observations, penalties on a fold with ``m`` of ``n`` rows are
    scaled by ``m / n`` so the grid refers to the full-data problem. Ties go to
    the larger ``lambda1``, then the larger ``lambda2``.

    Args:
        raw: unstandardized data.
        lambda1_grid: decreasing values; defaults to ``path_size`` log-spaced
            points below ``lambda1_max`` of the standardized full data.
        rule: ``"min"`` takes the smallest mean loss; ``"1se"`` takes the
            most regularized cell within one standard error of it.
    """
    if rule not in RULES:
        raise InvalidParameterError(f"unknown selection rule {rule!r}")
    if criterion not in CRITERIA:
        raise InvalidParameterError(f"unknown criterion {criterion!r}")
    if criterion == "misclassification" and fam.name != "binomial":
        raise InvalidParameterError("misclassification needs the binomial family")
    fam.check_response(raw.y)
    cfg = cfg or FitConfig()
    center_y = fam.name == "gaussian" and cfg.fit_intercept
    l2_grid = sorted({float(v) for v in lambda2_grid}, reverse=True)
    if not l2_grid or min(l2_grid) < 0:
        raise InvalidParameterError("lambda2 grid must be nonempty and nonnegative")
    if lambda1_grid is None:
        full = standardize(raw, center_response=center_y)
        l1_grid = default_lambda1_grid(full, fam, path_size, min_ratio,
                                       cfg.weight_vector(raw.p), cfg.fit_intercept)
    else:
        l1_grid = np.array(sorted({float(v) for v in lambda1_grid}, reverse=True))
    if l1_grid.size == 0 or l1_grid.min() < 0:
        raise InvalidParameterError("lambda1 grid must be nonempty and nonnegative")
    labels = make_folds(raw.n, folds, seed)

    if len(l2_grid) == 1 and l1_grid.size == 1:
        # nothing to choose between
        row = {"lambda1": float(l1_grid[0]), "lambda2": l2_grid[0], "mean": None, "se": None}
        return CVResult(row["lambda1"], row["lambda2"], None, folds, criterion, seed, [row], rule)
    losses = np.zeros((len(l2_grid), l1_grid.size, folds))
    for k in range(folds):
        tr, te = labels != k, labels == k
        scale = tr.sum() / raw.n
        train = standardize(Dataset(raw.X[tr], raw.y[tr]), center_response=center_y)
        for a, l2 in enumerate(l2_grid):
            path = solve_path(train, fam, lam, l2 * scale, cfg=cfg, lambda1_grid=l1_grid * scale)
            for b, res in enumerate(path.results):
                f = res.beta0_raw + raw.X[te] @ res.beta_raw
                losses[a, b, k] = heldout_loss(fam, raw.y[te], f, criterion)

    table = []
    for a, l2 in enumerate(l2_grid):
        for b, l1 in enumerate(l1_grid):
            vals = losses[a, b]
            table.append({
                "lambda1": float(l1),
                "lambda2": l2,
                "mean": float(vals.mean()),
                "se": float(vals.std(ddof=1) / math.sqrt(folds)),
            })
    best = min(table, key=lambda r: r["mean"])
    slack = best["se"] if rule == "1se" else 0.0
    cut = best["mean"] + slack + 1e-12 * (1 + abs(best["mean"]))
    ties = [r for r in table if r["mean"] <= cut]
    pick = max(ties, key=lambda r: (r["lambda1"], r["lambda2"]))
    return CVResult(pick["lambda1"], pick["lambda2"], pick["mean"], folds, criterion, seed, table, rule)


def refit_config(cv: CVResult, cfg: FitConfig | None = None) -> FitConfig:
    return replace(cfg or FitConfig(), lambda1=cv.lambda1, lambda2=cv.lambda2)
