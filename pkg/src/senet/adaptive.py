"""Two-step adaptive structured elastic net."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InitialEstimatorError, InvalidParameterError, SenetError
from .graph import PenaltyMatrix, identity_penalty
from .model import Dataset, GlmFamily
from .solver import FitConfig, FitResult, fit, solve_glm, solve_ridge

INIT_KINDS = ("ridge", "ridge-structured")


@dataclass(frozen=True)
class AdaptiveConfig:
    """Settings for the reweighted second stage.

    Attributes:
        gamma: exponent of the weights ``|beta_init|^-gamma``.
        init: ``"ridge"`` (identity penalty), ``"ridge-structured"`` (same
            penalty matrix as the final fit) or a user-supplied coefficient vector.
        init_lambda2: ridge parameter of the initial estimator.
        cap: upper bound on any weight; zero initial coefficients get exactly this.
    """

    gamma: float = 1.0
    init: object = "ridge"
    init_lambda2: float = 1.0
    cap: float = 1e8

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError("gamma must be positive")
        if not self.cap >= 1:
            raise InvalidParameterError("weight cap must be >= 1")
        if isinstance(self.init, str) and self.init not in INIT_KINDS:
            raise InvalidParameterError(f"unknown initial estimator {self.init!r}")


def compute_weights(beta_init, gamma: float = 1.0, cap: float = 1e8) -> np.ndarray:
    beta_init = np.abs(np.asarray(beta_init, dtype=float))
    with np.errstate(divide="ignore", over="ignore"):
        w = np.where(beta_init > 0, beta_init ** (-gamma), np.inf)
    return np.minimum(w, cap)


def initial_estimate(data: Dataset, fam: GlmFamily, lam: PenaltyMatrix, acfg: AdaptiveConfig,
                     fit_intercept: bool = True) -> np.ndarray:
    if not isinstance(acfg.init, str):
        beta = np.asarray(acfg.init, dtype=float)
        if beta.shape != (data.p,):
            raise InitialEstimatorError(f"initial vector has shape {beta.shape}, expected ({data.p},)")
        return beta
    penalty = identity_penalty(data.p) if acfg.init == "ridge" else lam
    try:
        if fam.name == "gaussian":
            res = solve_ridge(data, penalty, acfg.init_lambda2, fit_intercept)
        else:
            cfg = FitConfig(lambda1=0.0, lambda2=acfg.init_lambda2, fit_intercept=fit_intercept)
            res = solve_glm(data, fam, penalty, cfg)
            if not res.converged:
                raise InitialEstimatorError("initial ridge GLM fit did not converge")
    except InitialEstimatorError:
        raise
    except SenetError as exc:
        raise InitialEstimatorError(f"initial estimator failed: {exc}") from exc
    return res.beta


def adaptive_fit(data: Dataset, fam: GlmFamily, lam: PenaltyMatrix, cfg: FitConfig,
                 acfg: AdaptiveConfig | None = None, beta_init=None) -> FitResult:
    """Fit the initial estimator, turn it into l1 weights, refit with those weights."""
    acfg = acfg or AdaptiveConfig()
    init = initial_estimate(data, fam, lam, acfg, cfg.fit_intercept)
    weights = compute_weights(init, acfg.gamma, acfg.cap)
    res = fit(data, fam, lam, replace(cfg, weights=tuple(weights)), beta_init)
    res.meta.update(
        adaptive=True,
        gamma=acfg.gamma,
        init=acfg.init if isinstance(acfg.init, str) else "user",
        init_lambda2=acfg.init_lambda2,
        beta_init=init.tolist(),
    )
    return res
