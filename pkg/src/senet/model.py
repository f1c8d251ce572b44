"""Exponential-family losses, datasets and standardization, IRLS working quantities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit, xlogy

from .errors import (
    DataFormatError,
    DegenerateFeatureError,
    InvalidDimensionError,
    InvalidParameterError,
    InvalidResponseError,
)

WEIGHT_FLOOR = 1e-10
_EXP_CLIP = 700.0

FAMILIES = ("gaussian", "binomial", "poisson")


@dataclass(frozen=True)
class GlmFamily:
    """Canonical-link exponential family with cumulant ``b`` and dispersion ``phi``.

    ``b'`` is the mean function and ``b''`` the variance function (up to ``phi``).
    """

    name: str
    dispersion: float = 1.0

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise InvalidParameterError(f"unknown family {self.name!r}")
        if not self.dispersion > 0:
            raise InvalidParameterError("dispersion must be positive")
        if self.name != "gaussian" and self.dispersion != 1.0:
            raise InvalidParameterError(f"{self.name} dispersion is fixed to 1")

    def cumulant(self, f):
        f = np.asarray(f, dtype=float)
        if self.name == "gaussian":
            return 0.5 * f**2
        if self.name == "binomial":
            return np.logaddexp(0.0, f)
        return np.exp(np.minimum(f, _EXP_CLIP))

    def mean(self, f):
        f = np.asarray(f, dtype=float)
        if self.name == "gaussian":
            return f.copy()
        if self.name == "binomial":
            return expit(f)
        return np.exp(np.minimum(f, _EXP_CLIP))

    def variance(self, f):
        f = np.asarray(f, dtype=float)
        if self.name == "gaussian":
            return np.ones_like(f)
        if self.name == "binomial":
            mu = expit(f)
            return mu * (1.0 - mu)
        return np.exp(np.minimum(f, _EXP_CLIP))

    def link(self, mu):
        """Canonical link, the inverse of ``mean``."""
        mu = np.asarray(mu, dtype=float)
        if self.name == "gaussian":
            return mu.copy()
        if self.name == "binomial":
            return np.log(mu) - np.log1p(-mu)
        return np.log(mu)

    def check_response(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InvalidResponseError("response contains non-finite values")
        if self.name == "binomial" and not np.all((y == 0) | (y == 1)):
            raise InvalidResponseError("binomial response must be 0 or 1")
        if self.name == "poisson" and not np.all((y >= 0) & (y == np.round(y))):
            raise InvalidResponseError("poisson response must be a nonnegative integer")


GAUSSIAN = GlmFamily("gaussian")
BINOMIAL = GlmFamily("binomial")
POISSON = GlmFamily("poisson")


def get_family(name: str, dispersion: float = 1.0) -> GlmFamily:
    return GlmFamily(name, dispersion)


def glm_loss(fam: GlmFamily, y, f):
    """Negative log-likelihood ``(b(f) - y f) / phi`` without the ``c(y, phi)`` term."""
    fam.check_response(y)
    out = (fam.cumulant(f) - np.asarray(y, dtype=float) * np.asarray(f, dtype=float)) / fam.dispersion
    return float(out) if np.ndim(out) == 0 else out


def unit_deviance(fam: GlmFamily, y, f) -> np.ndarray:
    """Twice the log-likelihood gap to the saturated model, per observation."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if fam.name == "gaussian":
        return (y - f) ** 2 / fam.dispersion
    if fam.name == "binomial":
        return 2.0 * (np.logaddexp(0.0, f) - y * f)
    mu = fam.mean(f)
    return 2.0 * (xlogy(y, y) - y * np.minimum(f, _EXP_CLIP) - y + mu)


def deviance(fam: GlmFamily, y, f) -> float:
    return float(np.sum(unit_deviance(fam, y, f)))


@dataclass(frozen=True)
class Dataset:
    """Design ``X`` (n x p), response ``y`` and an optional standardization record.

    Standardized columns satisfy ``x_std = (x_raw - center) / scale``; the
    response is shifted by ``y_center``.
    """

    X: np.ndarray
    y: np.ndarray
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    y_center: float = 0.0
    feature_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise InvalidDimensionError("design matrix must be 2-d")
        if X.shape[0] != y.shape[0]:
            raise InvalidDimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def standardized(self) -> bool:
        return self.center is not None

    def transform(self, X_raw) -> np.ndarray:
        """Apply this dataset's column standardization to new raw rows."""
        X_raw = np.asarray(X_raw, dtype=float)
        if not self.standardized:
            return X_raw
        return (X_raw - self.center) / self.scale

    def to_raw_coefficients(self, beta0: float, beta) -> tuple[float, np.ndarray]:
        beta = np.asarray(beta, dtype=float)
        if not self.standardized:
            return float(beta0 + self.y_center), beta.copy()
        raw = beta / self.scale
        return float(beta0 + self.y_center - self.center @ raw), raw


def standardize(raw: Dataset, center_response: bool = True) -> Dataset:
    """Center columns and scale them to unit Euclidean length.

    Raises:
        DegenerateFeatureError: a column is constant.
    """
    X = raw.X
    center = X.mean(axis=0)
    Xc = X - center
    scale = np.sqrt(np.sum(Xc**2, axis=0))
    # relative test: a constant column leaves only rounding noise after centering
    colmax = np.max(np.abs(X), axis=0) if X.shape[0] else np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        if scale[j] <= 1e-12 * max(1.0, colmax[j]) * math.sqrt(max(X.shape[0], 1)):
            name = raw.feature_names[j] if raw.feature_names else None
            raise DegenerateFeatureError(j, name)
    Xs = Xc / scale
    y_shift = float(raw.y.mean()) if center_response else 0.0
    ys = raw.y - y_shift
    if raw.standardized:
        center = raw.center + raw.scale * center
        scale = raw.scale * scale
    return replace(
        raw,
        X=Xs,
        y=ys,
        center=center,
        scale=scale,
        y_center=raw.y_center + y_shift,
    )


def linear_predictor(beta0: float, beta, X) -> np.ndarray:
    return beta0 + np.asarray(X) @ np.asarray(beta, dtype=float)


def irls_working_quantities(fam: GlmFamily, beta0: float, beta, data: Dataset):
    """Working weights and response for one IRLS step.

    Returns:
        ``(w, z, floored)`` with ``w_i = b''(f_i) / phi`` floored at
        ``WEIGHT_FLOOR``, ``z_i = f_i + (y_i - mu_i) / w_i``, and a boolean mask
        of the floored weights.
    """
    f = linear_predictor(beta0, beta, data.X)
    mu = fam.mean(f)
    w = fam.variance(f) / fam.dispersion
    floored = w < WEIGHT_FLOOR
    w = np.where(floored, WEIGHT_FLOOR, w)
    z = f + (data.y - mu) / w
    return w, z, floored


def fisher_info(fam: GlmFamily, beta, data: Dataset, beta0: float = 0.0) -> np.ndarray:
    """Empirical Fisher information ``n^-1 sum_i b''(f_i) / phi x_i x_i'``."""
    f = linear_predictor(beta0, beta, data.X)
    w = fam.variance(f) / fam.dispersion
    return (data.X * w[:, None]).T @ data.X / data.n


def read_csv(path) -> Dataset:
    """Read a dataset CSV: header row, a ``y`` column, every other column a feature."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if "y" not in header:
            raise DataFormatError("no column named 'y' in header", line=1)
        yi = header.index("y")
        names = tuple(h for i, h in enumerate(header) if i != yi)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, found {len(row)}", line=lineno
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataFormatError("non-numeric or missing value", line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError("missing or non-finite value", line=lineno)
            rows.append(vals)
    if not rows:
        raise DataFormatError("no data rows", line=2)
    arr = np.array(rows)
    y = arr[:, yi]
    X = np.delete(arr, yi, axis=1)
    return Dataset(X, y, feature_names=names)


def write_csv(data: Dataset, path) -> None:
    names = data.feature_names or tuple(f"x{j + 1}" for j in range(data.p))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "y"])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
