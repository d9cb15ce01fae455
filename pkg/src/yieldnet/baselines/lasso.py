"""Lasso by cyclic coordinate descent on standardized features.

Objective (standardized units, unpenalized intercept)::

    1/(2n) * ||y - b0 - Z b||^2 + lam * ||b||_1

where ``Z`` holds the columns centered and divided by their population
standard deviation.  The solver works on the Gram matrix ``Z'Z/n`` so a
sweep costs O(p^2) regardless of ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LASSO_KIND = "lasso"


def soft_threshold(x, lam):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


@dataclass
class LassoModel:
    coefficients: np.ndarray  # original feature units
    intercept: float
    lam: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray  # 0 marks a constant (excluded) column
    standardized_coefficients: np.ndarray
    converged: bool
    sweeps: int
    objective_history: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.coefficients)

    def predict(self, design) -> np.ndarray:
        x = np.asarray(design, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"design has {x.shape[-1]} columns, model expects {self.n_features}")
        return self.intercept + x @ self.coefficients

    def to_container(self):
        meta = {"lam": self.lam, "intercept": self.intercept, "converged": self.converged,
                "sweeps": self.sweeps, "objective_history": self.objective_history}
        arrays = {"coefficients": self.coefficients, "feature_mean": self.feature_mean,
                  "feature_scale": self.feature_scale, "standardized_coefficients": self.standardized_coefficients}
        return meta, arrays

    @classmethod
    def from_container(cls, meta, arrays) -> LassoModel:
        return cls(arrays["coefficients"], float(meta["intercept"]), float(meta["lam"]), arrays["feature_mean"],
                   arrays["feature_scale"], arrays["standardized_coefficients"], bool(meta["converged"]),
                   int(meta["sweeps"]), list(meta["objective_history"]))


def lambda_max(design, targets, standardize: bool = True) -> float:
    """Smallest penalty at which every coefficient is zero."""
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    mean, scale = _scaling(x, standardize)
    z = _standardized(x, mean, scale)
    return float(np.max(np.abs(z.T @ (y - y.mean())) / len(y), initial=0.0))


def _scaling(x, standardize):
    mean = x.mean(axis=0)
    if standardize:
        scale = x.std(axis=0)
        scale = np.where(scale > 1e-12 * np.maximum(1.0, np.abs(mean)), scale, 0.0)
    else:
        scale = np.where(np.ptp(x, axis=0) > 0, 1.0, 0.0)
    return mean, scale


def _standardized(x, mean, scale):
    safe = np.where(scale > 0, scale, 1.0)
    return np.where(scale > 0, (x - mean) / safe, 0.0)


def fit_lasso(design, targets, lam: float = 0.2, tolerance: float = 1e-7, max_sweeps: int = 1000,
              standardize: bool = True) -> LassoModel:
    """Cyclic coordinate descent until the largest coefficient change < ``tolerance``.

    With ``standardize=False`` columns are only centered.  Constant columns
    get a zero coefficient.  Non-convergence sets ``converged=False``.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],) or x.shape[0] == 0:
        raise ValueError(f"design {x.shape} and targets {y.shape} do not match")
    n, p = x.shape
    mean, scale = _scaling(x, standardize)
    z = _standardized(x, mean, scale)
    yc = y - y.mean()
    gram = z.T @ z / n
    corr = z.T @ yc / n
    diag = np.diag(gram).copy()
    active = np.flatnonzero(diag > 0)
    b = np.zeros(p)
    grad = corr.copy()  # corr - gram @ b
    yy = float(yc @ yc) / n

    def objective():
        return 0.5 * yy - float(b @ corr) + 0.5 * float(b @ (gram @ b)) + lam * float(np.abs(b).sum())

    history = [objective()]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in active:
            old = b[j]
            new = soft_threshold(grad[j] + diag[j] * old, lam) / diag[j]
            delta = new - old
            if delta != 0.0:
                b[j] = new
                grad -= delta * gram[:, j]
                max_delta = max(max_delta, abs(delta))
        history.append(objective())
        if max_delta < tolerance:
            converged = True
            break
    coef = np.where(scale > 0, b / np.where(scale > 0, scale, 1.0), 0.0)
    intercept = float(y.mean() - mean @ coef)
    return LassoModel(coef, intercept, float(lam), mean, scale, b, converged, sweeps, history)
