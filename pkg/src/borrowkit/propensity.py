"""Propensity model for current-study vs external membership and PS-odds weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import NonConvergence, Separation, SingularDesign

SCORE_CLIP = 1e-12
_SEPARATION_NORM = 1e6
_SATURATION = 1e-10


@dataclass(frozen=True)
class CovariateMatrix:
    """Baseline covariates (no intercept column) with source labels z (1 current, 0 external)."""

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        z = np.asarray(self.z, dtype=float).ravel()
        if x.shape[0] != z.shape[0]:
            raise ValueError(f"{x.shape[0]} covariate rows but {z.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates contain missing or non-finite values")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("source labels must be 0 (external) or 1 (current)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @classmethod
    def from_blocks(cls, current, external) -> CovariateMatrix:
        current = np.atleast_2d(np.asarray(current, dtype=float))
        external = np.atleast_2d(np.asarray(external, dtype=float))
        if current.shape[1] != external.shape[1]:
            raise ValueError("current and external blocks have different column counts")
        x = np.vstack([current, external])
        z = np.concatenate([np.ones(len(current)), np.zeros(len(external))])
        return cls(x, z)


@dataclass(frozen=True)
class WeightVector:
    w: np.ndarray
    ess: float

    @property
    def n(self) -> int:
        return len(self.w)

    @classmethod
    def unit(cls, n: int) -> WeightVector:
        return cls(np.ones(n), float(n))


def _add_intercept(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x])


def _expit(eta):
    # Stable in both tails.
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_saturation(p, z):
    one = z == 1
    if np.all(p[one] > 1 - _SATURATION) or np.all(p[~one] < _SATURATION):
        raise Separation("fitted probabilities saturate at 0/1 for one class; labels are separable")


def fit_logistic(data: CovariateMatrix, max_iter: int = 100, tol: float = 1e-8) -> np.ndarray:
    """Maximum-likelihood logistic regression by IRLS.

    Returns the coefficient vector with the intercept first. Iteration stops
    once the largest absolute coefficient update falls below ``tol``.
    """
    x, z = data.x, data.z
    if x.shape[0] < 2:
        raise ValueError("need at least two rows to fit the propensity model")
    if z.min() == z.max():
        raise Separation("all source labels are identical; the propensity model is undefined")
    design = _add_intercept(x)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesign("propensity design matrix is rank deficient (collinear covariates)")

    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        p = _expit(design @ beta)
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        grad = design.T @ (z - p)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            _check_saturation(p, z)
            raise SingularDesign("IRLS normal-equations matrix is singular") from None
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > _SEPARATION_NORM:
            raise Separation("propensity coefficients diverge; labels are (quasi-)separable")
        if np.max(np.abs(step)) < tol:
            _check_saturation(_expit(design @ beta), z)
            return beta
    raise NonConvergence(f"IRLS did not converge within {max_iter} iterations")


def log_likelihood(coefficients, data: CovariateMatrix) -> float:
    eta = _add_intercept(data.x) @ np.asarray(coefficients, dtype=float)
    # z*eta - log(1 + e^eta)
    return float(np.sum(data.z * eta - np.logaddexp(0.0, eta)))


def propensity_scores(coefficients, data) -> np.ndarray:
    """P(current study | x) for every row of ``data`` (a CovariateMatrix or bare array)."""
    x = data.x if isinstance(data, CovariateMatrix) else np.atleast_2d(np.asarray(data, dtype=float))
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (x.shape[1] + 1,):
        raise ValueError(
            f"expected {x.shape[1] + 1} coefficients (intercept + {x.shape[1]} covariates), "
            f"got {coefficients.shape[0]}"
        )
    with np.errstate(over="ignore"):
        return _expit(_add_intercept(x) @ coefficients)


def external_weights(scores) -> WeightVector:
    """Clipped PS-odds weights ``min(1, e / (1 - e))`` for external subjects."""
    scores = np.asarray(scores, dtype=float).ravel()
    if np.any(~np.isfinite(scores)) or np.any(scores <= 0.0) or np.any(scores >= 1.0):
        raise ValueError("propensity scores must lie strictly inside (0, 1)")
    e = np.clip(scores, SCORE_CLIP, 1.0 - SCORE_CLIP)
    w = np.minimum(1.0, e / (1.0 - e))
    return WeightVector(w, float(w.sum()))


class PropensityWeighter(TransformerMixin, BaseEstimator):
    """Logistic propensity model of current-study membership.

    ``fit(X, z)`` with ``z = 1`` for current-study rows and ``0`` for
    external rows. ``transform`` returns the clipped PS-odds weight of each
    row, which is meaningful for external subjects.
    """

    def __init__(self, max_iter=100, tol=1e-8):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, z):
        X, z = check_X_y(X, z, ensure_min_samples=2, dtype=float)
        coef = fit_logistic(CovariateMatrix(X, z), max_iter=self.max_iter, tol=self.tol)
        self.intercept_ = coef[0]
        self.coef_ = coef[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        p = propensity_scores(np.r_[self.intercept_, self.coef_], X)
        return np.column_stack([1.0 - p, p])

    def weights(self, X) -> WeightVector:
        p = np.clip(self.predict_proba(X)[:, 1], SCORE_CLIP, 1.0 - SCORE_CLIP)
        return external_weights(p)

    def transform(self, X):
        return self.weights(X).w[:, None]
