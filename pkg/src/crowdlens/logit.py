"""Weighted logistic regression fit by iteratively reweighted least squares."""
from __future__ import annotations

import numpy as np

from ._estimator import ParamsMixin
from .errors import SeparationDetected

_ETA_CLIP = 35.0  # keeps expit away from exact 0/1 in float64


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -_ETA_CLIP, _ETA_CLIP)))


class LogisticModel(ParamsMixin):
    """Binary logit with observation weights.

    Newton/IRLS iterations on the weighted log-likelihood; ``ridge`` adds an
    L2 penalty on the slopes (never the intercept).  An unpenalized fit that
    fails to converge raises SeparationDetected so callers can retry with a
    small ridge.
    """

    def __init__(self, ridge: float = 0.0, max_iter: int = 100, tol: float = 1e-8):
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"sample_weight has shape {w.shape}, expected ({n},)")

        design = np.hstack([np.ones((n, 1)), X])
        penalty = np.zeros(p + 1)
        penalty[1:] = self.ridge

        beta = np.zeros(p + 1)
        converged = False
        for _ in range(self.max_iter):
            eta = design @ beta
            prob = _sigmoid(eta)
            grad = design.T @ (w * (y - prob)) - penalty * beta
            s = w * prob * (1.0 - prob)
            hessian = design.T @ (design * s[:, None]) + np.diag(penalty)
            try:
                step = np.linalg.solve(hessian, grad)
            except np.linalg.LinAlgError:
                raise SeparationDetected("singular IRLS system") from None
            beta = beta + step
            if np.max(np.abs(step)) < self.tol:
                converged = True
                break

        if not converged and self.ridge == 0.0:
            raise SeparationDetected(
                f"IRLS did not converge in {self.max_iter} iterations")
        self.converged_ = converged
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:].copy()
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return _sigmoid(self.intercept_ + X @ self.coef_)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)
