"""Concrete per-sample losses for linear models, and the closed-form baseline.

Both losses are stateless and convex in the parameters.  An intercept is the
caller's responsibility: append a constant-1 feature column if you want one.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .core import Dataset, PerSampleLoss

__all__ = [
    "LinearLeastSquares",
    "LinearLogistic",
    "SingularSystemError",
    "ols_closed_form",
]


class SingularSystemError(ValueError):
    """Normal equations are singular; retry with a positive ridge."""


class LinearLeastSquares(PerSampleLoss):
    """0.5 * (y - w @ x)**2 with gradient -(y - w @ x) * x."""

    def value(self, w, x, y):
        r = y - x @ w
        return 0.5 * r * r

    def gradient(self, w, x, y):
        return -(y - x @ w) * np.asarray(x, dtype=float)

    def batch_values(self, w, X, y):
        r = y - X @ w
        return 0.5 * r * r

    def weighted_gradient_sum(self, w, X, y, q):
        r = y - X @ w
        return -(X.T @ (q * r))


class LinearLogistic(PerSampleLoss):
    """log(1 + exp(-y * w @ x)) for labels y in {-1, +1}.

    Evaluated through the stable softplus form, so margins of magnitude
    several hundred neither overflow nor lose the sign.
    """

    @staticmethod
    def _check_label(y):
        if y not in (-1, 1):
            raise ValueError(f"logistic targets must be -1 or +1, got {y!r}")

    def value(self, w, x, y):
        self._check_label(y)
        return float(np.logaddexp(0.0, -y * (x @ w)))

    def gradient(self, w, x, y):
        self._check_label(y)
        m = y * (x @ w)
        return -y * expit(-m) * np.asarray(x, dtype=float)

    def batch_values(self, w, X, y):
        if not np.isin(y, (-1.0, 1.0)).all():
            bad = int(np.flatnonzero(~np.isin(y, (-1.0, 1.0)))[0])
            raise ValueError(f"logistic targets must be -1 or +1, got {y[bad]!r} at sample {bad}")
        return np.logaddexp(0.0, -y * (X @ w))

    def weighted_gradient_sum(self, w, X, y, q):
        m = y * (X @ w)
        coef = -y * expit(-m) * q
        return X.T @ coef


def ols_closed_form(data: Dataset, ridge: float = 0.0) -> np.ndarray:
    """Least-squares parameters from a dense solve of the normal equations.

    Solves (X^T X + ridge * I) w = X^T y.  With ridge = 0 a singular or
    numerically rank-deficient system raises :class:`SingularSystemError`.
    """
    if ridge < 0.0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    X, y = data.features, data.targets
    A = X.T @ X + ridge * np.eye(data.d)
    b = X.T @ y
    advice = "normal equations are singular; pass ridge > 0"
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(advice) from exc
    if not np.isfinite(w).all() or (ridge == 0.0 and np.linalg.cond(A) > 1e14):
        raise SingularSystemError(advice)
    return w
