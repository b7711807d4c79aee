"""Variable-step time filter lifting the theta-scheme to second order.

With ``tau = k_m / k_{m-1}`` the filter replaces the provisional value by

    y^{m+1} = yhat - kappa * (yhat / (1 + tau) - y^m + tau * y^{m-1} / (1 + tau))
    kappa   = (1 - 2 theta)(1 + tau) tau / (2 (1 - theta) tau + 1)

The bracket is a scaled second divided difference, so the filter leaves
linear-in-time data untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FilterCoefficients:
    theta: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"step ratio must be positive, got {self.tau}")

    @property
    def kappa(self) -> float:
        th, tau = self.theta, self.tau
        return (1 - 2 * th) * (1 + tau) * tau / (2 * (1 - th) * tau + 1)

    @property
    def inner_weights(self) -> tuple[float, float, float]:
        """Bracket weights on (yhat, y^m, y^{m-1})."""
        tau = self.tau
        return 1 / (1 + tau), -1.0, tau / (1 + tau)

    @property
    def reconstruction_weights(self) -> tuple[float, float, float]:
        """Weights on (y^{m+1}, y^m, y^{m-1}) recovering yhat from filtered values."""
        th, tau = self.theta, self.tau
        return (
            (2 * (1 - th) * tau + 1) / (tau + 1),
            -(1 - 2 * th) * tau,
            (1 - 2 * th) * tau**2 / (tau + 1),
        )


def filter_correction(y_hat, y_m, y_m1, theta: float, tau: float):
    """The term subtracted by the filter; also the unfiltered error estimate."""
    c = FilterCoefficients(theta, tau)
    a, b, d = c.inner_weights
    return c.kappa * (a * np.asarray(y_hat) + b * np.asarray(y_m) + d * np.asarray(y_m1))


def apply_filter(y_hat, y_m, y_m1, theta: float, tau: float):
    return np.asarray(y_hat) - filter_correction(y_hat, y_m, y_m1, theta, tau)


def reconstruct_provisional(y_new, y_m, y_m1, theta: float, tau: float):
    """Inverse of :func:`apply_filter` with respect to its first argument."""
    w2, w1, w0 = FilterCoefficients(theta, tau).reconstruction_weights
    return w2 * np.asarray(y_new) + w1 * np.asarray(y_m) + w0 * np.asarray(y_m1)
