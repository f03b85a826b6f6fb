"""Greedy per-agent ridge baseline.

Each agent fits its action to the windowed residuals of the prediction
dynamics by discounted ridge regression:

    min_b  sum_s exp(-alpha (t-1-s)) || resid_s - Z_s b ||^2 + gamma ||b||^2

with resid_s = y_{s+1} - theta Y_s - theta_bar Y^(N)_s. The discount is
applied as exp(-alpha (t-1-s) / 2) row weights on both Z_s and resid_s,
which makes the weighted least-squares objective exactly the discounted
one, and the unique minimizer is the normal-equations solution
(X'X + gamma I)^{-1} X' ybar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RidgeConfig:
    window_T: int
    alpha: float
    gamma: float

    def __post_init__(self):
        if self.window_T < 1:
            raise ValueError("window_T must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


def ridge_design(history, cfg: RidgeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stack the windowed (Z, residual) pairs with discount row weights.

    ``history`` is ordered oldest to newest; the newest row gets weight 1.
    """
    if not history:
        raise ValueError("ridge window is empty")
    rows = []
    rhs = []
    last = len(history) - 1
    for i, (z, resid) in enumerate(history):
        w = np.exp(-cfg.alpha * (last - i) / 2.0)
        rows.append(w * np.asarray(z, dtype=float))
        rhs.append(w * np.asarray(resid, dtype=float).reshape(-1))
    return np.vstack(rows), np.concatenate(rhs)


def ridge_action(history, cfg: RidgeConfig) -> np.ndarray:
    """Unique minimizer of the discounted ridge objective."""
    X, ybar = ridge_design(history, cfg)
    d = X.shape[1]
    return np.linalg.solve(X.T @ X + cfg.gamma * np.eye(d), X.T @ ybar)
