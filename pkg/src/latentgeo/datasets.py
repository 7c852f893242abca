"""Synthetic closed-loop data for exercising the geometry end to end.

``circle_data`` samples a ring of ``p`` "pixels", each a von Mises bump in
the rotation angle, like an image of a rotating object observed at ``n``
angles.  The curve is closed and nonlinear in ``R^p``: only a few
coordinates change at any one angle.
"""
from __future__ import annotations

import numpy as np

from .gp import LatentModel, TrainOptions
from .kernel import KernelParams


def circle_data(n: int = 60, p: int = 10, kappa: float = 16.0, noise: float = 0.1,
                seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    theta = 2 * np.pi * np.arange(n) / n
    centres = 2 * np.pi * np.arange(p) / p
    Y = np.exp(kappa * (np.cos(theta[:, None] - centres[None, :]) - 1.0))
    return Y + noise * rng.standard_normal(Y.shape)


def circle_train_options(**overrides) -> TrainOptions:
    """Training options used for the circle fixture (the package defaults)."""
    return TrainOptions(**overrides)


def flat_model(offset: float = 1e3) -> LatentModel:
    """Tiny model whose training points sit ``offset`` away from the origin.

    Near the origin every kernel value underflows to zero, so the expected
    metric there is exactly ``p * omega * alpha * I = I``: a flat test model.
    """
    X = np.array([[offset, offset], [offset + 1.0, offset]])
    Y = np.array([[1.0, 0.0, -1.0], [-1.0, 0.0, 1.0]])
    return LatentModel(X, Y, KernelParams(alpha=1.0, omega=1.0 / 3.0, beta=100.0), np.zeros(3))
