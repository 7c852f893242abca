"""Metric fields consumed by the geodesic and oracle code.

Anything with ``dim``, ``metric(x)``, ``metric_with_derivative(x)`` and
``metric_batch(points)`` works.  :class:`ExpectedMetric` wraps a fitted model;
the analytic fields are used to check the solvers against closed forms.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError
from .geometry import expected_metric, expected_metric_batch, metric_derivative
from .gp import LatentModel


class ExpectedMetric:
    """Expected GP-LVM metric of a fitted model."""

    def __init__(self, model: LatentModel):
        self.model = model
        self.dim = model.q

    def metric(self, x) -> np.ndarray:
        return expected_metric(self.model, x).g

    def metric_with_derivative(self, x) -> tuple[np.ndarray, np.ndarray]:
        ev = metric_derivative(self.model, x)
        return ev.g, ev.dg

    def metric_batch(self, points) -> np.ndarray:
        return expected_metric_batch(self.model, points)


class ConstantMetric:
    def __init__(self, G):
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise InputError("constant metric must be a square matrix")
        np.linalg.cholesky(G)
        self.G = G
        self.dim = G.shape[0]

    def metric(self, x) -> np.ndarray:
        return self.G.copy()

    def metric_with_derivative(self, x):
        return self.G.copy(), np.zeros((self.dim ** 2, self.dim))

    def metric_batch(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(self.G, (points.shape[0], self.dim, self.dim)).copy()


class ConformalMetric:
    """``G(x) = exp(2 x_1) I``."""

    def __init__(self, dim: int = 2):
        self.dim = dim

    def metric(self, x) -> np.ndarray:
        return np.exp(2.0 * x[0]) * np.eye(self.dim)

    def metric_with_derivative(self, x):
        q = self.dim
        g = self.metric(x)
        dg = np.zeros((q * q, q))
        dg[:, 0] = (2.0 * g).ravel(order="F")
        return g, dg

    def metric_batch(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.exp(2.0 * points[:, 0])[:, None, None] * np.eye(self.dim)[None]


def as_metric(obj):
    """Wrap a :class:`LatentModel` as its expected metric; pass fields through."""
    if isinstance(obj, LatentModel):
        return ExpectedMetric(obj)
    if all(hasattr(obj, name) for name in ("dim", "metric", "metric_with_derivative")):
        return obj
    raise TypeError(f"{type(obj).__name__} is neither a LatentModel nor a metric field")
