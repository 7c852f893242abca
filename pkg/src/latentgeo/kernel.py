"""Squared-exponential covariance and the derivative blocks needed for
Jacobian inference.

Convention: ``k(x1, x2) = alpha * exp(-omega / 2 * |x1 - x2|^2)``.  All
derivative blocks are taken with respect to the *test* point ``x_star``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InputError, NumericalError


@dataclass(frozen=True)
class KernelParams:
    """RBF amplitude ``alpha``, inverse squared length-scale ``omega`` and
    noise precision ``beta``."""

    alpha: float = 1.0
    omega: float = 1.0
    beta: float = 100.0

    def __post_init__(self):
        for name in ("alpha", "omega", "beta"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise InputError(f"kernel parameter {name} must be finite and > 0, got {value}")
            object.__setattr__(self, name, value)

    @property
    def lengthscale(self) -> float:
        return 1.0 / math.sqrt(self.omega)

    @property
    def noise_variance(self) -> float:
        return 1.0 / self.beta

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "omega": self.omega, "beta": self.beta}


def _as_point(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InputError(f"{name} must be a non-empty vector, got shape {x.shape}")
    return x


def _as_points(X, q=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError(f"expected a non-empty 2-d array of points, got shape {X.shape}")
    if q is not None and X.shape[1] != q:
        raise InputError(f"dimension mismatch: points have {X.shape[1]} columns, expected {q}")
    return X


def sq_dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of ``A`` and ``B``."""
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def rbf(x1, x2, params: KernelParams) -> float:
    x1 = _as_point(x1, "x1")
    x2 = _as_point(x2, "x2")
    if x1.shape != x2.shape:
        raise InputError(f"dimension mismatch: {x1.shape[0]} vs {x2.shape[0]}")
    d = x1 - x2
    return params.alpha * math.exp(-0.5 * params.omega * float(d @ d))


def cross_kernel(A, B, params: KernelParams) -> np.ndarray:
    """Noise-free covariance matrix ``K[i, j] = k(A_i, B_j)``."""
    A = _as_points(A)
    B = _as_points(B, A.shape[1])
    return params.alpha * np.exp(-0.5 * params.omega * sq_dist(A, B))


def gram_matrix(X, params: KernelParams, add_noise: bool = True) -> np.ndarray:
    X = _as_points(X)
    K = cross_kernel(X, X, params)
    # exact symmetry; exp() of identical arguments already agrees but keep the diagonal tidy
    np.fill_diagonal(K, params.alpha)
    if add_noise:
        K[np.diag_indices_from(K)] += params.noise_variance
    return K


def grad_block(x_star, X, params: KernelParams) -> np.ndarray:
    """Row ``n`` is the gradient of ``k(x_n, .)`` at ``x_star`` (shape N x q)."""
    x_star = _as_point(x_star, "x_star")
    X = _as_points(X, x_star.size)
    delta = x_star[None, :] - X
    k = params.alpha * np.exp(-0.5 * params.omega * np.einsum("ij,ij->i", delta, delta))
    return -params.omega * delta * k[:, None]


def cross_hessian_at_point(params: KernelParams, q: int) -> np.ndarray:
    """Prior covariance of the derivative process at coincident inputs.

    This is ``d^2 k(x, x') / dx dx'`` at ``x = x'``, which is ``+omega * alpha * I``
    for the RBF kernel and independent of the location.
    """
    if q < 1:
        raise InputError("q must be >= 1")
    return params.omega * params.alpha * np.eye(q)


def second_deriv_block(x_star, X, params: KernelParams) -> np.ndarray:
    """Hessians of ``k(x_n, .)`` at ``x_star``, stacked into shape (N, q, q).

    Entry ``[n, i, l] = (omega^2 d_i d_l - omega delta_il) k(x_n, x_star)`` with
    ``d = x_star - x_n``.
    """
    x_star = _as_point(x_star, "x_star")
    X = _as_points(X, x_star.size)
    q = x_star.size
    delta = x_star[None, :] - X
    k = params.alpha * np.exp(-0.5 * params.omega * np.einsum("ij,ij->i", delta, delta))
    w = params.omega
    H = w * w * (delta[:, :, None] * delta[:, None, :]) - w * np.eye(q)[None]
    return H * k[:, None, None]


def cholesky_jitter(K: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``; one retry with ``1e-10 * alpha`` added to
    the diagonal.  Returns ``(L, jitter)``."""
    try:
        return linalg.cholesky(K, lower=True), 0.0
    except (linalg.LinAlgError, ValueError):
        pass
    jitter = 1e-10 * alpha
    try:
        return linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True), jitter
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("Cholesky factorisation of the kernel matrix failed after jitter") from exc
