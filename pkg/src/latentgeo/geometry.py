"""Jacobian posterior of the GP-LVM mapping and the random metric it induces.

The Jacobian ``J`` (p x q) at a latent point has independent Gaussian rows
with per-row means and one shared covariance ``Sigma_J``.  Its Gram matrix
``G = J^T J`` is non-central Wishart with ``p`` degrees of freedom, and the
expected metric is ``E[J]^T E[J] + p Sigma_J``.

Derivative layout: ``dg`` is ``q^2 x q``; column ``m`` holds the column-major
``vec`` of ``dG/dx_m``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InputError, NumericalError
from .gp import LatentModel
from .kernel import cross_hessian_at_point, grad_block, second_deriv_block


@dataclass(frozen=True)
class JacobianPosterior:
    mean: np.ndarray  # p x q, row j is the mean of J[j, :]
    cov: np.ndarray  # q x q, shared across rows
    clipped: float = 0.0  # eigenvalue mass removed by PSD repair

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    @property
    def q(self) -> int:
        return self.mean.shape[1]


@dataclass(frozen=True)
class MetricEvaluation:
    g: np.ndarray
    dg: np.ndarray | None = None
    jitter: float = 0.0
    clipped: float = 0.0

    def slices(self) -> np.ndarray:
        """``dg`` unstacked to shape (q, q, q): ``[m]`` is ``dG/dx_m``."""
        if self.dg is None:
            raise ValueError("no derivative stored")
        q = self.g.shape[0]
        return np.stack([self.dg[:, m].reshape(q, q, order="F") for m in range(q)])


@dataclass(frozen=True)
class WishartParams:
    dof: int
    scale: np.ndarray
    noncentrality_base: np.ndarray

    def noncentrality(self) -> np.ndarray:
        """``scale^{-1} @ noncentrality_base``; raises if the scale is singular."""
        try:
            c, low = linalg.cho_factor(self.scale)
        except linalg.LinAlgError as exc:
            raise NumericalError("Wishart scale matrix is singular") from exc
        return linalg.cho_solve((c, low), self.noncentrality_base)


def _check_point(model: LatentModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.q,):
        raise InputError(f"latent point must have shape ({model.q},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("latent point must be finite")
    return x


def _psd_repair(cov: np.ndarray) -> tuple[np.ndarray, float]:
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w[0] >= 0:
        return cov, 0.0
    clipped = float(-w[w < 0].sum())
    w = np.clip(w, 0.0, None)
    cov = (V * w) @ V.T
    return 0.5 * (cov + cov.T), clipped


def _spd_with_jitter(g: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        linalg.cholesky(g, lower=True)
        return g, 0.0
    except linalg.LinAlgError:
        pass
    q = g.shape[0]
    jitter = 1e-12 * np.trace(g) / q
    if not jitter > 0:
        jitter = 1e-12
    return g + jitter * np.eye(q), jitter


def jacobian_posterior(model: LatentModel, x_star) -> JacobianPosterior:
    x = _check_point(model, x_star)
    dK = grad_block(x, model.X, model.params)  # N x q
    mean = model.alpha_vec.T @ dK  # p x q
    cov = cross_hessian_at_point(model.params, model.q) - dK.T @ model.solve(dK)
    cov, clipped = _psd_repair(cov)
    return JacobianPosterior(mean, cov, clipped)


def metric_from_posterior(post: JacobianPosterior) -> tuple[np.ndarray, float]:
    """``E[J]^T E[J] + p Sigma_J`` and the jitter that was needed (if any)."""
    g = post.mean.T @ post.mean + post.p * post.cov
    return _spd_with_jitter(0.5 * (g + g.T))


def expected_metric(model: LatentModel, x_star) -> MetricEvaluation:
    post = jacobian_posterior(model, x_star)
    g, jitter = metric_from_posterior(post)
    return MetricEvaluation(g, None, jitter, post.clipped)


def metric_derivative(model: LatentModel, x_star) -> MetricEvaluation:
    """Expected metric and its derivative along each latent coordinate.

    The prior block of the Jacobian covariance is constant for the RBF
    kernel, so only the posterior correction contributes to the covariance
    term of the derivative.
    """
    x = _check_point(model, x_star)
    q, p = model.q, model.p
    dK = grad_block(x, model.X, model.params)  # N x q
    H = second_deriv_block(x, model.X, model.params)  # N x q x q, H[:, l, m] = d dK[:, l] / dx_m
    KinvdK = model.solve(dK)
    mean = model.alpha_vec.T @ dK
    cov, clipped = _psd_repair(cross_hessian_at_point(model.params, q) - dK.T @ KinvdK)
    g, jitter = metric_from_posterior(JacobianPosterior(mean, cov, clipped))

    dg = np.empty((q * q, q))
    for m in range(q):
        Hm = H[:, :, m]
        dmean = model.alpha_vec.T @ Hm
        dcov = -(Hm.T @ KinvdK + KinvdK.T @ Hm)
        dG = dmean.T @ mean + mean.T @ dmean + p * dcov
        dG = 0.5 * (dG + dG.T)
        dg[:, m] = dG.ravel(order="F")
    return MetricEvaluation(g, dg, jitter, clipped)


def expected_metric_batch(model: LatentModel, points, chunk: int = 4096) -> np.ndarray:
    """Expected metric at many points at once, shape (M, q, q).

    Same algebra as :func:`expected_metric`, vectorised over points.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != model.q:
        raise InputError(f"points must have shape (M, {model.q})")
    out = np.empty((P.shape[0], model.q, model.q))
    pr = model.params
    prior = cross_hessian_at_point(pr, model.q)
    Kinv = model.solve(np.eye(model.N))
    Kinv = 0.5 * (Kinv + Kinv.T)
    At = model.alpha_vec.T  # p x N
    for s in range(0, P.shape[0], chunk):
        Pc = P[s:s + chunk]
        M = Pc.shape[0]
        delta = Pc[:, None, :] - model.X[None, :, :]  # M x N x q
        k = pr.alpha * np.exp(-0.5 * pr.omega * (delta ** 2).sum(axis=2))
        dK = -pr.omega * delta * k[:, :, None]
        dKt = dK.transpose(0, 2, 1)  # M x q x N
        mean = At[None] @ dK  # M x p x q
        cov = prior[None] - dKt @ (Kinv[None] @ dK)
        cov = 0.5 * (cov + cov.transpose(0, 2, 1))
        bad = np.linalg.eigvalsh(cov)[:, 0] < 0
        for i in np.flatnonzero(bad):
            cov[i], _ = _psd_repair(cov[i])
        g = mean.transpose(0, 2, 1) @ mean + model.p * cov
        g = 0.5 * (g + g.transpose(0, 2, 1))
        for i in np.flatnonzero(np.linalg.eigvalsh(g)[:, 0] <= 0):
            g[i], _ = _spd_with_jitter(g[i])
        out[s:s + M] = g
    return out


def magnification_from_metric(g: np.ndarray) -> float:
    """``sqrt(det g)`` via the Cholesky diagonal."""
    try:
        L = linalg.cholesky(g, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("expected metric is not positive definite") from exc
    return float(np.prod(np.diag(L)))


def magnification_factor(model: LatentModel, x_star) -> float:
    """``sqrt(det G)`` of the expected metric."""
    return magnification_from_metric(expected_metric(model, x_star).g)


def wishart_params(model: LatentModel, x_star) -> WishartParams:
    post = jacobian_posterior(model, x_star)
    return WishartParams(dof=model.p, scale=post.cov, noncentrality_base=post.mean.T @ post.mean)


def sample_jacobian(post: JacobianPosterior, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw Jacobians (rows independent, shared covariance)."""
    w, V = np.linalg.eigh(post.cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    shape = (post.p, post.q) if size is None else (size, post.p, post.q)
    Z = rng.standard_normal(shape)
    return post.mean + Z @ root.T


def sample_metric(model: LatentModel, x_star, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``J^T J`` under the Jacobian posterior."""
    post = jacobian_posterior(model, x_star)
    if not np.any(post.cov):
        return post.mean.T @ post.mean
    J = sample_jacobian(post, rng)
    G = J.T @ J
    return 0.5 * (G + G.T)


def grid_centers(bounds, resolution) -> tuple[np.ndarray, tuple[int, ...]]:
    """Cell centres of a box, row-major (first axis slowest)."""
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2:
        raise InputError("bounds must be a sequence of (low, high) pairs")
    res = tuple(int(r) for r in np.broadcast_to(resolution, (bounds.shape[0],)))
    if any(r < 1 for r in res):
        raise InputError("resolution must be >= 1 along each axis")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InputError("each bound must satisfy low < high")
    axes = [lo + (np.arange(r) + 0.5) * (hi - lo) / r for (lo, hi), r in zip(bounds, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), res


def mf_grid(model: LatentModel, bounds, resolution) -> tuple[np.ndarray, np.ndarray]:
    """Magnification factor at cell centres.

    Returns ``(centers, values)`` with ``centers`` of shape (M, q) in row-major
    order and ``values`` of shape ``resolution``.
    """
    if len(bounds) != model.q:
        raise InputError(f"bounds must have {model.q} axes")
    centers, res = grid_centers(bounds, resolution)
    G = expected_metric_batch(model, centers)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("expected metric is not positive definite on the grid") from exc
    values = np.prod(np.diagonal(L, axis1=1, axis2=2), axis=1)
    return centers, values.reshape(res)


__all__ = [
    "JacobianPosterior",
    "MetricEvaluation",
    "WishartParams",
    "expected_metric",
    "expected_metric_batch",
    "grid_centers",
    "jacobian_posterior",
    "magnification_factor",
    "magnification_from_metric",
    "metric_from_posterior",
    "metric_derivative",
    "mf_grid",
    "sample_jacobian",
    "sample_metric",
    "wishart_params",
]
