"""GP-LVM container, marginal likelihood and MAP training of latent points."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist

from .errors import InputError, NumericalError
from .kernel import KernelParams, cholesky_jitter, cross_kernel, gram_matrix, sq_dist

log = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LatentModel:
    """Latent coordinates ``X`` (N x q), centred data ``Y`` (N x p) and kernel
    parameters, with the Cholesky factor of the noisy Gram matrix and
    ``K~^{-1} Y`` cached at construction.

    Instances are immutable; use :meth:`with_X` / :meth:`with_params` to derive
    new ones.
    """

    X: np.ndarray
    Y: np.ndarray
    params: KernelParams
    Y_mean: np.ndarray | None = None
    chol: np.ndarray = field(init=False, repr=False)
    alpha_vec: np.ndarray = field(init=False, repr=False)
    jitter: float = field(init=False, default=0.0)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2:
            raise InputError("X and Y must be 2-d arrays")
        if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
            raise InputError(f"X and Y must have the same (non-zero) row count, got {X.shape[0]} and {Y.shape[0]}")
        if X.shape[1] < 1:
            raise InputError("latent dimension must be >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("X and Y must be finite")
        Y_mean = np.zeros(Y.shape[1]) if self.Y_mean is None else np.asarray(self.Y_mean, dtype=float)
        if Y_mean.shape != (Y.shape[1],) or not np.all(np.isfinite(Y_mean)):
            raise InputError("Y_mean must be a finite vector of length p")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))
        object.__setattr__(self, "Y_mean", _frozen(Y_mean))

        L, jitter = cholesky_jitter(gram_matrix(X, self.params, add_noise=True), self.params.alpha)
        object.__setattr__(self, "chol", _frozen(L))
        object.__setattr__(self, "jitter", jitter)
        object.__setattr__(self, "alpha_vec", _frozen(self.solve(Y)))

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.Y.shape[1]

    def solve(self, B: np.ndarray) -> np.ndarray:
        """``K~^{-1} B`` through the cached factor."""
        return linalg.cho_solve((self.chol, True), B, check_finite=False)

    def noisy_gram(self) -> np.ndarray:
        K = gram_matrix(self.X, self.params, add_noise=True)
        if self.jitter:
            K[np.diag_indices_from(K)] += self.jitter
        return K

    def with_X(self, X) -> LatentModel:
        return LatentModel(X, self.Y, self.params, self.Y_mean)

    def with_params(self, params: KernelParams) -> LatentModel:
        return LatentModel(self.X, self.Y, params, self.Y_mean)


def log_marginal_likelihood(model: LatentModel) -> float:
    N, p = model.N, model.p
    logdet = 2.0 * np.sum(np.log(np.diag(model.chol)))
    quad = float(np.sum(model.Y * model.alpha_vec))
    return -0.5 * N * p * math.log(2 * math.pi) - 0.5 * p * logdet - 0.5 * quad


def _dL_dK(model: LatentModel) -> np.ndarray:
    A = model.alpha_vec
    Kinv = model.solve(np.eye(model.N))
    return 0.5 * (A @ A.T - model.p * Kinv)


def likelihood_grad_X(model: LatentModel) -> np.ndarray:
    """Gradient of the log marginal likelihood with respect to ``X``."""
    W = _dL_dK(model)
    K = cross_kernel(model.X, model.X, model.params)
    M = W * K
    X = model.X
    # d k(x_a, x_b) / d x_a = -omega (x_a - x_b) k_ab; factor 2 from symmetry of W
    return -2.0 * model.params.omega * (M.sum(axis=1)[:, None] * X - M @ X)


def likelihood_grad_log_params(model: LatentModel) -> np.ndarray:
    """Gradient with respect to ``(log alpha, log omega, log beta)``."""
    W = _dL_dK(model)
    K = cross_kernel(model.X, model.X, model.params)
    r2 = sq_dist(model.X, model.X)
    g_alpha = np.sum(W * K)
    g_omega = np.sum(W * (-0.5 * model.params.omega * r2 * K))
    g_beta = -np.trace(W) / model.params.beta
    return np.array([g_alpha, g_omega, g_beta])


@dataclass
class TrainOptions:
    max_iter: int = 2000
    step_size: float = 1e-3
    tol: float = 1e-4
    learn_hyperparams: bool = False
    seed: int = 0
    init_noise: float = 0.0
    alpha: float | None = None
    omega: float | None = None
    beta: float | None = None


@dataclass(frozen=True)
class TrainReport:
    trace: tuple[float, ...]
    iterations: int
    converged: bool
    grad_norm: float


def pca_init(Y: np.ndarray, q: int) -> np.ndarray:
    """Top-``q`` principal component scores of centred ``Y``, scaled to unit
    overall variance; signs fixed so the largest-magnitude loading is positive."""
    Yc = Y - Y.mean(axis=0)
    U, S, Vt = np.linalg.svd(Yc, full_matrices=False)
    Vq = Vt[:q]
    signs = np.sign(Vq[np.arange(q), np.argmax(np.abs(Vq), axis=1)])
    signs[signs == 0] = 1.0
    X = (Yc @ Vq.T) * signs
    scale = X.std()
    return X / scale if scale > 0 else X


def median_heuristic_omega(X: np.ndarray) -> float:
    d = pdist(X)
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return 1.0 / float(np.median(d)) ** 2


def _pack(model: LatentModel, learn: bool) -> np.ndarray:
    theta = model.X.ravel()
    if learn:
        pr = model.params
        theta = np.concatenate([theta, np.log([pr.alpha, pr.omega, pr.beta])])
    return theta


def _unpack(theta: np.ndarray, template: LatentModel, learn: bool) -> LatentModel:
    N, q = template.N, template.q
    X = theta[: N * q].reshape(N, q)
    if learn:
        a, w, b = np.exp(theta[N * q:])
        return LatentModel(X, template.Y, KernelParams(a, w, b), template.Y_mean)
    return template.with_X(X)


def _objective(model: LatentModel, learn: bool) -> tuple[float, np.ndarray]:
    L = log_marginal_likelihood(model)
    g = likelihood_grad_X(model).ravel()
    if learn:
        g = np.concatenate([g, likelihood_grad_log_params(model)])
    return L, g


def _try_model(theta, template, learn):
    try:
        m = _unpack(theta, template, learn)
        value = log_marginal_likelihood(m)
    except (NumericalError, InputError, FloatingPointError):
        return None, -math.inf
    if not math.isfinite(value):
        return None, -math.inf
    return m, value


def train(model: LatentModel, opts: TrainOptions | None = None) -> tuple[LatentModel, TrainReport]:
    """Gradient ascent on the log marginal likelihood with a halving line search.

    A step is accepted only if it does not decrease the likelihood, so the
    returned trace is non-decreasing.
    """
    opts = opts or TrainOptions()
    learn = opts.learn_hyperparams
    L, g = _objective(model, learn)
    if not math.isfinite(L):
        raise NumericalError("non-finite log-likelihood at iteration 0")
    trace = [L]
    step = opts.step_size
    converged = False
    iterations = 0
    while iterations < opts.max_iter:
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite likelihood gradient at iteration {iterations}")
        if float(np.max(np.abs(g))) < opts.tol:
            converged = True
            break
        theta = _pack(model, learn)
        accepted = None
        for _ in range(31):
            cand, value = _try_model(theta + step * g, model, learn)
            if cand is not None and value >= L:
                accepted = cand
                break
            step *= 0.5
        if accepted is None:
            log.debug("line search exhausted at iteration %d", iterations)
            break
        iterations += 1
        model = accepted
        L, g = _objective(model, learn)
        if not math.isfinite(L):
            raise NumericalError(f"non-finite log-likelihood at iteration {iterations}")
        trace.append(L)
        step *= 2.0
    gnorm = float(np.max(np.abs(g)))
    return model, TrainReport(tuple(trace), iterations, converged, gnorm)


def init_model(Y, q: int, opts: TrainOptions | None = None) -> LatentModel:
    """Centre ``Y``, initialise ``X`` by PCA and pick default hyperparameters."""
    opts = opts or TrainOptions()
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InputError("Y must be a 2-d array")
    N, p = Y.shape
    if N < 2:
        raise InputError(f"need at least 2 observations, got {N}")
    if not 1 <= q < p:
        raise InputError(f"latent dimension must satisfy 1 <= q < p (q={q}, p={p})")
    if not np.all(np.isfinite(Y)):
        raise InputError("data contains non-finite values")
    Y_mean = Y.mean(axis=0)
    X = pca_init(Y, q)
    if opts.init_noise > 0:
        rng = np.random.default_rng(opts.seed)
        X = X + opts.init_noise * rng.standard_normal(X.shape)
    params = KernelParams(
        alpha=1.0 if opts.alpha is None else opts.alpha,
        omega=median_heuristic_omega(X) if opts.omega is None else opts.omega,
        beta=100.0 if opts.beta is None else opts.beta,
    )
    return LatentModel(X, Y - Y_mean, params, Y_mean)


def fit_gplvm(Y, q: int, opts: TrainOptions | None = None) -> LatentModel:
    model, _ = fit_gplvm_with_report(Y, q, opts)
    return model


def fit_gplvm_with_report(Y, q: int, opts: TrainOptions | None = None) -> tuple[LatentModel, TrainReport]:
    opts = opts or TrainOptions()
    return train(init_model(Y, q, opts), opts)


def posterior_mean(model: LatentModel, x_star) -> np.ndarray:
    """Posterior mean of the latent mapping (centred data space).

    Accepts a single point (q,) or a batch (n, q).
    """
    x = np.asarray(x_star, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != model.q:
        raise InputError(f"dimension mismatch: point has {pts.shape[1]} coordinates, model has q={model.q}")
    out = cross_kernel(pts, model.X, model.params) @ model.alpha_vec
    return out[0] if single else out


def avg_training_error(model: LatentModel) -> float:
    resid = posterior_mean(model, model.X) - model.Y
    return float(np.mean(np.linalg.norm(resid, axis=1)))


__all__ = [
    "LatentModel",
    "TrainOptions",
    "TrainReport",
    "avg_training_error",
    "fit_gplvm",
    "fit_gplvm_with_report",
    "init_model",
    "likelihood_grad_X",
    "likelihood_grad_log_params",
    "log_marginal_likelihood",
    "median_heuristic_omega",
    "pca_init",
    "posterior_mean",
    "train",
]
