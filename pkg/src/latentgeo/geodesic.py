"""Geodesics under a latent-space metric.

Geodesics are found in two phases: a discrete path-energy relaxation from the
straight segment, then single shooting (RK4 + Newton on the initial velocity)
started from the relaxed curve.  If shooting fails the relaxed curve is
returned, flagged as not converged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .errors import InputError, NumericalError
from .gp import LatentModel, posterior_mean
from .metrics import as_metric

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Curve:
    nodes: np.ndarray  # T x q
    params: np.ndarray  # T, 0 = t_0 < ... < t_{T-1} = 1
    velocities: np.ndarray | None = None

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        params = np.asarray(self.params, dtype=float)
        if nodes.shape[0] < 2 or params.shape != (nodes.shape[0],):
            raise InputError("a curve needs T >= 2 nodes and one parameter value per node")
        if params[0] != 0.0 or params[-1] != 1.0 or np.any(np.diff(params) <= 0):
            raise InputError("curve parameters must increase strictly from 0 to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "params", params)

    @classmethod
    def straight(cls, x1, x2, T: int = 32) -> Curve:
        t = np.linspace(0.0, 1.0, T)
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        nodes = x1[None] + t[:, None] * (x2 - x1)[None]
        nodes[-1] = x2
        return cls(nodes, t, np.broadcast_to(x2 - x1, nodes.shape).copy())


@dataclass
class SolverInfo:
    method: str  # "shooting" or "relaxation"
    converged: bool
    iterations: int = 0
    relax_iterations: int = 0
    relax_energy: float = float("nan")
    message: str = ""


@dataclass(frozen=True)
class GeodesicResult:
    curve: Curve
    length: float
    endpoint_residual: float
    solver: SolverInfo

    @property
    def converged(self) -> bool:
        return self.solver.converged

    def to_dict(self) -> dict:
        return {
            "length": float(self.length),
            "endpoint_residual": float(self.endpoint_residual),
            "converged": bool(self.solver.converged),
            "method": self.solver.method,
            "nodes": self.curve.nodes.tolist(),
            "params": self.curve.params.tolist(),
        }


@dataclass
class BVPOptions:
    nodes: int = 32
    relax_tol: float = 1e-6
    relax_max_iter: int = 500
    steps: int = 128
    tol: float | None = None  # default 1e-4 * |x2 - x1|
    max_newton: int = 25
    length_guard: float = 0.05


class _MemoMetric:
    """Per-solve memo of metric evaluations keyed by the exact point."""

    def __init__(self, metric):
        self.inner = metric
        self.dim = metric.dim
        self._g = {}
        self._gd = {}

    def metric(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._g:
            self._g[key] = self.inner.metric(x)
        return self._g[key]

    def metric_with_derivative(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._gd:
            self._gd[key] = self.inner.metric_with_derivative(x)
        return self._gd[key]

    def metric_batch(self, points):
        return _metric_batch(self.inner, points)


def _metric_batch(metric, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if hasattr(metric, "metric_batch"):
        return metric.metric_batch(points)
    return np.stack([metric.metric(x) for x in points])


def geodesic_rhs(model, gamma, gamma_dot) -> np.ndarray:
    """Acceleration of a geodesic through ``gamma`` with velocity ``gamma_dot``.

    With ``D_m = dG/dx_m`` the Christoffel contraction is
    ``G a = -(sum_i v_i D_i) v + 1/2 [v^T D_m v]_m``; the second term is
    ``dg^T (v kron v)``.
    """
    metric = as_metric(model)
    v = np.asarray(gamma_dot, dtype=float)
    g, dg = metric.metric_with_derivative(np.asarray(gamma, dtype=float))
    q = v.size
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is caught below
        first = (dg @ v).reshape(q, q, order="F") @ v
        second = dg.T @ np.kron(v, v)
        rhs = first - 0.5 * second
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(rhs))):
        raise NumericalError("non-finite metric or velocity in the geodesic equation")
    try:
        c = linalg.cho_factor(g, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("metric is not positive definite along the curve") from exc
    return -linalg.cho_solve(c, rhs)


def integrate_ivp(model, x0, v0, steps: int = 128) -> Curve:
    """Classical RK4 on ``(gamma, gamma')`` over ``t in [0, 1]`` with fixed step."""
    if steps < 8:
        raise InputError("integrate_ivp needs at least 8 steps")
    metric = as_metric(model)
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    h = 1.0 / steps
    nodes = np.empty((steps + 1, x.size))
    vels = np.empty_like(nodes)
    nodes[0], vels[0] = x, v

    def f(xs, vs):
        return vs, geodesic_rhs(metric, xs, vs)

    for i in range(steps):
        try:
            k1x, k1v = f(x, v)
            k2x, k2v = f(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = f(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = f(x + h * k3x, v + h * k3v)
        except NumericalError as exc:
            raise NumericalError(f"integration step {i + 1}: {exc}") from exc
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise NumericalError(f"non-finite state at integration step {i + 1}")
        nodes[i + 1], vels[i + 1] = x, v
    return Curve(nodes, np.linspace(0.0, 1.0, steps + 1), vels)


def curve_length(model, curve) -> float:
    """Riemannian length of a polyline, metric sampled at segment midpoints."""
    metric = as_metric(model)
    nodes = curve.nodes if isinstance(curve, Curve) else np.atleast_2d(np.asarray(curve, dtype=float))
    if nodes.shape[0] < 2:
        raise InputError("a curve needs at least two nodes")
    return float(np.sum(segment_lengths(metric, nodes)))


def segment_lengths(metric, nodes: np.ndarray) -> np.ndarray:
    d = np.diff(nodes, axis=0)
    if not np.any(d):
        return np.zeros(d.shape[0])
    G = _metric_batch(metric, 0.5 * (nodes[1:] + nodes[:-1]))
    sq = np.einsum("ti,tij,tj->t", d, G, d)
    return np.sqrt(np.clip(sq, 0.0, None))


def _path_energy(interior: np.ndarray, metric, x1, x2, T: int) -> tuple[float, np.ndarray]:
    q = x1.size
    nodes = np.vstack([x1, interior.reshape(T - 2, q), x2])
    dt = 1.0 / (T - 1)
    d = np.diff(nodes, axis=0)
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    energy = 0.0
    grad = np.zeros_like(nodes)
    for i in range(T - 1):
        g, dg = metric.metric_with_derivative(mids[i])
        Gd = g @ d[i]
        energy += d[i] @ Gd
        # the midpoint moves by half of either node's displacement
        b = dg.T @ np.kron(d[i], d[i])
        grad[i + 1] += 2 * Gd + 0.5 * b
        grad[i] += -2 * Gd + 0.5 * b
    return energy / dt, (grad[1:-1] / dt).ravel()


def relax_path(model, x1, x2, nodes: int = 32, tol: float = 1e-6, max_iter: int = 500):
    """Minimise the discrete path energy over interior nodes.

    Returns ``(curve, iterations, energy)``.
    """
    metric = as_metric(model)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    init = Curve.straight(x1, x2, nodes)
    if nodes <= 2:
        return init, 0, float("nan")
    res = optimize.minimize(
        _path_energy,
        init.nodes[1:-1].ravel(),
        args=(metric, x1, x2, nodes),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-12, "maxcor": 20},
    )
    interior = res.x.reshape(nodes - 2, x1.size)
    path = np.vstack([x1, interior, x2])
    return Curve(path, init.params), int(res.nit), float(res.fun)


def _shoot(metric, x1, x2, v0, steps, tol, max_newton):
    """Damped Newton on the initial velocity.  Returns ``(curve, iters)`` or
    ``(None, iters)`` on failure."""
    q = x1.size

    def endpoint(v):
        c = integrate_ivp(metric, x1, v, steps)
        return c, c.nodes[-1] - x2

    try:
        curve, r = endpoint(v0)
    except NumericalError:
        return None, 0
    v = v0
    for it in range(1, max_newton + 1):
        if np.linalg.norm(r) < tol:
            return curve, it - 1
        h = 1e-5 * (1.0 + np.linalg.norm(v))
        J = np.empty((q, q))
        try:
            for j in range(q):
                e = np.zeros(q)
                e[j] = h
                J[:, j] = (endpoint(v + e)[1] - r) / h
        except NumericalError:
            return None, it
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        accepted = False
        while t >= 1.0 / 64:
            try:
                c_new, r_new = endpoint(v + t * step)
            except NumericalError:
                t *= 0.5
                continue
            if np.linalg.norm(r_new) < np.linalg.norm(r):
                v, curve, r = v + t * step, c_new, r_new
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return None, it
    if np.linalg.norm(r) < tol:
        return curve, max_newton
    return None, max_newton


def solve_geodesic_bvp(model, x1, x2, opts: BVPOptions | None = None) -> GeodesicResult:
    """Geodesic from ``x1`` to ``x2`` (locally shortest, from a straight start)."""
    opts = opts or BVPOptions()
    metric = _MemoMetric(as_metric(model))
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != (metric.dim,) or x2.shape != (metric.dim,):
        raise InputError(f"endpoints must have dimension {metric.dim}")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise InputError("endpoints must be finite")
    dist = float(np.linalg.norm(x2 - x1))
    if dist == 0.0:
        curve = Curve(np.vstack([x1, x1]), np.array([0.0, 1.0]), np.zeros((2, x1.size)))
        return GeodesicResult(curve, 0.0, 0.0, SolverInfo("shooting", True, message="coincident endpoints"))
    tol = opts.tol if opts.tol is not None else 1e-4 * dist

    relaxed, relax_it, energy = relax_path(metric, x1, x2, opts.nodes, opts.relax_tol, opts.relax_max_iter)
    relax_len = curve_length(metric, relaxed)
    v0 = (relaxed.nodes[1] - relaxed.nodes[0]) / (relaxed.params[1] - relaxed.params[0])

    shot, newton_it = _shoot(metric, x1, x2, v0, opts.steps, tol, opts.max_newton)
    if shot is not None:
        shot_len = curve_length(metric, shot)
        if shot_len <= relax_len * (1.0 + opts.length_guard):
            resid = float(np.linalg.norm(shot.nodes[-1] - x2))
            info = SolverInfo("shooting", True, newton_it, relax_it, energy)
            return GeodesicResult(shot, shot_len, resid, info)
        msg = f"shooting converged to a longer curve ({shot_len:.6g} vs {relax_len:.6g})"
    else:
        msg = "shooting did not converge"
    log.info("%s; returning relaxed path", msg)
    info = SolverInfo("relaxation", False, newton_it, relax_it, energy, msg)
    return GeodesicResult(relaxed, relax_len, float(np.linalg.norm(relaxed.nodes[-1] - x2)), info)


def interpolate_equidistant(model, result, n: int) -> np.ndarray:
    """``n`` points at equal Riemannian arc-length spacing along a curve."""
    if n < 2:
        raise InputError("need n >= 2 interpolation points")
    metric = as_metric(model)
    curve = result.curve if isinstance(result, GeodesicResult) else result
    nodes = curve.nodes if isinstance(curve, Curve) else np.asarray(curve, dtype=float)
    seg = segment_lengths(metric, nodes)
    total = float(seg.sum())
    if total == 0.0:
        return np.repeat(nodes[-1][None], n, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, nodes.shape[1]))
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    for k, (s, i) in enumerate(zip(targets, idx)):
        frac = 0.0 if seg[i] == 0 else (s - cum[i]) / seg[i]
        out[k] = nodes[i] + min(max(frac, 0.0), 1.0) * (nodes[i + 1] - nodes[i])
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def reconstruct_path(model: LatentModel, points) -> np.ndarray:
    """Data-space reconstructions (posterior mean plus the stored column means)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return posterior_mean(model, pts) + model.Y_mean


def nearest_neighbour_distances(model: LatentModel, recon: np.ndarray) -> np.ndarray:
    """Distance from each reconstruction to the closest training observation."""
    Y = model.Y + model.Y_mean
    d2 = np.sum((recon[:, None, :] - Y[None, :, :]) ** 2, axis=2)
    return np.sqrt(d2.min(axis=1))


__all__ = [
    "BVPOptions",
    "Curve",
    "GeodesicResult",
    "SolverInfo",
    "curve_length",
    "geodesic_rhs",
    "integrate_ivp",
    "interpolate_equidistant",
    "nearest_neighbour_distances",
    "reconstruct_path",
    "relax_path",
    "segment_lengths",
    "solve_geodesic_bvp",
]
