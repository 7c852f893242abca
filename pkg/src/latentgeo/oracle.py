"""Brute-force cross-checks for the analytic machinery.

None of these call the routine they validate: finite differences treat
``posterior_mean`` / the metric as black boxes, the Monte-Carlo estimator only
sees the Gaussian parameters, and the grid search never touches the ODE.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import InputError
from .geometry import JacobianPosterior
from .gp import LatentModel, posterior_mean
from .metrics import as_metric


def n_threads() -> int:
    """Thread cap from ``LG_THREADS`` (default: all cores)."""
    raw = os.environ.get("LG_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def fd_jacobian(model, x_star, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian (p x q) of the posterior mean, or of any
    callable ``f(x) -> p-vector`` passed in place of a model."""
    if h <= 0:
        raise InputError("finite-difference step must be positive")
    f = model if callable(model) else (lambda x: posterior_mean(model, x))
    x = np.asarray(x_star, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=1)


def fd_metric_derivative(model, x_star, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``vec(G)`` per coordinate, shape (q^2, q)."""
    if h <= 0:
        raise InputError("finite-difference step must be positive")
    metric = as_metric(model)
    x = np.asarray(x_star, dtype=float)
    q = x.size
    out = np.empty((q * q, q))
    for m in range(q):
        e = np.zeros(q)
        e[m] = h
        out[:, m] = ((metric.metric(x + e) - metric.metric(x - e)) / (2 * h)).ravel(order="F")
    return out


def mc_expected_metric(posterior: JacobianPosterior, n: int, rng: np.random.Generator,
                       chunk: int = 50_000) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo mean of ``J^T J`` and its entrywise standard error."""
    if n < 1000:
        raise InputError("need at least 1000 Monte-Carlo samples")
    mean, cov = posterior.mean, posterior.cov
    p, q = mean.shape
    if not np.any(cov):
        G = mean.T @ mean
        return G, np.zeros_like(G)
    # Cholesky of a PSD matrix via eigendecomposition (cov may be singular)
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    total = np.zeros((q, q))
    total_sq = np.zeros((q, q))
    done = 0
    while done < n:
        b = min(chunk, n - done)
        J = mean[None] + rng.standard_normal((b, p, q)) @ root.T
        G = np.einsum("bji,bjk->bik", J, J)
        total += G.sum(axis=0)
        total_sq += np.einsum("bik,bik->ik", G, G)
        done += b
    avg = total / n
    var = (total_sq - n * avg ** 2) / (n - 1)
    return avg, np.sqrt(np.clip(var, 0.0, None) / n)


@dataclass(frozen=True)
class GridGraph:
    bounds: np.ndarray  # 2 x 2, rows are (low, high) per axis
    resolution: tuple[int, int]
    offsets: tuple[tuple[int, int], ...]
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.linspace(lo, hi, r) for (lo, hi), r in zip(self.bounds, self.resolution))

    def node_coords(self, idx) -> np.ndarray:
        a0, a1 = self.axes
        i, j = np.unravel_index(np.asarray(idx), self.resolution)
        return np.stack([a0[i], a1[j]], axis=-1)

    def nearest(self, x) -> tuple[int, float]:
        a0, a1 = self.axes
        i = int(np.argmin(np.abs(a0 - x[0])))
        j = int(np.argmin(np.abs(a1 - x[1])))
        idx = int(np.ravel_multi_index((i, j), self.resolution))
        return idx, float(np.linalg.norm(self.node_coords(idx) - x))

    @property
    def cell_diagonal(self) -> float:
        return float(np.hypot(*(np.diff(self.bounds, axis=1)[:, 0] / (np.asarray(self.resolution) - 1))))


_OFFSETS = {
    8: ((0, 1), (1, 0), (1, 1), (1, -1)),
    16: ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (2, 1), (2, -1), (1, -2)),
}
_OFFSETS[32] = _OFFSETS[16] + ((1, 3), (3, 1), (3, -1), (1, -3), (2, 3), (3, 2), (3, -2), (2, -3))


def build_grid_graph(model, bounds, resolution=200, connectivity: int = 32) -> GridGraph:
    """Lattice over a 2-d box with Riemannian edge weights ``sqrt(d^T G(mid) d)``."""
    metric = as_metric(model)
    if metric.dim != 2:
        raise InputError("grid search is only supported for a 2-d latent space")
    if connectivity not in _OFFSETS:
        raise InputError("connectivity must be 8, 16 or 32")
    bounds = np.asarray(bounds, dtype=float)
    res = tuple(int(r) for r in np.broadcast_to(resolution, (2,)))
    if min(res) < 2:
        raise InputError("grid resolution must be >= 2 per axis")
    a0 = np.linspace(bounds[0, 0], bounds[0, 1], res[0])
    a1 = np.linspace(bounds[1, 0], bounds[1, 1], res[1])
    I, J = np.meshgrid(np.arange(res[0]), np.arange(res[1]), indexing="ij")
    src_all, dst_all, mids, deltas = [], [], [], []
    for di, dj in _OFFSETS[connectivity]:
        ok = (I + di < res[0]) & (J + dj >= 0) & (J + dj < res[1])
        i0, j0 = I[ok], J[ok]
        i1, j1 = i0 + di, j0 + dj
        p0 = np.stack([a0[i0], a1[j0]], axis=1)
        p1 = np.stack([a0[i1], a1[j1]], axis=1)
        src_all.append(np.ravel_multi_index((i0, j0), res))
        dst_all.append(np.ravel_multi_index((i1, j1), res))
        mids.append(0.5 * (p0 + p1))
        deltas.append(p1 - p0)
    src = np.concatenate(src_all)
    dst = np.concatenate(dst_all)
    mids = np.concatenate(mids)
    deltas = np.concatenate(deltas)

    def weigh(sl):
        G = metric.metric_batch(mids[sl]) if hasattr(metric, "metric_batch") else \
            np.stack([metric.metric(m) for m in mids[sl]])
        return np.sqrt(np.clip(np.einsum("ei,eij,ej->e", deltas[sl], G, deltas[sl]), 0.0, None))

    chunk = 8192
    slices = [slice(s, s + chunk) for s in range(0, len(src), chunk)]
    with ThreadPoolExecutor(max_workers=n_threads()) as pool:
        weights = np.concatenate(list(pool.map(weigh, slices)))
    return GridGraph(bounds, res, _OFFSETS[connectivity], src, dst, weights)


@dataclass(frozen=True)
class GridGeodesic:
    path: np.ndarray  # K x 2 node coordinates
    length: float
    snap_distance: float
    graph: GridGraph


def default_grid_bounds(model: LatentModel, x1, x2) -> np.ndarray:
    pts = np.vstack([model.X, x1, x2])
    pad = model.params.lengthscale
    return np.stack([pts.min(axis=0) - pad, pts.max(axis=0) + pad], axis=1)


def grid_geodesic(model, x1, x2, resolution=200, bounds=None, connectivity: int = 32,
                  graph: GridGraph | None = None) -> GridGeodesic:
    """Dijkstra shortest path on a lattice over the latent box.

    The box defaults to the bounding box of the training latents and both
    endpoints, padded by one length-scale.  Pass ``graph`` to reuse weights.
    The lattice overestimate grows with the anisotropy of the metric, so the
    default is a 32-neighbour stencil (moves up to (3, 2)); ``connectivity=8``
    gives the classic king-move lattice.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if graph is None:
        if bounds is None:
            if not isinstance(model, LatentModel):
                raise InputError("bounds are required when the metric is not a fitted model")
            bounds = default_grid_bounds(model, x1, x2)
        graph = build_grid_graph(model, bounds, resolution, connectivity)
    b = graph.bounds
    for x in (x1, x2):
        if x.shape != (2,) or np.any(x < b[:, 0]) or np.any(x > b[:, 1]):
            raise InputError(f"endpoint {x.tolist()} lies outside the grid bounds")
    n = graph.resolution[0] * graph.resolution[1]
    A = coo_matrix((graph.weights, (graph.rows, graph.cols)), shape=(n, n)).tocsr()
    s, ds = graph.nearest(x1)
    t, dt = graph.nearest(x2)
    dist, pred = dijkstra(A, directed=False, indices=s, return_predecessors=True)
    if not np.isfinite(dist[t]):
        raise InputError("grid endpoints are disconnected")
    path = [t]
    while path[-1] != s:
        path.append(int(pred[path[-1]]))
    coords = graph.node_coords(path[::-1])
    snap = max(ds, dt)
    assert snap <= 0.5 * graph.cell_diagonal + 1e-12
    return GridGeodesic(coords, float(dist[t]), snap, graph)
