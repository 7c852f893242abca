"""Run the oracle suite against a fitted model and summarise the outcome."""
from __future__ import annotations

import numpy as np

from .geodesic import solve_geodesic_bvp
from .geometry import expected_metric, jacobian_posterior, metric_derivative
from .gp import LatentModel
from .oracle import fd_jacobian, fd_metric_derivative, grid_geodesic, mc_expected_metric

TOLERANCES = {
    "fd_jacobian": 1e-4,
    "fd_metric_derivative": 1e-3,
    "mc_expected_metric": 3.0,  # standard errors
    "grid_geodesic": 0.05,
}


def _rel(a, b) -> float:
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / den) if den > 0 else float(np.linalg.norm(a))


def verify_model(model: LatentModel, n_points: int = 5, seed: int = 0, mc_samples: int = 200_000,
                 grid_resolution: int = 200) -> dict:
    """Compare analytic quantities with brute-force estimates.

    Test points are drawn uniformly from the bounding box of the training
    latents; the geodesic check (q = 2 only) joins two random training points.
    """
    rng = np.random.default_rng(seed)
    lo, hi = model.X.min(axis=0), model.X.max(axis=0)
    points = lo + (hi - lo) * rng.uniform(size=(n_points, model.q))

    jac_err, dg_err, z_max = [], [], []
    for x in points:
        jac_err.append(_rel(jacobian_posterior(model, x).mean, fd_jacobian(model, x)))
        dg_err.append(_rel(metric_derivative(model, x).dg, fd_metric_derivative(model, x)))
        avg, se = mc_expected_metric(jacobian_posterior(model, x), mc_samples, rng)
        gap = np.abs(avg - expected_metric(model, x).g)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, gap / se, np.where(gap > 1e-12 * np.abs(avg).max(), np.inf, 0.0))
        z_max.append(float(z.max()))

    checks = {
        "fd_jacobian": {"max_rel_error": max(jac_err), "tolerance": TOLERANCES["fd_jacobian"]},
        "fd_metric_derivative": {"max_rel_error": max(dg_err), "tolerance": TOLERANCES["fd_metric_derivative"]},
        "mc_expected_metric": {"max_std_errors": max(z_max), "tolerance": TOLERANCES["mc_expected_metric"],
                               "samples": mc_samples},
    }
    checks["fd_jacobian"]["pass"] = checks["fd_jacobian"]["max_rel_error"] < TOLERANCES["fd_jacobian"]
    checks["fd_metric_derivative"]["pass"] = (
        checks["fd_metric_derivative"]["max_rel_error"] < TOLERANCES["fd_metric_derivative"])
    checks["mc_expected_metric"]["pass"] = checks["mc_expected_metric"]["max_std_errors"] <= 3.0

    if model.q == 2 and model.N >= 2:
        i, j = rng.choice(model.N, size=2, replace=False)
        x1, x2 = model.X[i], model.X[j]
        bvp = solve_geodesic_bvp(model, x1, x2)
        grid = grid_geodesic(model, x1, x2, resolution=grid_resolution)
        gap = abs(grid.length - bvp.length) / bvp.length
        checks["grid_geodesic"] = {
            "endpoints": [x1.tolist(), x2.tolist()],
            "bvp_length": bvp.length,
            "grid_length": grid.length,
            "rel_error": gap,
            "tolerance": TOLERANCES["grid_geodesic"],
            "pass": gap <= TOLERANCES["grid_geodesic"],
        }
    return {
        "seed": seed,
        "n_points": n_points,
        "points": points.tolist(),
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks.values()),
    }
