"""Command-line front end.

Exit codes: 0 success, 1 numerical failure (or a failed verification),
2 input error.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io
from .errors import InputError, NumericalError
from .geodesic import (BVPOptions, Curve, curve_length, interpolate_equidistant,
                       nearest_neighbour_distances, reconstruct_path, solve_geodesic_bvp)
from .geometry import expected_metric, mf_grid, sample_metric
from .gp import TrainOptions, avg_training_error, fit_gplvm, log_marginal_likelihood
from .oracle import grid_geodesic
from .verify import verify_model

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2


def parse_vector(text: str, name: str = "vector") -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise InputError(f"{name}: expected comma-separated reals, got {text!r}") from exc
    v = np.array(vals)
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name}: values must be finite")
    return v


def _emit(obj, path) -> None:
    if path:
        io.write_json(path, obj)
    else:
        sys.stdout.write(io.dumps(obj) + "\n")


def _check_endpoint(model, x, name):
    if x.shape != (model.q,):
        raise InputError(f"{name} has {x.size} coordinates but the model has q={model.q}")
    return x


# ---- subcommands ----------------------------------------------------------

def cmd_fit(args) -> int:
    Y = io.read_matrix_csv(args.data)
    opts = TrainOptions(max_iter=args.max_iter, step_size=args.step_size, tol=args.tol,
                        learn_hyperparams=args.learn_hyperparams, seed=args.seed,
                        init_noise=args.init_noise, alpha=args.alpha, omega=args.omega, beta=args.beta)
    model = fit_gplvm(Y, args.q, opts)
    io.save_model(args.out, model)
    print(f"N: {model.N}")
    print(f"p: {model.p}")
    print(f"q: {model.q}")
    print(f"log_likelihood: {io.format_float(log_marginal_likelihood(model))}")
    print(f"avg_training_error: {io.format_float(avg_training_error(model))}")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    model = io.load_model(args.model)
    x1 = _check_endpoint(model, parse_vector(args.x_from, "--from"), "--from")
    x2 = _check_endpoint(model, parse_vector(args.x_to, "--to"), "--to")
    opts = BVPOptions(nodes=args.nodes, steps=args.steps, tol=args.tol)
    result = solve_geodesic_bvp(model, x1, x2, opts)
    doc = result.to_dict()
    samples = interpolate_equidistant(model, result, args.samples)
    if args.compare_straight:
        straight = Curve.straight(x1, x2, max(args.nodes, 2))
        straight_samples = interpolate_equidistant(model, straight, args.samples)
        doc["straight_length"] = curve_length(model, straight)
        doc["avg_training_error"] = avg_training_error(model)
        doc["profiles"] = {
            "geodesic": nearest_neighbour_distances(model, reconstruct_path(model, samples)).tolist(),
            "straight": nearest_neighbour_distances(model, reconstruct_path(model, straight_samples)).tolist(),
        }
    if args.oracle:
        if model.q != 2:
            raise InputError("--oracle needs a 2-d latent space")
        grid = grid_geodesic(model, x1, x2, resolution=args.grid_resolution)
        doc["oracle"] = {
            "grid_length": grid.length,
            "resolution": args.grid_resolution,
            "rel_gap": (abs(grid.length - result.length) / result.length) if result.length > 0 else 0.0,
        }
    if args.curve:
        io.write_curve_csv(args.curve, result.curve)
    if args.out_samples:
        io.write_points_csv(args.out_samples, samples)
    _emit(doc, args.out)
    return EXIT_OK


def _default_bounds(model) -> np.ndarray:
    pad = model.params.lengthscale
    return np.stack([model.X.min(axis=0) - pad, model.X.max(axis=0) + pad], axis=1)


def cmd_mf_grid(args) -> int:
    model = io.load_model(args.model)
    if model.q != 2:
        raise InputError(f"mf-grid supports q=2 only (model has q={model.q})")
    if args.bounds:
        b = parse_vector(args.bounds, "--bounds")
        if b.size != 4:
            raise InputError("--bounds takes lo1,hi1,lo2,hi2")
        bounds = b.reshape(2, 2)
    else:
        bounds = _default_bounds(model)
    res = parse_vector(args.resolution, "--resolution")
    if res.size not in (1, 2) or np.any(res != np.round(res)):
        raise InputError("--resolution takes one or two integers")
    centers, values = mf_grid(model, bounds, tuple(int(r) for r in np.broadcast_to(res, (2,))))
    io.write_csv(args.out, ["x1", "x2", "mf"], np.column_stack([centers, values.ravel()]))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    model = io.load_model(args.model)
    points = io.read_matrix_csv(args.points)
    if points.shape[1] != model.q:
        raise InputError(f"points have {points.shape[1]} columns but the model has q={model.q}")
    io.write_observations_csv(args.out, reconstruct_path(model, points))
    return EXIT_OK


def cmd_verify(args) -> int:
    model = io.load_model(args.model)
    report = verify_model(model, args.n_points, args.seed, args.mc_samples, args.grid_resolution)
    _emit(report, args.out)
    return EXIT_OK if report["all_pass"] else EXIT_NUMERICAL


def cmd_sample_metric(args) -> int:
    model = io.load_model(args.model)
    x = _check_endpoint(model, parse_vector(args.at, "--at"), "--at")
    if args.n < 1:
        raise InputError("-n must be >= 1")
    rng = np.random.default_rng(args.seed)
    samples = [sample_metric(model, x, rng) for _ in range(args.n)]
    _emit({"point": x.tolist(), "seed": args.seed, "n": args.n,
           "expected_metric": expected_metric(model, x).g, "samples": samples}, args.out)
    return EXIT_OK


# ---- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latentgeo", description="Riemannian geometry of GP-LVM latent spaces.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a GP-LVM to a CSV of observations")
    p.add_argument("data")
    p.add_argument("-q", "--q", type=int, default=2)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--step-size", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--learn-hyperparams", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-noise", type=float, default=0.0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("geodesic", help="solve for the geodesic between two latent points")
    p.add_argument("model")
    p.add_argument("--from", dest="x_from", required=True)
    p.add_argument("--to", dest="x_to", required=True)
    p.add_argument("-o", "--out", help="GeodesicResult JSON (default: stdout)")
    p.add_argument("--curve", help="curve CSV (t,x1,...,xq)")
    p.add_argument("--nodes", type=int, default=32)
    p.add_argument("--steps", type=int, default=128)
    p.add_argument("--tol", type=float)
    p.add_argument("--samples", type=int, default=50, help="equidistant samples for profiles")
    p.add_argument("--out-samples", help="CSV of the equidistant geodesic samples")
    p.add_argument("--compare-straight", action="store_true")
    p.add_argument("--oracle", action="store_true", help="add the Dijkstra grid length (q=2)")
    p.add_argument("--grid-resolution", type=int, default=200)
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("mf-grid", help="magnification factor on a regular grid (q=2)")
    p.add_argument("model")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--bounds", help="lo1,hi1,lo2,hi2 (default: data box padded by one length-scale)")
    p.add_argument("--resolution", default="50")
    p.set_defaults(func=cmd_mf_grid)

    p = sub.add_parser("reconstruct", help="map latent points to observation space")
    p.add_argument("model")
    p.add_argument("points")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify", help="check analytic quantities against brute-force oracles")
    p.add_argument("model")
    p.add_argument("--n-points", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-samples", type=int, default=200_000)
    p.add_argument("--grid-resolution", type=int, default=200)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample-metric", help="draw metric tensors at a latent point")
    p.add_argument("model")
    p.add_argument("--at", required=True)
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_sample_metric)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
