"""Riemannian geometry of GP-LVM latent spaces: Jacobian posteriors, expected
metrics, magnification factors and geodesic interpolation."""
from .errors import InputError, NumericalError
from .geodesic import (BVPOptions, Curve, GeodesicResult, curve_length, geodesic_rhs,
                       integrate_ivp, interpolate_equidistant, reconstruct_path, solve_geodesic_bvp)
from .geometry import (expected_metric, jacobian_posterior, magnification_factor, metric_derivative,
                       mf_grid, sample_metric, wishart_params)
from .gp import (LatentModel, TrainOptions, avg_training_error, fit_gplvm, log_marginal_likelihood,
                 likelihood_grad_X, posterior_mean)
from .kernel import KernelParams

__version__ = "0.1.0"
