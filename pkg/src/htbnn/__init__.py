"""Sparse-free Bayesian deep ReLU regression with heavy-tailed priors."""

from . import kernels
from .data import RegressionData, design, fixtures, gen_data, get_fixture, minkowski_estimate
from .divergences import DesignSample, kl_regression, kl_variance, l2_px, renyi
from .mcmc import TemperConfig, posterior_predict, run_chain
from .network import Architecture, Network, clip, compose, forward, parallelize
from .prior import Prior, ScalingSchedule, cauchy, certify, gaussian, student
from .vb import VBConfig, VariationalState, fit_vb, pac_bound, vb_objective

__version__ = "0.1.0"

__all__ = [
    "kernels", "RegressionData", "design", "fixtures", "gen_data", "get_fixture",
    "minkowski_estimate", "DesignSample", "kl_regression", "kl_variance", "l2_px", "renyi",
    "TemperConfig", "posterior_predict", "run_chain", "Architecture", "Network", "clip",
    "compose", "forward", "parallelize", "Prior", "ScalingSchedule", "cauchy", "certify",
    "gaussian", "student", "VBConfig", "VariationalState", "fit_vb", "pac_bound",
    "vb_objective",
]
