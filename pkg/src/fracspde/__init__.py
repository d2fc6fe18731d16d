"""Spectral tools for time-fractional stochastic heat equations on intervals and boxes."""

from .mlf import FractionalOrder, MLBounds, ml_bounds, ml_neg
from .spectra import DomainSpec, Grid, SpectralBasis, build_basis, check_weyl, parse_domain
from .kernel import HeatKernel, InitialCondition, evolve, kernel_eval, lambda_theta
from .noise import CovKernel, NoiseModel, colored_noise, mode_covariance, parse_kernel, white_noise
from .solver import (
    MomentTrajectory,
    PathOverflowError,
    SigmaSpec,
    SimulationConfig,
    coupled_beta_difference,
    second_moment_volterra,
    simulate_paths,
)
from .config import load_config, parse_config
from .lab import classify_growth, continuity_experiment, no_exponential_decay_check, phase_sweep

__version__ = "0.1.0"
