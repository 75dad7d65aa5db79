"""Hierarchical max-stable model for spatial block maxima.

Positive-stable random effects on a Gaussian kernel basis give a
max-stable residual process with GEV margins whose parameters vary over
space through Gaussian-process priors.  Inference is by Metropolis within
Gibbs with auxiliary variables for the positive-stable effects.
"""
from .errors import (ContractError, DegenerateLocationError, DomainError, InitializationError,
                     InputError, NumericalError, ParameterError, ParseError)
from .gevdist import GevParams, gev_cdf, gev_logpdf, gev_quantile, gev_sample
from .stable import StablePair, laplace_transform, ps_c, ps_joint_logpdf, ps_sample
from .basis import KernelBasis, KnotGrid, check_spacing, gaussian_kernel, make_grid, weights
from .process import (ProcessModel, SpatialGevFields, conditional_params, extremal_coeff,
                      gevp_extremal_coeff, joint_cdf, simulate, theta, truncated_gevp_cdf)
from .gp import GpHyper, SpikeSlabState, conditional_normal, matern_cov, spike_slab_update
from .data import Dataset, load_dataset, save_dataset
from .mcmc import FieldSpec, FitConfig, ModelSpec, ModelState, PosteriorSamples, Sampler, adapt_step, fit
from .analytics import (PairwiseExtremal, ScenarioSummary, compare_scenarios, madogram, posterior_predict,
                        return_level, variance_ratio)
from .store import load_samples, save_samples
from .simstudy import DESIGNS, DesignSpec, run_design

__version__ = "0.1.0"
