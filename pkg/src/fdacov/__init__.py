"""Local-linear kernel estimation for covariate-adjusted functional data.

The mean ``mu(u, z)`` and covariance ``gamma(u1, u2, z)`` surfaces are
estimated by local-linear smoothers. Bandwidths come from closed-form
AMISE rules fed with polynomial pilot estimates. Pointwise confidence
intervals for the mean can include a finite-sample variance correction.
"""

from fdacov.bandwidth import (
    BandwidthSet,
    Regime,
    RuleOfThumb,
    Target,
    amise_cov,
    amise_mean,
    bandwidths_for,
    dense_cov_bandwidths,
    dense_mean_bandwidths,
    gcv_derivative_bandwidths,
    rule_of_thumb,
    sparse_cov_bandwidths,
    sparse_mean_bandwidths,
)
from fdacov.data import PanelSample, load_panel, raw_covariances, write_panel
from fdacov.density import kde_cv, kde_fit
from fdacov.errors import (
    ConfigError,
    FdacovError,
    InputError,
    NumericalError,
    SingularSystem,
)
from fdacov.inference import (
    InferenceConfig,
    Method,
    PointInference,
    confidence_interval,
    confidence_intervals,
    prepare,
)
from fdacov.kernels import EPANECHNIKOV, GAUSSIAN, KernelSpec, make_kernel
from fdacov.llk import fit_cov, fit_mean, fit_mean_derivatives, fit_noisy_diagonal
from fdacov.polyfit import CovFunctionals, MeanFunctionals, QuadratureGrid, fit_pilots

__version__ = "0.1.0"

__all__ = [
    "BandwidthSet",
    "ConfigError",
    "CovFunctionals",
    "EPANECHNIKOV",
    "FdacovError",
    "GAUSSIAN",
    "InferenceConfig",
    "InputError",
    "KernelSpec",
    "MeanFunctionals",
    "Method",
    "NumericalError",
    "PanelSample",
    "PointInference",
    "QuadratureGrid",
    "Regime",
    "RuleOfThumb",
    "SingularSystem",
    "Target",
    "amise_cov",
    "amise_mean",
    "bandwidths_for",
    "confidence_interval",
    "confidence_intervals",
    "dense_cov_bandwidths",
    "dense_mean_bandwidths",
    "fit_cov",
    "fit_mean",
    "fit_mean_derivatives",
    "fit_noisy_diagonal",
    "fit_pilots",
    "gcv_derivative_bandwidths",
    "kde_cv",
    "kde_fit",
    "load_panel",
    "make_kernel",
    "prepare",
    "raw_covariances",
    "rule_of_thumb",
    "sparse_cov_bandwidths",
    "sparse_mean_bandwidths",
    "write_panel",
]
