"""Tail-index estimation for randomly right-truncated heavy-tailed data."""

from .model import (
    BurrSpec,
    DataFormatError,
    EmptySampleError,
    ObservedSample,
    TruncationDesign,
    burr_quantile,
    burr_sf,
    complete_data_mode,
    read_csv,
    sample_truncated,
    write_csv,
)
from .kernels import Kernel, biweight_kernel, check_kernel, get_kernel, indicator_kernel, triweight_kernel
from .estimators import (
    EstimateResult,
    EstimatorError,
    bmn_estimate,
    empirical_c,
    estimate,
    gs_estimate,
    hill_estimate,
    kernel_estimate,
    trajectory,
    woodroofe_cdf,
)
from .threshold import RTConfig, ThresholdError, auto_k, select_k
from .asymptotics import (
    AsymptoticParams,
    DivergentIntegralError,
    LimitMoments,
    dn_process,
    gamma_process_variance,
    limit_moments,
    phi,
)

__version__ = "0.1.0"
