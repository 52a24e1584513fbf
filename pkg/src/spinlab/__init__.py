"""Numerical laboratory for high-temperature spin glass free energies, spiked Wigner
likelihood ratios and their multigraph expansions."""

from .density import (
    DensityModel, FisherSet, detection_error, fisher_information, fisher_set, gaussian_density,
    get_density, logistic_density, lr_coefficient, rho_L, second_fisher, sech_density,
)
from .ensembles import (
    DisorderSpec, PriorSpec, disorder_moments, make_rng, prior_moments, sample_spike, sample_wigner,
    verify_strict_subgaussian,
)
from .errors import (
    ConfigError, ContractError, DomainError, ModelError, MomentRangeError, NumericError, ResourceError,
    SpinlabError, StatisticsError,
)
from .free_energy import (
    FreeEnergySample, GaussianPrediction, fluctuation_statistic, partition_function_exact,
    partition_function_mc, predict_free_energy_fluctuation,
)
from .likelihood import LogLRSample, NoiseModel, log_lr, predict_loglr, sample_data_matrix, truncated_expansion_lr
from .stats import FitReport, FitTolerances, TrialBatch, clt_harness, gaussian_fit, second_moment_estimate

__version__ = "0.1.0"
