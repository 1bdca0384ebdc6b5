"""Zero-inflated Poisson cluster-weighted models fitted by EM."""
from .em import EmConfig, FitReport, FittingError, e_step, fit_em, observed_loglik
from .evaluation import adjusted_rand_index, align_labels, confusion, dispersion_statistic
from .model import (
    CategoricalCoding,
    ComponentParameters,
    CovarianceStructure,
    Dataset,
    DataDims,
    DegenerateParameterError,
    DomainError,
    Family,
    MixtureParameters,
    ModelSpec,
    ZipcwmError,
    count_free_parameters,
    joint_log_density,
)
from .selection import CRITERIA, compute_criteria, sweep_components
from .simulation import SimulationDesign, generate

__all__ = [
    "CRITERIA", "CategoricalCoding", "ComponentParameters", "CovarianceStructure", "DataDims",
    "Dataset", "DegenerateParameterError", "DomainError", "EmConfig", "Family", "FitReport",
    "FittingError", "MixtureParameters", "ModelSpec", "SimulationDesign", "ZipcwmError",
    "adjusted_rand_index", "align_labels", "compute_criteria", "confusion", "count_free_parameters",
    "dispersion_statistic", "e_step", "fit_em", "generate", "joint_log_density", "observed_loglik",
    "sweep_components",
]
