"""Scale matrix shrinkage under the data-based loss, for singular and invertible ``S``."""

from .estimators import (
    DataBasedShrinkage,
    EstimatorSpec,
    ScaledScatter,
    a_optimal,
    correction_G,
    estimate,
    parse_estimator,
    t_max,
)
from .families import DistributionFamily, k_star
from .linalg import ScaleMatrix, ScatterMatrix, build_ar1, pseudo_inverse, sym_eig, trace_pinv
from .risk import (
    NumericalFailure,
    RiskReport,
    loss_data_based,
    loss_quadratic,
    mc_risk,
    prial,
    risk_difference_sign,
)
from .sampling import CanonicalSample, Scenario, log_density, replication_rng, sample_canonical
from .stein_haff import HaffOperatorConfig, fd_convergence_probe, haff_divergence, verify_identity

__version__ = "0.1.0"

__all__ = [
    "CanonicalSample",
    "DataBasedShrinkage",
    "DistributionFamily",
    "EstimatorSpec",
    "HaffOperatorConfig",
    "NumericalFailure",
    "RiskReport",
    "ScaleMatrix",
    "ScaledScatter",
    "ScatterMatrix",
    "Scenario",
    "a_optimal",
    "build_ar1",
    "correction_G",
    "estimate",
    "fd_convergence_probe",
    "haff_divergence",
    "k_star",
    "log_density",
    "loss_data_based",
    "loss_quadratic",
    "mc_risk",
    "parse_estimator",
    "prial",
    "pseudo_inverse",
    "replication_rng",
    "risk_difference_sign",
    "sample_canonical",
    "sym_eig",
    "t_max",
    "trace_pinv",
    "verify_identity",
]
