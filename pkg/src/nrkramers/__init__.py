"""Transition-time prediction and validation for non-reversible diffusions.

The package computes sharp mean transition-time predictions for the
diffusion dx = -(grad U + ell) dt + sqrt(2 eps) dW, where ell is an
orthogonal divergence-free perturbation of the gradient drift, and
validates them against ensemble simulation, histogram checks of the
invariant measure, and saddle-local flux quadrature.
"""

from .errors import (
    ConfigError,
    ContractViolationError,
    DegenerateCriticalPointError,
    EvaluationError,
    GateNotFoundError,
    GuardViolationError,
    InconsistentLevelError,
    ModelInconsistencyError,
    NrKramersError,
    NumericFailureError,
    PreconditionViolationError,
    UnreachableTargetError,
    UnreliableEstimateError,
)
from .kramers import EKPrediction, ek_constant, predict
from .landscape import LandscapeSpec, catalog, certify_orthogonality
from .simulate import (
    EnsembleResult,
    SimConfig,
    equilibrium_potential,
    gibbs_histogram,
    hitting_time,
    run_ensemble,
)
from .spectral import SaddleSpectrum, unique_negative_eig
from .topology import (
    KIND_MINIMUM,
    KIND_OTHER,
    KIND_SADDLE,
    CriticalPoint,
    ValleyStructure,
    auto_gate_level,
    build_valley_structure,
    find_critical_points,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractViolationError", "DegenerateCriticalPointError",
    "EvaluationError", "GateNotFoundError", "GuardViolationError",
    "InconsistentLevelError", "ModelInconsistencyError", "NrKramersError",
    "NumericFailureError", "PreconditionViolationError",
    "UnreachableTargetError", "UnreliableEstimateError",
    "EKPrediction", "ek_constant", "predict",
    "LandscapeSpec", "catalog", "certify_orthogonality",
    "EnsembleResult", "SimConfig", "equilibrium_potential",
    "gibbs_histogram", "hitting_time", "run_ensemble",
    "SaddleSpectrum", "unique_negative_eig",
    "CriticalPoint", "ValleyStructure", "auto_gate_level",
    "build_valley_structure", "find_critical_points",
    "KIND_MINIMUM", "KIND_SADDLE", "KIND_OTHER",
    "__version__",
]
