"""Truncated Euler-Maruyama solvers for nonlinear stochastic delay differential equations."""

__version__ = "0.1.0"

from .analysis import (
    as_exponent_study,
    gamma_solve,
    max_stable_stepsize,
    moment_probe,
    ms_decay_study,
    rate_regress,
    stability_study,
    strong_error_study,
)
from .brownian import BrownianLattice, coarse_increment, generate, value_at
from .errors import (
    BlowUpError,
    DomainError,
    GridAlignmentError,
    ParameterError,
    ProfileError,
    SddeError,
)
from .model import (
    ModelCatalogEntry,
    SddeModel,
    builtin_example_1,
    builtin_example_2,
    oracle_linear_delay_model,
)
from .scheme import (
    PathTrajectory,
    SchemeKind,
    SimulationGrid,
    em_step,
    interpolate_aux,
    make_grid,
    simulate,
    stability_tem_step,
    tem_step,
)
from .truncation import (
    ProfileKind,
    TruncationProfile,
    h,
    polynomial_profile,
    stability_profile,
    truncate,
    truncation_bound,
)

__all__ = [
    "__version__",
    "as_exponent_study",
    "gamma_solve",
    "max_stable_stepsize",
    "moment_probe",
    "ms_decay_study",
    "rate_regress",
    "stability_study",
    "strong_error_study",
    "BrownianLattice",
    "coarse_increment",
    "generate",
    "value_at",
    "BlowUpError",
    "DomainError",
    "GridAlignmentError",
    "ParameterError",
    "ProfileError",
    "SddeError",
    "ModelCatalogEntry",
    "SddeModel",
    "builtin_example_1",
    "builtin_example_2",
    "oracle_linear_delay_model",
    "PathTrajectory",
    "SchemeKind",
    "SimulationGrid",
    "em_step",
    "interpolate_aux",
    "make_grid",
    "simulate",
    "stability_tem_step",
    "tem_step",
    "ProfileKind",
    "TruncationProfile",
    "h",
    "polynomial_profile",
    "stability_profile",
    "truncate",
    "truncation_bound",
]
