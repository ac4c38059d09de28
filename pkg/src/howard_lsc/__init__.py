"""Smoothed policy iteration for discounted MDPs on structured grids."""

from .envelope import is_grid_lsc, lsc_defect, lsc_envelope
from .errors import (
    CertificateError,
    ConvergenceError,
    HowardError,
    ModelParseError,
    ModelSchemaError,
    ModelValidationError,
    SingularSystemError,
)
from .lyapunov import GrowthCertificate, certify_growth, require_certificate, value_bound, w_norm
from .model import (
    Action,
    ArgminSets,
    ModelSpec,
    Node,
    Policy,
    StructuredGrid,
    load_model,
    loads_model,
    restrict_actions,
    save_model,
    validate_model,
)
from .montecarlo import Estimate, estimate_value, simulate_trajectory
from .operators import apply_L, apply_Tf, bellman_T, evaluate_policy
from .solvers import (
    PiTrace,
    best_improvement_pi,
    check_descent_chain,
    extract_argmin_sets,
    rate_report,
    smoothed_policy_iteration,
    standard_policy_iteration,
    value_iteration,
)

__version__ = "0.1.0"
