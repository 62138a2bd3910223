"""Numerical laboratory for degenerate free transmission problems."""

__version__ = "0.1.0"

from .errors import (ComparisonViolation, ConfigurationError, EllipticityError, FtlabError,
                     NonConvergenceError, NumericalFailureError, ResolutionError, StencilError)
from .grid import DomainSpec, Domain, GridFunction, Shape, build_domain, read_csv, write_csv
from .operators import EllipticOperatorSpec, OperatorKind, check_uniform_ellipticity
from .degeneracy import DegeneracyParams, ExponentField, mollify, theta_field
from .solver import SolveConfig, SolveDiagnostics, continuation, fixed_point_T, solve_regularized
from .barriers import BarrierSpec, build_barrier_sub, build_barrier_super
from .scaling import scale_problem
from .verification import (TouchingTestConfig, comparison_harness, large_gradient_pucci_check,
                           oracle_one_phase, oracle_two_phase, oracle_two_phase_mollified,
                           touch_test_subsolution, touch_test_supersolution)
from .regularity import (analyze_regularity, best_affine_error, c1alpha_certificate,
                         estimate_gradient_holder, extract_free_boundary, predicted_exponent)
from .config import RunConfig, parse_config, parse_expression

__all__ = [
    "ComparisonViolation",
    "ConfigurationError",
    "EllipticityError",
    "FtlabError",
    "NonConvergenceError",
    "NumericalFailureError",
    "ResolutionError",
    "StencilError",
    "DomainSpec",
    "Domain",
    "GridFunction",
    "Shape",
    "build_domain",
    "read_csv",
    "write_csv",
    "EllipticOperatorSpec",
    "OperatorKind",
    "check_uniform_ellipticity",
    "DegeneracyParams",
    "ExponentField",
    "mollify",
    "theta_field",
    "SolveConfig",
    "SolveDiagnostics",
    "continuation",
    "fixed_point_T",
    "solve_regularized",
    "BarrierSpec",
    "build_barrier_sub",
    "build_barrier_super",
    "scale_problem",
    "TouchingTestConfig",
    "comparison_harness",
    "large_gradient_pucci_check",
    "oracle_one_phase",
    "oracle_two_phase",
    "oracle_two_phase_mollified",
    "touch_test_subsolution",
    "touch_test_supersolution",
    "analyze_regularity",
    "best_affine_error",
    "c1alpha_certificate",
    "estimate_gradient_holder",
    "extract_free_boundary",
    "predicted_exponent",
    "RunConfig",
    "parse_config",
    "parse_expression",
]
