"""nibm package.

Spectral curve, limiting density, finite-n kernel and sampler of non-intersecting
Brownian motions with two starting and two ending points.
"""

from __future__ import annotations

from nibm.config import DEFAULT_TOLERANCES, Tolerances, resolve_tolerances
from nibm.curve import (
    BranchPointSet,
    ModelParams,
    Regime,
    XiFrame,
    branch_expansion,
    branch_points,
    critical_times,
    lambda_value,
    parametrize,
    period_integral,
    quartic_coefficients,
    xi_frame,
)
from nibm.density import DensityProfile, GridSpec, density_at, density_profile, edge_fit, h_function
from nibm.errors import InfeasibleError, NibmError, NumericalError, ParameterError
from nibm.kernel import airy_kernel, biorthogonal_system, kernel_eval, sine_kernel
from nibm.simulate import PathEnsemble, sample_ensemble

__all__: list[str] = [
    "DEFAULT_TOLERANCES",
    "BranchPointSet",
    "DensityProfile",
    "GridSpec",
    "InfeasibleError",
    "ModelParams",
    "NibmError",
    "NumericalError",
    "ParameterError",
    "PathEnsemble",
    "Regime",
    "Tolerances",
    "XiFrame",
    "airy_kernel",
    "biorthogonal_system",
    "branch_expansion",
    "branch_points",
    "critical_times",
    "density_at",
    "density_profile",
    "edge_fit",
    "h_function",
    "kernel_eval",
    "lambda_value",
    "parametrize",
    "period_integral",
    "quartic_coefficients",
    "resolve_tolerances",
    "sample_ensemble",
    "sine_kernel",
    "xi_frame",
]
