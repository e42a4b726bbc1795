"""Crystal plasticity calibration with Bayesian optimization."""

from ._core import (
    Bounds,
    Ensemble,
    Error,
    GpModel,
    LoadingProgram,
    MaterialParams,
    PARAM_NAMES,
    add_twins,
    expected_improvement,
    fit_gp,
    lhs_sample,
    misorientation,
    r2_score,
    run_cli,
    run_uniaxial,
    sample_ensemble,
    schmid_factor,
    shapley_values,
)

__all__ = [
    "Bounds",
    "Ensemble",
    "Error",
    "GpModel",
    "LoadingProgram",
    "MaterialParams",
    "PARAM_NAMES",
    "add_twins",
    "expected_improvement",
    "fit_gp",
    "lhs_sample",
    "misorientation",
    "r2_score",
    "run_cli",
    "run_uniaxial",
    "sample_ensemble",
    "schmid_factor",
    "shapley_values",
]
