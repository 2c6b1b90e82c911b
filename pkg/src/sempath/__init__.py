"""Regularized structural equation models in RAM notation."""
from .kernels import BACKEND
from .optimizer import (CONVERGED, INFEASIBLE, NOT_CONVERGED, FitResult, OptimizerConfig,
                        bfgs_update, fit_penalized, minimize_penalized, multi_start_fit)
from .penalties import PenaltyConfig, alasso_weights, penalty_value, prox
from .ram import (InadmissibleError, ModelError, RamModel, SampleMoments, build_ram,
                  extract_matrices, implied_moments, ml_discrepancy, ml_gradient)
from .selection import (PathConfig, PathError, PathResult, bic, effective_df, holdout_eval,
                        rmsea, run_path)
from .syntax import (Fixed, Free, Labelled, ModelSpec, ModelSyntaxError, format_model,
                     parse_model, validate_spec)

__version__ = "0.1.0"
