"""Online Newton Step with amortized Mahalanobis projections.

Modules: ``linalg`` (inverse maintenance, tridiagonal kernels),
``projection`` (domains, FastProj, exact oracles), ``conversion`` (surrogate
gradients), ``learners`` (ONS, LightONS.Core, LightONS), ``sketch``
(frequent-directions variant), ``tasks`` (losses, streams, comparator) and
``harness`` (experiment runner and CLI).
"""
from .conversion import surrogate_gradient
from .learners import (
    LearnerConfig,
    LearnerState,
    RoundRecord,
    default_epsilon,
    gamma_core,
    gamma_ons,
    gamma_prime,
    init_learner,
    lightons_core_step,
    lightons_step,
    ons_step,
    projection_budget,
    regret_upper_bound,
    step,
    zeta_schedule,
)
from .linalg import NumericalFailure, PdPairState, pd_pair_init, rank_one_update
from .projection import Ball, Box, ProjectionRequest, exact_ellipsoid_project_oracle, fast_proj
from .sketch import SketchState, fast_fd_update, lightons_sketch_step, sketch_init

__version__ = "0.1.0"
