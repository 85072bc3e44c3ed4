"""Moment structure and identifiability of plug-in Lee-Carter mortality models.

The package treats the latent period (and cohort) factors as stochastic
processes from the outset, computes the exact first and second moments of
the resulting log-rate panels, and machine-checks when those moments pin
the parameters down: constructive inversion where they do, exact
counterexample pairs where they do not, and a numerical equivalence search
in between.
"""

from .params import (
    ApArima011Params,
    ApArima110Params,
    ApcRwParams,
    ApRwParams,
    FullyParametricApcParams,
    InitialConditions,
    InvalidParamsError,
    ModelParams,
    PanelDims,
    ValidationVerdict,
    ensure_valid,
    load_params_json,
    normalize_betas,
    params_from_dict,
    params_to_dict,
    save_params_json,
    validate,
)
from .moments import (
    MomentGrid,
    cov_ap_arima011,
    cov_ap_arima110,
    cov_ap_rw,
    cov_apc_rw,
    cov_latent_arima011,
    cov_latent_arima110,
    mean_ap_rw,
    mean_apc_rw,
    moment_grid,
    oracle_cov_doublesum,
    oracle_cov_table,
)
from .simulate import (
    McMoments,
    RngSpec,
    Surface,
    compare_mc_to_grid,
    gaussian_innovations,
    mc_moments,
    simulate_cohort_paths,
    simulate_kappa_arima011,
    simulate_kappa_arima110,
    simulate_kappa_rw,
    simulate_surface,
    simulate_surfaces,
    student_t_innovations,
    uniform_innovations,
)
from .identify import (
    EquivalenceReport,
    RecoveryError,
    RecoveryResult,
    ap_mean_pair_zero_drift,
    apc_drift_swap_pair,
    apc_x0_variance_trade_pair,
    canonical_vector,
    check_equivalence,
    fully_parametric_cohort_pair,
    fully_parametric_mean_surface,
    param_distance,
    recover_ap_arima011,
    recover_ap_arima110,
    recover_ap_rw,
    recover_apc_rw,
    search_equivalent,
)
from .estimate import (
    DegenerateSurfaceError,
    FitResult,
    Stage2Fit,
    demo_distributional_constraint,
    demo_dynamic_constraint,
    fit_lee_carter,
    fit_lee_carter_stage1,
    fit_stage2,
    rank1_surface,
)

__version__ = "0.1.0"
