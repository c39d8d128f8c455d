"""Population-scale size-structured demographic models.

Deterministic kernel propagation on a discretized trait grid, a log-GP Cox
observation layer, climate-space scaling for sparse panels, and MCMC
fitting with a simulation harness for missing-data experiments.
"""

from .errors import (
    ConstraintError,
    ConvergenceError,
    DomainError,
    EmptyBinError,
    GridMismatchError,
    InputError,
    ZeroIntensityError,
)
from .grid import (
    IntensityField,
    PointPattern,
    TraitGrid,
    discretize,
    empirical_intensity,
    integrate,
    read_patterns_csv,
    silverman_bandwidth,
    write_patterns_csv,
)
from .kernel import (
    ClimateRecord,
    KernelParams,
    climate_scale,
    covariate_vector,
    growth_density,
    kernel_eval,
    population_update,
    recruit_density,
    recruitment_rate,
    survival_prob,
)
from .propagation import (
    KernelMatrix,
    build_kernel_matrix,
    dominant_eigenpair,
    project,
    pseudo_ipm_step,
    write_projection_csv,
)
from .cox import (
    INTENSITY_FLOOR,
    CellCounts,
    GPConfig,
    apply_log_gp,
    bin_counts,
    cholesky_factor,
    correlation,
    covariance_matrix,
    gp_log_density,
    log_likelihood,
    sample_gp,
)
from .climate import (
    ClimateBinning,
    CovariateScaler,
    SparsePanel,
    assign,
    bin_designs,
    build_binning,
    build_panel,
    panel_summary,
    per_plot_intensity,
    read_climate_csv,
    scaled_step_target,
    write_climate_csv,
    write_panel_summary_csv,
)
from .inference import (
    FitContext,
    MCMCConfig,
    ModelState,
    ParamSummary,
    PosteriorChain,
    PriorSpec,
    TermData,
    abundance_summary,
    build_fit_context,
    check_constraint,
    elliptical_slice_update,
    identifiability_bound,
    log_posterior,
    mcmc_fit,
    predictive_intensity_bands,
    random_walk_update,
    read_chain,
    solve_boundary,
    summarize,
    write_chain_csv,
    write_chain_meta,
)
from .simulate import (
    SimConfig,
    SimulatedData,
    TruthSet,
    default_truth_params,
    derive_seed,
    generate_truth,
    inject_missingness,
    posterior_projection,
    projection_experiment,
    recovery_experiment,
    recovery_report,
    sample_pattern,
    simulate_dataset,
    truncate_panel,
    write_band_csv,
)

__version__ = "0.1.0"
