"""Numerical laboratory for the parabolic Anderson model in dynamic media."""

from .environment import EnvConfig, EnvTrajectory, env_mean, export_env, import_env, sample_env
from .errors import (
    ConfigError,
    ContractError,
    NumericError,
    PamlabError,
    PropertyViolation,
    RangeError,
    ResourceError,
)
from .multiscale import (
    BlockId,
    BlockSpec,
    ScheduleParams,
    block_bounds,
    block_census,
    block_of,
    census_jsonl,
    classify_block,
    crossing_bound_check,
    mixing_probe,
    schedule_report,
    space_window,
    sub_blocks,
    truncate_env,
)
from .oracle import (
    BoxDomain,
    PotentialSchedule,
    fk_expectation,
    mc_vs_oracle_report,
    solve_pam,
)
from .rearrangement import (
    FiniteFunction,
    localtime_mgf_check,
    multisum_check,
    project_block,
    random_localtime_instance,
    rearrange_fn,
    rearrange_set,
    rearrangement_corpus,
    riesz_check,
    spiral_rank,
    spiral_site,
)
from .spectral import (
    NestedIntervals,
    lattice_laplacian,
    neumann_gap,
    poisson_tail,
    swept_top_eigenvalue,
    top_eigenvalue,
    verify_eigenvalue_bound,
    verify_fk_spectral_bound,
    verify_localtime_eigen_bound,
    verify_neumann_properties,
)
from .walk import (
    FkEstimate,
    LyapunovEstimate,
    STBox,
    WalkPath,
    count_block_crossings,
    fk_estimate_u,
    kappa_block_bound_check,
    local_time,
    lyapunov_sweep,
    maximal_inequality_check,
    path_integral,
    sample_walk,
    sup_tail_bound,
)

__version__ = "0.1.0"
