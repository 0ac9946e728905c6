"""Centroid meta-learning for linear regression: split vs non-split outer losses."""
from .asymptotics import (
    RateEstimate,
    ShapePoint,
    optimize_rho,
    rho_limit,
    rho_sp_mc,
    rho_trtr_mc,
    rho_upper_bound,
    sp_limit_rate,
    sp_optimal_rate,
    stieltjes_mp,
)
from .harness import ExperimentConfig, ResultRow, emit_chart, emit_csv, load_config, read_csv, run
from .numerics import NotPositiveDefiniteError, Rng, gram_eigvals, solve_spd, sym_eigvals
from .oracles import (
    claim1_moments,
    counterexample_erm_gap,
    counterexample_minimizers_exact,
    quadratic_form_moments,
)
from .solvers import (
    QuadraticAccumulator,
    RidgeConfig,
    assemble_nonsplit_quadratic,
    assemble_split_quadratic,
    erm_solve,
    nonsplit_loss,
    ridge_solve,
    sandwich_covariance,
    split_loss,
)
from .tasks import CounterexampleModel, RealizableModel, SplitConfig, TaskSample

__version__ = "0.1.0"
