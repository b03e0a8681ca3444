"""Tabular average-reward constrained MDPs: exact planning oracles, two
online learning algorithm families, and a seeded experiment harness."""

from .errors import (
    AssumptionViolated,
    AvgCmdpError,
    Infeasible,
    InfeasibleFloor,
    InvalidHorizon,
    InvariantViolation,
    NoFeasiblePoint,
    NonConvergence,
    NotErgodic,
    NumericalFailure,
    ParseError,
    SingularSystem,
    Unbounded,
)
from .exact import (
    BiasSolution,
    ConstrainedOptimum,
    average_utility,
    optimal_constrained,
    solve_bias,
    span,
    stationary_distribution,
)
from .ergodic_po import (
    BonusResult,
    PoParams,
    QEstimate,
    build_weissman_set,
    compute_bonus_reward,
    derive_parameters,
    dual_update,
    estimate_q,
    evi_bonus,
    omd_policy_update,
    run_ergodic_po,
)
from .finite_horizon import (
    BernsteinSet,
    FhValueTable,
    FiniteHorizonOccupancy,
    FiniteHorizonPolicy,
    SpanBudget,
    bernstein_confidence,
    extract_policy_transition,
    fh_values,
    occupancy_of_policy,
    run_finite_horizon,
    solve_opt1,
    solve_opt2,
)
from .harness import (
    ExperimentConfig,
    MetricCurves,
    compute_metrics,
    emit_plot_data,
    generate_random_ergodic,
    run_suite,
)
from .lp import LinearProgram, LpSolution, solve_lp
from .mixing import MixingProfile, estimate_mixing_time
from .model import CmdpModel, OccupancyMeasure, StationaryPolicy, load_model, save_model
from .projections import inner_max_l1, kl_project_capped_simplex
from .runlog import ExperimentLog
from .simulate import Trajectory, empirical_transition, make_rng, sample_trajectory
from .tolerances import TOL, Tolerances

__all__ = [name for name in dir() if not name.startswith("_")]
