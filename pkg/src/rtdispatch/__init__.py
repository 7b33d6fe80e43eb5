"""Multi-period stochastic economic dispatch: models, solvers, simulator."""

from .model import (
    Branch,
    CaseFormatError,
    DispatchSolution,
    Generator,
    PenaltyPrices,
    ReserveRequirements,
    Scenario,
    ScenarioSet,
    SystemCase,
    SystemState,
    ValidatedCase,
    ValidationError,
    format_timeseries,
    initial_state,
    parse_case,
    parse_timeseries,
    serialize_case,
    validate_case,
)
from .lp import (
    LinearProgram,
    LPOptions,
    LPSolution,
    append_rows_and_resolve,
    solve_lp,
    verify_kkt,
    write_lp_format,
)
from .formulation import (
    CostBreakdown,
    VariableMap,
    build_benders_master,
    build_benders_subproblem,
    build_lad,
    build_sced,
    build_slad_extensive,
    extract_dispatch,
    itemize_costs,
)
from .benders import (
    BendersConfig,
    BendersResult,
    Cut,
    CutPool,
    run_benders,
    solve_with_lazy_flows,
)
from .forecast import (
    HistoryStore,
    format_history,
    knn_scenarios,
    load_history,
    mean_forecast,
)
from .simulator import (
    IterationLimit,
    PolicySpec,
    SimulationError,
    SimulationLog,
    available_capacity,
    daily_savings,
    run_perfect_dispatch,
    run_simulation,
    settle_first_period,
)

__version__ = "0.1.0"

__all__ = [
    "BendersConfig",
    "BendersResult",
    "Branch",
    "CaseFormatError",
    "CostBreakdown",
    "Cut",
    "CutPool",
    "DispatchSolution",
    "Generator",
    "HistoryStore",
    "IterationLimit",
    "LinearProgram",
    "LPOptions",
    "LPSolution",
    "PenaltyPrices",
    "PolicySpec",
    "ReserveRequirements",
    "Scenario",
    "ScenarioSet",
    "SimulationError",
    "SimulationLog",
    "SystemCase",
    "SystemState",
    "ValidatedCase",
    "ValidationError",
    "VariableMap",
    "append_rows_and_resolve",
    "available_capacity",
    "build_benders_master",
    "build_benders_subproblem",
    "build_lad",
    "build_sced",
    "build_slad_extensive",
    "daily_savings",
    "extract_dispatch",
    "format_history",
    "format_timeseries",
    "initial_state",
    "itemize_costs",
    "knn_scenarios",
    "load_history",
    "mean_forecast",
    "parse_case",
    "parse_timeseries",
    "run_benders",
    "run_perfect_dispatch",
    "run_simulation",
    "serialize_case",
    "settle_first_period",
    "solve_lp",
    "validate_case",
    "verify_kkt",
    "write_lp_format",
]
