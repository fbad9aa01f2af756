"""Closed-loop weapon-target assignment simulation and solver toolkit."""

from .cost import (
    CostConfig,
    CostMatrix,
    apply_switch_penalty,
    build_cost_matrix,
    normalize_metrics,
    surrogate_cost_matrix,
)
from .dynamics import AgentState, saturate_accel, step_state
from .geometry import (
    SceneSnapshot,
    asset_relevance,
    associate_asset,
    build_snapshot,
    time_to_asset,
)
from .guidance import RANGE_EPSILON, RelativeKinematics, png_command, relative_kinematics
from .llm_assigner import (
    AssignerOutcome,
    BackendConfig,
    BackendError,
    BackendTimeout,
    ParseFailure,
    PromptDocument,
    ValidationFailure,
    assign_with_fallback,
    format_prompt,
    parse_response,
    query_backend,
    validate_assignment,
)
from .mission import (
    ASSIGNER_KINDS,
    MissionConfig,
    MissionEvent,
    MissionLog,
    MissionMetrics,
    baseline_init,
    count_switches,
    run_epoch,
    run_mission,
)
from .output import write_metrics, write_replay_log, write_trajectory_csv
from .plots import build_engagement_figure, emit_plot
from .scenario import (
    AssetSpec,
    CostWeights,
    InterceptorSpec,
    Scenario,
    ScenarioError,
    TargetSpec,
    bundled_scenario_path,
    load_scenario,
    parse_scenario,
    save_scenario,
    serialize_scenario,
    validate_scenario,
)
from .solvers import (
    Assignment,
    InfeasibleError,
    MilpConstraints,
    brute_force_assignment,
    pad_rectangular,
    solve_auction,
    solve_hungarian,
    solve_milp,
)

__version__ = "0.1.0"
