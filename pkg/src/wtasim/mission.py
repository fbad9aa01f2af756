"""Closed-loop engagement mission: epochs of assignment plus guidance.

The mission alternates two layers. At each decision epoch boundary a scene
snapshot is built and an assigner (classical solver, language-model
backend, or control baseline) produces the interceptor-to-target map. In
between, every live interceptor flies proportional navigation against its
assigned target on the fast simulation grid, targets fly their scripted
maneuvers toward the defended assets, and intercept / breach events remove
agents as they occur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostConfig, build_cost_matrix
from .dynamics import AgentState, saturate_accel, step_state
from .geometry import SceneSnapshot, build_snapshot
from .guidance import RANGE_EPSILON, png_command, relative_kinematics
from .llm_assigner import AssignerOutcome, BackendConfig, assign_with_fallback
from .scenario import Scenario, ScenarioError, validate_scenario
from .solvers import (
    Assignment,
    MilpConstraints,
    pad_rectangular,
    solve_auction,
    solve_hungarian,
    solve_milp,
)

__all__ = [
    "ASSIGNER_KINDS",
    "MissionConfig",
    "MissionState",
    "MissionEvent",
    "TrajectorySample",
    "AssignmentRecord",
    "ReplayRecord",
    "MissionMetrics",
    "MissionLog",
    "baseline_init",
    "run_epoch",
    "run_mission",
    "count_switches",
]

ASSIGNER_KINDS = ("hungarian", "milp", "auction", "llm", "random_init")

_TIME_EPS = 1e-9


@dataclass
class MissionConfig:
    """Mission-level knobs that sit outside the scenario file."""

    seed: int = 0
    backend: BackendConfig | None = None
    cost: CostConfig | None = None  # None: scenario weights, defaults otherwise
    baseline: str | None = None  # None: "random" for random_init, else "hungarian"
    epoch_dt: float | None = None  # overrides the scenario when set
    coverage: str | None = None  # overrides the scenario when set ("on"/"off")
    auction_eps: float = 1e-6


@dataclass
class MissionState:
    """Live agent states at one instant, keyed by original id."""

    interceptors: dict[int, AgentState]
    targets: dict[int, AgentState]

    def copy(self) -> "MissionState":
        return MissionState(
            interceptors={i: s.copy() for i, s in self.interceptors.items()},
            targets={k: s.copy() for k, s in self.targets.items()},
        )


@dataclass
class MissionEvent:
    kind: str  # intercept | asset_breach | reassignment | fallback_used | x_max_violation
    time: float
    subject_ids: tuple[int, ...]
    detail: str
    position: tuple[float, float, float] | None = None


@dataclass
class TrajectorySample:
    time: float
    side: str  # "interceptor" | "target"
    id: int
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    assigned_target: int | None


@dataclass
class AssignmentRecord:
    """One epoch's decision, in original-id space."""

    epoch: int
    time: float
    interceptor_ids: list[int]
    target_ids: list[int]  # assigned target per interceptor, aligned
    source: str
    objective: float


@dataclass
class ReplayRecord:
    """Everything needed to re-audit one language-model exchange offline."""

    epoch: int
    time: float
    system_section: str
    scene_section: str
    decision_request: str
    response: str
    source: str
    attempts: int
    latency: float
    assignment: list[int]
    clipped: list[int]
    failures: list[str]
    n_agents: int
    clip_bound: int


@dataclass
class MissionMetrics:
    targets_intercepted: int = 0
    assets_breached: int = 0
    mean_intercept_time: float = 0.0
    total_switches: int = 0
    fallback_count: int = 0
    mean_assigner_latency: float = 0.0


@dataclass
class MissionLog:
    scenario: Scenario
    assigner: str
    seed: int
    events: list[MissionEvent] = field(default_factory=list)
    samples: list[TrajectorySample] = field(default_factory=list)
    history: list[AssignmentRecord] = field(default_factory=list)
    replay_records: list[ReplayRecord] = field(default_factory=list)
    metrics: MissionMetrics = field(default_factory=MissionMetrics)
    final_time: float = 0.0


# ---------------------------------------------------------------------------
# Baseline assignment at epoch zero
# ---------------------------------------------------------------------------

def baseline_init(
    scenario: Scenario,
    mode: str = "hungarian",
    seed: int = 0,
    cost_config: CostConfig | None = None,
) -> Assignment:
    """Initial assignment before the first decision epoch.

    "hungarian" solves the epoch-zero surrogate cost; "random" draws a
    seeded assignment that still covers every target when coverage is in
    force (each target gets a distinct interceptor, surplus rows drawn
    uniformly).
    """
    if mode not in ("hungarian", "random"):
        raise ValueError(f"baseline mode must be 'hungarian' or 'random', got {mode!r}")
    cost_config = cost_config if cost_config is not None else CostConfig()
    snapshot = build_snapshot(
        scenario,
        {i.id: i.initial_state.copy() for i in scenario.interceptors},
        {t.id: t.initial_state.copy() for t in scenario.targets},
        epoch_index=0,
        time=0.0,
    )
    cost = build_cost_matrix(snapshot, cost_config)
    if mode == "hungarian":
        return solve_hungarian(cost)
    rng = np.random.default_rng(seed)
    n, nt = snapshot.n_interceptors, snapshot.n_targets
    target_of = np.zeros(n, dtype=int)
    if scenario.coverage_enabled(n, nt):
        rows = rng.permutation(n)
        for col in range(nt):
            target_of[rows[col]] = col + 1
        for row in rows[nt:]:
            target_of[row] = int(rng.integers(1, nt + 1))
    else:
        target_of[:] = rng.integers(1, nt + 1, size=n)
    cols0 = target_of - 1
    objective = float(cost.values[np.arange(n), cols0].sum())
    return Assignment(target_of=target_of, objective=objective)


# ---------------------------------------------------------------------------
# Epoch integration
# ---------------------------------------------------------------------------

def _closest_approach(r0: np.ndarray, v_rel: np.ndarray, dt: float) -> tuple[float, float]:
    """Min distance of the linearized relative motion over [0, dt].

    Returns (distance, offset time). Guards against tunneling through the
    kill sphere within one substep at closing speeds well above
    kill_radius / sim_dt.
    """
    vv = float(v_rel @ v_rel)
    if vv <= RANGE_EPSILON**2:
        return float(np.linalg.norm(r0)), 0.0
    s = -float(r0 @ v_rel) / vv
    s = min(max(s, 0.0), dt)
    return float(np.linalg.norm(r0 + v_rel * s)), s


def run_epoch(
    state: MissionState,
    assignment: dict[int, int],
    scenario: Scenario,
    t_start: float,
    t_end: float,
) -> tuple[MissionState, list[MissionEvent], list[TrajectorySample]]:
    """Integrate guidance and kinematics from t_start to t_end.

    assignment maps live interceptor id to target id; interceptors whose
    target is gone coast unpowered. Intercepts use within-substep closest
    approach and remove both agents; a target entering any protection zone
    is a breach and is removed. The input state is not mutated; a
    zero-length range returns it unchanged with no events.

    Samples are recorded at every substep start (so the caller sees the
    state at t_start); the final state at t_end is returned, not sampled,
    which keeps sample times unique across back-to-back epochs.
    """
    out = state.copy()
    events: list[MissionEvent] = []
    samples: list[TrajectorySample] = []
    dt = scenario.sim_dt
    n_steps = int(round((t_end - t_start) / dt))
    if n_steps <= 0:
        return out, events, samples

    targets_by_id = {t.id: t for t in scenario.targets}
    interceptors_by_id = {i.id: i for i in scenario.interceptors}
    intercepted_now: set[int] = set()
    # Timestamps come from the global substep index, not from accumulating
    # t_start, so the same instant gets the same float no matter how the
    # surrounding epochs are sliced.
    start_index = int(round(t_start / dt))

    for step in range(n_steps):
        t_now = (start_index + step) * dt
        for i_id in sorted(out.interceptors):
            s = out.interceptors[i_id]
            samples.append(
                TrajectorySample(
                    t_now, "interceptor", i_id,
                    tuple(s.position), tuple(s.velocity), assignment.get(i_id),
                )
            )
        for t_id in sorted(out.targets):
            s = out.targets[t_id]
            samples.append(
                TrajectorySample(t_now, "target", t_id, tuple(s.position), tuple(s.velocity), None)
            )

        # Guidance commands from the pre-step states.
        commands: dict[tuple[str, int], np.ndarray] = {}
        rel_before: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for i_id, i_state in out.interceptors.items():
            t_id = assignment.get(i_id)
            if t_id is None or t_id not in out.targets:
                commands[("interceptor", i_id)] = np.zeros(3)
                continue
            t_state = out.targets[t_id]
            r0 = i_state.position - t_state.position
            v0 = i_state.velocity - t_state.velocity
            rel_before[i_id] = (r0, v0)
            rng_now = float(np.linalg.norm(r0))
            if rng_now <= RANGE_EPSILON:
                commands[("interceptor", i_id)] = np.zeros(3)
                continue
            kin = relative_kinematics(i_state, t_state)
            commands[("interceptor", i_id)] = png_command(
                kin, interceptors_by_id[i_id].nav_constant, scenario.a_max
            )
        for t_id, t_state in out.targets.items():
            commands[("target", t_id)] = saturate_accel(
                targets_by_id[t_id].maneuver_accel, scenario.a_max
            )

        for i_id in list(out.interceptors):
            out.interceptors[i_id] = step_state(
                out.interceptors[i_id], commands[("interceptor", i_id)], dt
            )
        for t_id in list(out.targets):
            out.targets[t_id] = step_state(out.targets[t_id], commands[("target", t_id)], dt)

        step_events: list[MissionEvent] = []

        # Intercept detection: closest linearized approach within the
        # substep, or the exact post-step separation, under kill_radius.
        hits: list[tuple[float, int, int]] = []
        for i_id, (r0, v0) in rel_before.items():
            t_id = assignment[i_id]
            if t_id in intercepted_now or t_id not in out.targets:
                continue
            d_lin, s_off = _closest_approach(r0, v0, dt)
            d_end = float(
                np.linalg.norm(out.interceptors[i_id].position - out.targets[t_id].position)
            )
            if d_end < d_lin:
                d_lin, s_off = d_end, dt
            if d_lin < scenario.kill_radius:
                hits.append((t_now + s_off, i_id, t_id))
        hits.sort()
        for t_hit, i_id, t_id in hits:
            if t_id in intercepted_now or i_id not in out.interceptors:
                continue
            intercepted_now.add(t_id)
            pos = out.targets[t_id].position
            step_events.append(
                MissionEvent(
                    "intercept", t_hit, (i_id, t_id),
                    f"interceptor {i_id} intercepted target {t_id}",
                    tuple(pos),
                )
            )
            del out.interceptors[i_id]
            del out.targets[t_id]

        # Breach detection on the post-step positions of surviving targets.
        t_next = (start_index + step + 1) * dt
        for t_id in sorted(out.targets):
            pos = out.targets[t_id].position
            for asset in scenario.assets:
                if float(np.linalg.norm(pos - asset.position)) < asset.protection_radius:
                    step_events.append(
                        MissionEvent(
                            "asset_breach", t_next, (t_id, asset.id),
                            f"target {t_id} breached the protection zone of asset {asset.id}",
                            tuple(pos),
                        )
                    )
                    del out.targets[t_id]
                    break

        step_events.sort(key=lambda e: (e.time, e.kind, e.subject_ids))
        events.extend(step_events)

    return out, events, samples


# ---------------------------------------------------------------------------
# Per-epoch assigner dispatch
# ---------------------------------------------------------------------------

def _solve_auction_any(values: np.ndarray, eps_final: float) -> Assignment:
    """Auction on possibly rectangular costs via the padding layer."""
    n, nt = values.shape
    if n == nt:
        return solve_auction(values, eps_final=eps_final)
    mode = "duplicate_targets" if n > nt else "dummy_columns"
    padded, pad_map = pad_rectangular(values, mode)
    solved = solve_auction(padded, eps_final=eps_final)
    cols0 = pad_map.strip(np.asarray(solved.target_of) - 1, values)
    objective = float(values[np.arange(n), cols0].sum())
    return Assignment(target_of=cols0 + 1, objective=objective)


def _static_keep_previous(snapshot: SceneSnapshot, cost) -> Assignment:
    """Keep each interceptor on its previous target, repairing dead rows.

    Rows whose previous target is gone are reassigned together by a
    Hungarian solve over the full live-column submatrix; coverage is not
    re-enforced, matching the control role of this policy.
    """
    n = snapshot.n_interceptors
    prev = snapshot.previous_assignment or [0] * n
    target_of = np.zeros(n, dtype=int)
    repair_rows = []
    for i, prev_id in enumerate(prev):
        col = snapshot.target_column(prev_id)
        if col is None:
            repair_rows.append(i)
        else:
            target_of[i] = col + 1
    if repair_rows:
        sub = cost.values[repair_rows, :]
        repaired = solve_hungarian(sub)
        for row, col in zip(repair_rows, repaired.target_of):
            target_of[row] = int(col)
    cols0 = target_of - 1
    objective = float(cost.values[np.arange(n), cols0].sum())
    return Assignment(target_of=target_of, objective=objective)


def _decide(
    kind: str,
    snapshot: SceneSnapshot,
    scenario: Scenario,
    cfg: MissionConfig,
    cost_config: CostConfig,
) -> tuple[Assignment, str, AssignerOutcome | None]:
    """Run the chosen assigner on one snapshot; returns column-space result."""
    coverage_on = scenario.coverage_enabled(snapshot.n_interceptors, snapshot.n_targets)
    if kind == "llm":
        if cfg.backend is None:
            raise ValueError("llm assigner requires a backend configuration")
        outcome = assign_with_fallback(
            snapshot, cfg.backend, cost_config=cost_config, coverage_required=coverage_on
        )
        return outcome.assignment, outcome.source, outcome
    cost = build_cost_matrix(snapshot, cost_config)
    if kind == "hungarian":
        return solve_hungarian(cost), "hungarian", None
    if kind == "milp":
        asg = solve_milp(cost.values, MilpConstraints(coverage_required=coverage_on))
        return asg, "milp", None
    if kind == "auction":
        return _solve_auction_any(cost.values, cfg.auction_eps), "auction", None
    if kind == "random_init":
        return _static_keep_previous(snapshot, cost), "static", None
    raise ValueError(f"unknown assigner {kind!r}; choose from {ASSIGNER_KINDS}")


# ---------------------------------------------------------------------------
# Mission driver
# ---------------------------------------------------------------------------

def count_switches(history: list[AssignmentRecord]) -> int:
    """Total reassignments across consecutive epochs.

    Counts every interceptor present in both records whose target id
    changed, including retargets forced by the old target's removal.
    """
    switches = 0
    for prev, curr in zip(history, history[1:]):
        prev_map = dict(zip(prev.interceptor_ids, prev.target_ids))
        for i_id, t_id in zip(curr.interceptor_ids, curr.target_ids):
            if i_id in prev_map and prev_map[i_id] != t_id:
                switches += 1
    return switches


def _effective_scenario(scenario: Scenario, cfg: MissionConfig) -> Scenario:
    changes = {}
    if cfg.epoch_dt is not None:
        changes["epoch_dt"] = cfg.epoch_dt
    if cfg.coverage is not None:
        changes["coverage"] = cfg.coverage
    if changes:
        scenario = replace(scenario, **changes)
        violations = validate_scenario(scenario)
        if violations:
            raise ScenarioError(violations)
    return scenario


def _record(
    epoch: int, time: float, snapshot_ids: list[int], assigned: dict[int, int],
    source: str, objective: float,
) -> AssignmentRecord:
    return AssignmentRecord(
        epoch=epoch,
        time=time,
        interceptor_ids=list(snapshot_ids),
        target_ids=[assigned[i] for i in snapshot_ids],
        source=source,
        objective=objective,
    )


def run_mission(
    scenario: Scenario,
    assigner: str = "hungarian",
    cfg: MissionConfig | None = None,
) -> MissionLog:
    """Run the closed loop from t=0 until all targets are resolved or t_final.

    Epoch zero uses the baseline assignment; each later epoch boundary
    re-solves from a fresh snapshot. The run ends early once every target
    has been intercepted or has breached. Fully deterministic for a fixed
    scenario, assigner, seed, and backend configuration.
    """
    if assigner not in ASSIGNER_KINDS:
        raise ValueError(f"unknown assigner {assigner!r}; choose from {ASSIGNER_KINDS}")
    cfg = cfg if cfg is not None else MissionConfig()
    scenario = _effective_scenario(scenario, cfg)
    cost_config = cfg.cost if cfg.cost is not None else CostConfig(weights=scenario.cost_weights)
    log = MissionLog(scenario=scenario, assigner=assigner, seed=cfg.seed)

    state = MissionState(
        interceptors={i.id: i.initial_state.copy() for i in scenario.interceptors},
        targets={t.id: t.initial_state.copy() for t in scenario.targets},
    )

    baseline_mode = cfg.baseline
    if baseline_mode is None:
        baseline_mode = "random" if assigner == "random_init" else "hungarian"
    snapshot = build_snapshot(scenario, state.interceptors, state.targets, 0, 0.0)
    z0 = baseline_init(scenario, mode=baseline_mode, seed=cfg.seed, cost_config=cost_config)
    assigned = {
        i_id: snapshot.target_ids[col - 1]
        for i_id, col in zip(snapshot.interceptor_ids, z0.target_of)
    }
    log.history.append(
        _record(0, 0.0, snapshot.interceptor_ids, assigned, f"baseline_{baseline_mode}", z0.objective)
    )

    warned_x_max: set[tuple[str, int]] = set()
    intercept_times: list[float] = []
    latencies: list[float] = []
    steps_per_epoch = int(round(scenario.epoch_dt / scenario.sim_dt))
    total_steps = int(math.floor(scenario.t_final / scenario.sim_dt + _TIME_EPS))

    t = 0.0
    done_steps = 0
    epoch = 0
    while done_steps < total_steps and state.targets:
        n_steps = min(steps_per_epoch, total_steps - done_steps)
        t_end = (done_steps + n_steps) * scenario.sim_dt
        state, events, samples = run_epoch(state, assigned, scenario, t, t_end)
        log.samples.extend(samples)
        for sample in samples:
            key = (sample.side, sample.id)
            if key in warned_x_max:
                continue
            if float(np.linalg.norm(sample.position)) > scenario.x_max:
                warned_x_max.add(key)
                events.append(
                    MissionEvent(
                        "x_max_violation", sample.time, (sample.id,),
                        f"{sample.side} {sample.id} left the arena (range over "
                        f"{scenario.x_max:g} km)",
                        sample.position,
                    )
                )
        events.sort(key=lambda e: (e.time, e.kind, e.subject_ids))
        for event in events:
            log.events.append(event)
            if event.kind == "intercept":
                intercept_times.append(event.time)
                log.metrics.targets_intercepted += 1
            elif event.kind == "asset_breach":
                log.metrics.assets_breached += 1
        t = t_end
        done_steps += n_steps
        epoch += 1
        assigned = {i: k for i, k in assigned.items() if i in state.interceptors}
        if done_steps >= total_steps or not state.targets:
            break
        if not state.interceptors:
            continue

        snapshot = build_snapshot(
            scenario, state.interceptors, state.targets, epoch, t, previous_assignment=assigned
        )
        decision, source, outcome = _decide(assigner, snapshot, scenario, cfg, cost_config)
        new_assigned = {
            i_id: snapshot.target_ids[col - 1]
            for i_id, col in zip(snapshot.interceptor_ids, decision.target_of)
        }
        changed = [
            i_id for i_id in snapshot.interceptor_ids
            if assigned.get(i_id) != new_assigned[i_id]
        ]
        if changed:
            log.events.append(
                MissionEvent(
                    "reassignment", t, tuple(changed),
                    f"epoch {epoch}: {len(changed)} interceptor(s) retargeted",
                )
            )
        if outcome is not None:
            latencies.append(outcome.latency)
            log.replay_records.append(
                ReplayRecord(
                    epoch=epoch,
                    time=t,
                    system_section=outcome.prompt.system_section,
                    scene_section=outcome.prompt.scene_section,
                    decision_request=outcome.prompt.decision_request,
                    response=outcome.raw_response,
                    source=outcome.source,
                    attempts=outcome.attempts,
                    latency=outcome.latency,
                    assignment=[new_assigned[i] for i in snapshot.interceptor_ids],
                    clipped=list(outcome.clipped),
                    failures=list(outcome.failures),
                    n_agents=snapshot.n_interceptors,
                    clip_bound=max(snapshot.target_ids),
                )
            )
            if outcome.source == "fallback":
                log.metrics.fallback_count += 1
                log.events.append(
                    MissionEvent(
                        "fallback_used", t, tuple(snapshot.interceptor_ids),
                        f"epoch {epoch}: backend chain exhausted after "
                        f"{outcome.attempts} attempt(s); "
                        f"{cfg.backend.fallback_solver} fallback engaged",
                    )
                )
        assigned = new_assigned
        log.history.append(
            _record(epoch, t, snapshot.interceptor_ids, assigned, source, decision.objective)
        )

    log.final_time = t
    log.metrics.total_switches = count_switches(log.history)
    if intercept_times:
        log.metrics.mean_intercept_time = float(np.mean(intercept_times))
    if latencies:
        log.metrics.mean_assigner_latency = float(np.mean(latencies))
    return log
