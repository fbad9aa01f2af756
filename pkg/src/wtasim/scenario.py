"""Scenario definition, validation, and (de)serialization.

A scenario bundles the defended assets, inbound targets, interceptors, shared
physics limits, and surrogate-cost weights. On disk it is a YAML document
with top-level keys ``interceptors``, ``targets``, ``assets``, ``physics``
and ``cost_weights``; ``load_scenario`` and ``serialize_scenario`` round-trip
losslessly for valid scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import AgentState

__all__ = [
    "AssetSpec",
    "TargetSpec",
    "InterceptorSpec",
    "CostWeights",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "parse_scenario",
    "serialize_scenario",
    "save_scenario",
    "validate_scenario",
    "bundled_scenario_path",
]


class ScenarioError(ValueError):
    """Raised when a scenario document fails validation.

    Carries the full list of violations so callers can report every problem
    at once instead of fixing them one by one.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {v}" for v in self.violations))


@dataclass
class AssetSpec:
    """A static defended asset with a circular protection zone."""

    id: int
    position: np.ndarray  # km
    priority: float  # in (0, 1]
    protection_radius: float  # km, > 0

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float).reshape(3)


@dataclass
class TargetSpec:
    id: int
    initial_state: AgentState
    threat_level: float  # in (0, 1]
    maneuver_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    intended_asset: int | None = None

    def __post_init__(self) -> None:
        self.maneuver_accel = np.asarray(self.maneuver_accel, dtype=float).reshape(3)


@dataclass
class InterceptorSpec:
    id: int
    initial_state: AgentState
    nav_constant: float = 4.0


@dataclass
class CostWeights:
    """Weights of the four surrogate-cost terms (all must be positive)."""

    w_d: float = 1.0
    w_v: float = 1.0
    w_theta: float = 1.0
    w_psi: float = 1.0


@dataclass
class Scenario:
    """Full engagement description.

    Attributes:
        interceptors/targets/assets: agent specs with contiguous 1-based ids.
        a_max: shared acceleration bound, km/s^2.
        x_max: soft position-envelope radius, km (violations are logged,
            not clamped).
        sim_dt: integration step, s.
        epoch_dt: assignment-decision period, s; an integer multiple of
            sim_dt so epoch boundaries fall on the substep grid.
        t_final: mission horizon, s.
        kill_radius: intercept declaration range, km.
        cost_weights: surrogate-cost weights.
        tau_ref: time-to-asset normalization constant for asset relevance, s.
        coverage: "auto" enforces each-target-covered whenever there are at
            least as many interceptors as targets; "on" requires it (and the
            scenario must satisfy N >= N_T); "off" disables it.
        name: label used in output file naming.
    """

    interceptors: list[InterceptorSpec]
    targets: list[TargetSpec]
    assets: list[AssetSpec]
    a_max: float
    x_max: float
    sim_dt: float
    epoch_dt: float
    t_final: float
    kill_radius: float = 0.1
    cost_weights: CostWeights = field(default_factory=CostWeights)
    tau_ref: float = 60.0
    coverage: str = "auto"
    name: str = "scenario"

    @property
    def n_interceptors(self) -> int:
        return len(self.interceptors)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def coverage_enabled(self, n_live_interceptors: int | None = None,
                         n_live_targets: int | None = None) -> bool:
        """Whether the every-target-covered constraint applies.

        With live counts given, "auto"/"on" enforce coverage only while the
        interceptors can actually cover every live target.
        """
        n = self.n_interceptors if n_live_interceptors is None else n_live_interceptors
        nt = self.n_targets if n_live_targets is None else n_live_targets
        if self.coverage == "off":
            return False
        return n >= nt


def validate_scenario(scenario: Scenario) -> list[str]:
    """Return every validation violation (empty list = valid)."""
    v: list[str] = []

    if scenario.n_interceptors < 1:
        v.append("at least one interceptor is required")
    if scenario.n_targets < 1:
        v.append("at least one target is required")
    if scenario.n_assets < 1:
        v.append("at least one asset is required")

    for kind, specs in (
        ("interceptor", scenario.interceptors),
        ("target", scenario.targets),
        ("asset", scenario.assets),
    ):
        ids = [s.id for s in specs]
        if specs and sorted(ids) != list(range(1, len(specs) + 1)):
            v.append(f"{kind} ids must be unique and contiguous from 1, got {ids}")

    asset_ids = {a.id for a in scenario.assets}
    for a in scenario.assets:
        if not 0.0 < a.priority <= 1.0:
            v.append(f"asset {a.id}: priority must be in (0, 1], got {a.priority}")
        if not a.protection_radius > 0.0:
            v.append(f"asset {a.id}: protection_radius must be positive, got {a.protection_radius}")

    for t in scenario.targets:
        if not 0.0 < t.threat_level <= 1.0:
            v.append(f"target {t.id}: threat_level must be in (0, 1], got {t.threat_level}")
        if scenario.a_max > 0 and np.linalg.norm(t.maneuver_accel) > scenario.a_max + 1e-12:
            v.append(
                f"target {t.id}: |maneuver_accel| "
                f"{np.linalg.norm(t.maneuver_accel):.6g} exceeds a_max {scenario.a_max:.6g}"
            )
        if t.intended_asset is not None and t.intended_asset not in asset_ids:
            v.append(f"target {t.id}: intended_asset {t.intended_asset} does not exist")

    for i in scenario.interceptors:
        if not i.nav_constant > 0.0:
            v.append(f"interceptor {i.id}: nav_constant must be positive, got {i.nav_constant}")

    for label, value in (
        ("a_max", scenario.a_max),
        ("x_max", scenario.x_max),
        ("sim_dt", scenario.sim_dt),
        ("kill_radius", scenario.kill_radius),
        ("tau_ref", scenario.tau_ref),
    ):
        if not value > 0.0:
            v.append(f"{label} must be positive, got {value}")
    # t_final = 0 is a legal degenerate horizon: the mission produces an
    # initial assignment, empty trajectories, and zeroed metrics.
    if not scenario.t_final >= 0.0:
        v.append(f"t_final must be nonnegative, got {scenario.t_final}")

    if scenario.sim_dt > 0:
        if scenario.epoch_dt < scenario.sim_dt:
            v.append(
                f"epoch_dt {scenario.epoch_dt:.6g} must be >= sim_dt {scenario.sim_dt:.6g}"
            )
        else:
            ratio = scenario.epoch_dt / scenario.sim_dt
            if abs(ratio - round(ratio)) > 1e-9:
                v.append(
                    f"epoch_dt {scenario.epoch_dt:.6g} must be an integer multiple of "
                    f"sim_dt {scenario.sim_dt:.6g} so decisions fall on the substep grid"
                )

    radii = [a.protection_radius for a in scenario.assets if a.protection_radius > 0]
    if radii and scenario.kill_radius >= min(radii):
        v.append(
            f"kill_radius {scenario.kill_radius:.6g} must be smaller than the smallest "
            f"protection_radius {min(radii):.6g}"
        )

    w = scenario.cost_weights
    for label, value in (("w_d", w.w_d), ("w_v", w.w_v), ("w_theta", w.w_theta), ("w_psi", w.w_psi)):
        if not value > 0.0:
            v.append(f"cost weight {label} must be positive, got {value}")

    if scenario.coverage not in ("auto", "on", "off"):
        v.append(f"coverage must be one of auto/on/off, got {scenario.coverage!r}")
    elif scenario.coverage == "on" and scenario.n_interceptors < scenario.n_targets:
        v.append(
            "coverage 'on' requires at least as many interceptors as targets "
            f"(N={scenario.n_interceptors} < N_T={scenario.n_targets})"
        )

    return v


def _vec(raw, where: str) -> np.ndarray:
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise ScenarioError([f"{where}: expected a 3-element list, got {raw!r}"])
    return np.asarray([float(x) for x in raw], dtype=float)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ScenarioError([f"{where}: missing required key {key!r}"])
    return mapping[key]


def parse_scenario(text: str, name: str | None = None) -> Scenario:
    """Build and validate a Scenario from YAML text."""
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario document must be a mapping"])

    physics = doc.get("physics")
    if not isinstance(physics, dict):
        raise ScenarioError(["missing or malformed 'physics' section"])

    assets = []
    for raw in doc.get("assets") or []:
        assets.append(
            AssetSpec(
                id=int(_require(raw, "id", "asset")),
                position=_vec(_require(raw, "position", "asset"), "asset position"),
                priority=float(_require(raw, "priority", "asset")),
                protection_radius=float(_require(raw, "protection_radius", "asset")),
            )
        )

    targets = []
    for raw in doc.get("targets") or []:
        targets.append(
            TargetSpec(
                id=int(_require(raw, "id", "target")),
                initial_state=AgentState(
                    _vec(_require(raw, "position", "target"), "target position"),
                    _vec(_require(raw, "velocity", "target"), "target velocity"),
                ),
                threat_level=float(_require(raw, "threat_level", "target")),
                maneuver_accel=(
                    _vec(raw["maneuver_accel"], "target maneuver_accel")
                    if raw.get("maneuver_accel") is not None
                    else np.zeros(3)
                ),
                intended_asset=(
                    int(raw["intended_asset"]) if raw.get("intended_asset") is not None else None
                ),
            )
        )

    interceptors = []
    for raw in doc.get("interceptors") or []:
        interceptors.append(
            InterceptorSpec(
                id=int(_require(raw, "id", "interceptor")),
                initial_state=AgentState(
                    _vec(_require(raw, "position", "interceptor"), "interceptor position"),
                    _vec(_require(raw, "velocity", "interceptor"), "interceptor velocity"),
                ),
                nav_constant=float(raw.get("nav_constant", 4.0)),
            )
        )

    weights_raw = doc.get("cost_weights") or {}
    weights = CostWeights(
        w_d=float(weights_raw.get("w_d", 1.0)),
        w_v=float(weights_raw.get("w_v", 1.0)),
        w_theta=float(weights_raw.get("w_theta", 1.0)),
        w_psi=float(weights_raw.get("w_psi", 1.0)),
    )

    scenario = Scenario(
        interceptors=interceptors,
        targets=targets,
        assets=assets,
        a_max=float(_require(physics, "a_max", "physics")),
        x_max=float(_require(physics, "x_max", "physics")),
        sim_dt=float(_require(physics, "sim_dt", "physics")),
        epoch_dt=float(_require(physics, "epoch_dt", "physics")),
        t_final=float(_require(physics, "t_final", "physics")),
        kill_radius=float(physics.get("kill_radius", 0.1)),
        cost_weights=weights,
        tau_ref=float(physics.get("tau_ref", 60.0)),
        coverage=str(doc.get("coverage", "auto")),
        name=str(name if name is not None else doc.get("name", "scenario")),
    )

    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioError(violations)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file; raises ScenarioError listing
    every violation if the document is invalid."""
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), name=path.stem)


def _num(x: float):
    # Keep integers exact so YAML round-trips byte-identically.
    f = float(x)
    return int(f) if f.is_integer() and abs(f) < 1e15 else f


def _vec_out(v: np.ndarray) -> list:
    return [_num(x) for x in v]


def serialize_scenario(scenario: Scenario) -> str:
    """Render a Scenario back to YAML text (inverse of parse_scenario)."""
    doc: dict = {
        "name": scenario.name,
        "coverage": scenario.coverage,
        "physics": {
            "a_max": _num(scenario.a_max),
            "x_max": _num(scenario.x_max),
            "sim_dt": _num(scenario.sim_dt),
            "epoch_dt": _num(scenario.epoch_dt),
            "t_final": _num(scenario.t_final),
            "kill_radius": _num(scenario.kill_radius),
            "tau_ref": _num(scenario.tau_ref),
        },
        "cost_weights": {
            "w_d": _num(scenario.cost_weights.w_d),
            "w_v": _num(scenario.cost_weights.w_v),
            "w_theta": _num(scenario.cost_weights.w_theta),
            "w_psi": _num(scenario.cost_weights.w_psi),
        },
        "assets": [
            {
                "id": a.id,
                "position": _vec_out(a.position),
                "priority": _num(a.priority),
                "protection_radius": _num(a.protection_radius),
            }
            for a in scenario.assets
        ],
        "targets": [],
        "interceptors": [
            {
                "id": i.id,
                "position": _vec_out(i.initial_state.position),
                "velocity": _vec_out(i.initial_state.velocity),
                "nav_constant": _num(i.nav_constant),
            }
            for i in scenario.interceptors
        ],
    }
    for t in scenario.targets:
        entry = {
            "id": t.id,
            "position": _vec_out(t.initial_state.position),
            "velocity": _vec_out(t.initial_state.velocity),
            "threat_level": _num(t.threat_level),
        }
        if float(np.linalg.norm(t.maneuver_accel)) > 0.0:
            entry["maneuver_accel"] = _vec_out(t.maneuver_accel)
        if t.intended_asset is not None:
            entry["intended_asset"] = t.intended_asset
        doc["targets"].append(entry)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(serialize_scenario(scenario), encoding="utf-8")


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. 'paper_baseline')."""
    p = Path(__file__).parent / "data" / f"{name}.yml"
    if not p.exists():
        available = sorted(q.stem for q in p.parent.glob("*.yml"))
        raise FileNotFoundError(f"no bundled scenario {name!r}; available: {available}")
    return p


def initial_interceptor_states(scenario: Scenario) -> dict[int, AgentState]:
    """Fresh id -> AgentState map for mission start (deep copies)."""
    return {i.id: i.initial_state.copy() for i in scenario.interceptors}


def initial_target_states(scenario: Scenario) -> dict[int, AgentState]:
    return {t.id: t.initial_state.copy() for t in scenario.targets}
