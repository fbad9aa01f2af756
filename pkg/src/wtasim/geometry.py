"""Engagement-geometry snapshots for the assignment layer.

At each decision epoch the mission loop freezes the live agents into a
SceneSnapshot: pairwise distance / closing-speed / relative-speed matrices,
per-target time-to-asset, threat level and asset relevance, plus the previous
assignment. Removed agents are dropped; rows and columns are indexed by the
surviving agents with their original ids recorded so prompts and logs keep
stable identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import AgentState
from .guidance import RANGE_EPSILON
from .scenario import AssetSpec, Scenario, TargetSpec

__all__ = [
    "V_FLOOR",
    "SceneSnapshot",
    "associate_asset",
    "time_to_asset",
    "asset_relevance",
    "build_snapshot",
]

# Floor on the closing speed used in the time-to-asset quotient, km/s.
V_FLOOR = 1e-6


@dataclass
class SceneSnapshot:
    """Frozen decision-epoch scene over the live agents.

    Matrix rows follow ``interceptor_ids`` order, columns follow
    ``target_ids`` order; both carry original (pre-removal) ids.

    Attributes:
        epoch_index: decision epoch h (0 for the baseline).
        time: epoch start time t_h, s.
        distance: pairwise separation, km.
        closing: pairwise closing speed (positive = approaching), km/s.
        relative_speed: pairwise relative-velocity norm, km/s.
        time_to_asset: per-target time until its associated asset is
            reached, s; +inf when the target is not closing on it.
        threat_level: per-target intrinsic threat in (0, 1].
        asset_relevance: per-target priority-weighted urgency.
        asset_priority: per-asset priority, asset-id order.
        associated_asset: asset id each target is headed for.
        previous_assignment: original target id per interceptor row from
            the previous epoch (entries may reference removed targets), or
            None at the baseline epoch.
    """

    epoch_index: int
    time: float
    interceptor_ids: list[int]
    target_ids: list[int]
    distance: np.ndarray
    closing: np.ndarray
    relative_speed: np.ndarray
    time_to_asset: np.ndarray
    threat_level: np.ndarray
    asset_relevance: np.ndarray
    asset_priority: np.ndarray
    associated_asset: list[int] = field(default_factory=list)
    previous_assignment: list[int] | None = None

    @property
    def n_interceptors(self) -> int:
        return len(self.interceptor_ids)

    @property
    def n_targets(self) -> int:
        return len(self.target_ids)

    def target_column(self, target_id: int) -> int | None:
        """Column index of an original target id, or None if removed."""
        try:
            return self.target_ids.index(target_id)
        except ValueError:
            return None


def associate_asset(
    target: TargetSpec, state: AgentState, assets: list[AssetSpec]
) -> AssetSpec:
    """Pick the asset a target is headed for.

    An explicit intended_asset wins. Otherwise the asset nearest to the
    target's straight-line velocity ray is chosen (ties: smaller miss
    distance, then smaller id). A stationary target is associated with the
    nearest asset.
    """
    if not assets:
        raise ValueError("no assets to associate")
    if target.intended_asset is not None:
        for a in assets:
            if a.id == target.intended_asset:
                return a
        raise ValueError(f"target {target.id}: intended asset {target.intended_asset} not found")

    speed = float(np.linalg.norm(state.velocity))
    best: tuple[float, int] | None = None
    best_asset = assets[0]
    for a in sorted(assets, key=lambda a: a.id):
        offset = a.position - state.position
        if speed < V_FLOOR:
            miss = float(np.linalg.norm(offset))
        else:
            v_hat = state.velocity / speed
            along = max(0.0, float(np.dot(offset, v_hat)))
            miss = float(np.linalg.norm(offset - along * v_hat))
        key = (miss, a.id)
        if best is None or key < best:
            best = key
            best_asset = a
    return best_asset


def time_to_asset(state: AgentState, asset: AssetSpec) -> float:
    """Seconds until the target reaches the asset at current closing speed.

    Returns +inf when the target is not closing on the asset.
    """
    r = state.position - asset.position
    dist = float(np.linalg.norm(r))
    if dist <= RANGE_EPSILON:
        return 0.0
    closing = -float(np.dot(r, state.velocity)) / dist
    if closing <= 0.0:
        return math.inf
    return dist / max(closing, V_FLOOR)


def asset_relevance(priority: float, tau: float, tau_ref: float) -> float:
    """Priority-weighted urgency: priority * tau_ref / (tau + tau_ref).

    Decays toward 0 as the threat is farther out in time; a +inf tau maps
    exactly to 0.
    """
    if not tau_ref > 0.0:
        raise ValueError(f"tau_ref must be positive, got {tau_ref}")
    if math.isinf(tau):
        return 0.0
    return priority * tau_ref / (tau + tau_ref)


def build_snapshot(
    scenario: Scenario,
    interceptor_states: dict[int, AgentState],
    target_states: dict[int, AgentState],
    epoch_index: int,
    time: float,
    previous_assignment: dict[int, int] | None = None,
) -> SceneSnapshot:
    """Assemble the decision-epoch snapshot over live agents.

    Args:
        interceptor_states / target_states: live agents keyed by original
            id; insertion order is ignored, ids are sorted ascending.
        previous_assignment: original interceptor id -> original target id
            from the previous epoch (may reference removed targets), or
            None at the baseline epoch.
    """
    i_ids = sorted(interceptor_states)
    t_ids = sorted(target_states)
    if not i_ids or not t_ids:
        raise ValueError("snapshot requires at least one live interceptor and target")

    n, nt = len(i_ids), len(t_ids)
    ip = np.stack([interceptor_states[i].position for i in i_ids])
    iv = np.stack([interceptor_states[i].velocity for i in i_ids])
    tp = np.stack([target_states[k].position for k in t_ids])
    tv = np.stack([target_states[k].velocity for k in t_ids])

    rel_p = ip[:, None, :] - tp[None, :, :]
    rel_v = iv[:, None, :] - tv[None, :, :]
    dist = np.linalg.norm(rel_p, axis=2)
    rel_speed = np.linalg.norm(rel_v, axis=2)
    # Guarded closing speed; collocated pairs are removed upstream long
    # before the separation reaches RANGE_EPSILON.
    closing = -np.sum(rel_p * rel_v, axis=2) / np.maximum(dist, RANGE_EPSILON)

    specs = {t.id: t for t in scenario.targets}
    assoc: list[int] = []
    tau = np.empty(nt)
    threat = np.empty(nt)
    psi = np.empty(nt)
    for j, k in enumerate(t_ids):
        spec = specs[k]
        state = target_states[k]
        asset = associate_asset(spec, state, scenario.assets)
        assoc.append(asset.id)
        tau[j] = time_to_asset(state, asset)
        threat[j] = spec.threat_level
        psi[j] = asset_relevance(asset.priority, tau[j], scenario.tau_ref)

    prev = None
    if previous_assignment is not None:
        prev = [previous_assignment.get(i, 0) for i in i_ids]

    return SceneSnapshot(
        epoch_index=epoch_index,
        time=time,
        interceptor_ids=i_ids,
        target_ids=t_ids,
        distance=dist,
        closing=closing,
        relative_speed=rel_speed,
        time_to_asset=tau,
        threat_level=threat,
        asset_relevance=psi,
        asset_priority=np.array([a.priority for a in sorted(scenario.assets, key=lambda a: a.id)]),
        associated_asset=assoc,
        previous_assignment=prev,
    )
