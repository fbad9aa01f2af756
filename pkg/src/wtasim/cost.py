"""Surrogate assignment costs.

Builds the pairwise cost matrix consumed by the assignment solvers:
c[i, k] = w_d * distance + w_v * relative speed + w_theta * threat term
+ w_psi * asset-relevance term. Metrics are optionally min-max normalized
first, and a hysteresis penalty can be added to every off-previous entry to
discourage churn between epochs.

Threat and relevance enter with positive weights, so a literal reading makes
high-threat targets more expensive and repels interceptors. The
``threat_sense`` switch (default "inverted") replaces both terms with their
complement so that high threat attracts interceptors instead; "literal"
keeps the terms as written.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .geometry import SceneSnapshot
from .scenario import CostWeights

__all__ = [
    "CostMatrix",
    "CostConfig",
    "normalize_metrics",
    "surrogate_cost_matrix",
    "apply_switch_penalty",
    "build_cost_matrix",
]

THREAT_SENSES = ("literal", "inverted")


@dataclass
class CostMatrix:
    """Nonnegative pairwise costs with the id bookkeeping of their snapshot."""

    values: np.ndarray
    interceptor_ids: list[int]
    target_ids: list[int]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {self.values.shape}")
        if self.values.shape != (len(self.interceptor_ids), len(self.target_ids)):
            raise ValueError("cost matrix shape does not match id lists")
        if not np.isfinite(self.values).all():
            raise ValueError("cost matrix entries must be finite")
        if (self.values < 0).any():
            raise ValueError("cost matrix entries must be nonnegative")


@dataclass
class CostConfig:
    """Settings of the cost pipeline shared by every assigner route."""

    weights: CostWeights = field(default_factory=CostWeights)
    normalize: bool = True
    threat_sense: str = "inverted"
    switch_penalty: float = 0.0

    def __post_init__(self) -> None:
        if self.threat_sense not in THREAT_SENSES:
            raise ValueError(f"threat_sense must be one of {THREAT_SENSES}, got {self.threat_sense!r}")
        if self.switch_penalty < 0.0:
            raise ValueError(f"switch_penalty must be nonnegative, got {self.switch_penalty}")


def _rescale(a: np.ndarray) -> np.ndarray:
    """Linear min-max rescale to [0, 1] over finite entries.

    Constant metrics collapse to 0; +inf sentinels are preserved.
    """
    out = np.asarray(a, dtype=float).copy()
    finite = np.isfinite(out)
    if not finite.any():
        return out
    lo = out[finite].min()
    hi = out[finite].max()
    span = hi - lo
    if span <= 0.0:
        out[finite] = 0.0
        return out
    out[finite] = (out[finite] - lo) / span
    return out


def normalize_metrics(snapshot: SceneSnapshot) -> SceneSnapshot:
    """Return a snapshot with each metric min-max rescaled to [0, 1].

    Rescaling is per metric across its whole matrix or vector, so relative
    ordering within a metric is preserved while units drop out. Idempotent:
    a normalized snapshot maps to itself.
    """
    return dataclasses.replace(
        snapshot,
        distance=_rescale(snapshot.distance),
        closing=_rescale(snapshot.closing),
        relative_speed=_rescale(snapshot.relative_speed),
        time_to_asset=_rescale(snapshot.time_to_asset),
        threat_level=_rescale(snapshot.threat_level),
        asset_relevance=_rescale(snapshot.asset_relevance),
    )


def surrogate_cost_matrix(
    snapshot: SceneSnapshot,
    weights: CostWeights,
    threat_sense: str = "inverted",
) -> CostMatrix:
    """Weighted pairwise cost of engaging target k with interceptor i.

    Args:
        snapshot: scene metrics (raw or normalized).
        weights: positive term weights.
        threat_sense: "literal" charges the threat and relevance terms as
            written; "inverted" charges their complement so urgent targets
            become cheap.
    """
    if threat_sense not in THREAT_SENSES:
        raise ValueError(f"threat_sense must be one of {THREAT_SENSES}, got {threat_sense!r}")
    theta = snapshot.threat_level
    psi = snapshot.asset_relevance
    if threat_sense == "inverted":
        theta = 1.0 - theta
        psi = 1.0 - psi
    values = (
        weights.w_d * snapshot.distance
        + weights.w_v * snapshot.relative_speed
        + weights.w_theta * theta[None, :]
        + weights.w_psi * psi[None, :]
    )
    return CostMatrix(
        values=values,
        interceptor_ids=list(snapshot.interceptor_ids),
        target_ids=list(snapshot.target_ids),
    )


def apply_switch_penalty(
    cost: CostMatrix,
    previous_columns,
    penalty: float,
) -> CostMatrix:
    """Add a hysteresis penalty to every entry off the previous assignment.

    Args:
        cost: base cost matrix.
        previous_columns: per-row previous target as a 1-based column index;
            0 (or a negative value) marks rows with no usable previous
            target, which are left untouched. An Assignment-like object
            with a ``target_of`` attribute is also accepted.
        penalty: nonnegative amount added to off-previous entries.
    """
    if penalty < 0.0:
        raise ValueError(f"penalty must be nonnegative, got {penalty}")
    cols = getattr(previous_columns, "target_of", previous_columns)
    cols = np.asarray(cols, dtype=int)
    if cols.shape != (cost.values.shape[0],):
        raise ValueError(
            f"previous_columns length {cols.shape} does not match rows {cost.values.shape[0]}"
        )
    if penalty == 0.0:
        return CostMatrix(cost.values.copy(), list(cost.interceptor_ids), list(cost.target_ids))
    values = cost.values + penalty
    for i, c in enumerate(cols):
        if 1 <= c <= cost.values.shape[1]:
            values[i, c - 1] = cost.values[i, c - 1]
    return CostMatrix(values, list(cost.interceptor_ids), list(cost.target_ids))


def build_cost_matrix(snapshot: SceneSnapshot, config: CostConfig) -> CostMatrix:
    """Full cost pipeline: normalize, weight, then penalize switches.

    The previous assignment is taken from the snapshot; entries referencing
    removed targets get no penalty column (any choice for such a row is a
    forced re-target, so no alternative is privileged).
    """
    scene = normalize_metrics(snapshot) if config.normalize else snapshot
    cost = surrogate_cost_matrix(scene, config.weights, config.threat_sense)
    if config.switch_penalty > 0.0 and snapshot.previous_assignment is not None:
        prev_cols = np.zeros(snapshot.n_interceptors, dtype=int)
        for i, target_id in enumerate(snapshot.previous_assignment):
            col = snapshot.target_column(target_id)
            if col is not None:
                prev_cols[i] = col + 1
        cost = apply_switch_penalty(cost, prev_cols, config.switch_penalty)
    return cost
