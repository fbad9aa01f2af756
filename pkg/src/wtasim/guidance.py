"""Proportional navigation guidance.

Relative kinematics are taken interceptor-minus-target. The PNG command is
proportional to the line-of-sight rotation rate and the relative speed, acts
orthogonally to the instantaneous line of sight, and is saturated to the
interceptor's lateral-acceleration limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import AgentState, saturate_accel

__all__ = ["RANGE_EPSILON", "RelativeKinematics", "relative_kinematics", "png_command"]

# Below this separation (km) a pair is treated as collocated; the mission
# layer declares an intercept well before geometry degenerates to this scale.
RANGE_EPSILON = 1e-6


@dataclass(frozen=True)
class RelativeKinematics:
    """Instantaneous engagement geometry for one interceptor-target pair.

    Attributes:
        r: relative position (interceptor minus target), km.
        v: relative velocity (interceptor minus target), km/s.
        range: separation norm, km; always > RANGE_EPSILON.
        r_hat: unit line-of-sight vector.
        los_rate: line-of-sight angular rate vector, rad/s.
        closing_speed: -(r . v)/|r|, km/s; positive when closing.
    """

    r: np.ndarray
    v: np.ndarray
    range: float
    r_hat: np.ndarray
    los_rate: np.ndarray
    closing_speed: float


def relative_kinematics(interceptor: AgentState, target: AgentState) -> RelativeKinematics:
    """Compute relative geometry for a pair of agents.

    Raises ValueError for collocated pairs (range <= RANGE_EPSILON); such
    pairs must be declared intercepted upstream before guidance is queried.
    """
    r = interceptor.position - target.position
    v = interceptor.velocity - target.velocity
    rng = float(np.linalg.norm(r))
    if rng <= RANGE_EPSILON:
        raise ValueError(f"degenerate pair: range {rng:.3e} km is below {RANGE_EPSILON:.0e}")
    r_hat = r / rng
    los_rate = np.cross(r, v) / (rng * rng)
    closing = -float(np.dot(r, v)) / rng
    return RelativeKinematics(
        r=r, v=v, range=rng, r_hat=r_hat, los_rate=los_rate, closing_speed=closing
    )


def png_command(kin: RelativeKinematics, nav_constant: float, a_max: float) -> np.ndarray:
    """Proportional navigation acceleration command, saturated to a_max.

    u = N * |v| * (r_hat x los_rate). In the interceptor-minus-target
    convention used here this cross-product order is the pursuit form: a
    drifting target draws the command toward its drift, so closed-loop
    feedback drives the line-of-sight rate to zero. (The reversed order
    reads the same in the to-target convention but amplifies the rate in
    this one.) The unsaturated command is orthogonal to the line of sight
    by construction; saturation preserves direction.

    Args:
        kin: relative kinematics of the pair.
        nav_constant: navigation gain N, dimensionless, > 0.
        a_max: acceleration bound, km/s^2 (np.inf disables saturation).
    """
    if not nav_constant > 0.0:
        raise ValueError(f"nav_constant must be positive, got {nav_constant}")
    speed = float(np.linalg.norm(kin.v))
    u = nav_constant * speed * np.cross(kin.r_hat, kin.los_rate)
    return saturate_accel(u, a_max)
