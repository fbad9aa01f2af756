"""Point-mass agent kinematics with bounded acceleration.

Interceptors and targets are modeled as double integrators in a shared
Cartesian frame (km, km/s, km/s^2). Acceleration commands are held constant
over each integration step, and propagation uses classical fourth-order
Runge-Kutta, which reproduces the zero-order-hold closed form exactly
(to rounding) for linear dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["AgentState", "saturate_accel", "step_state"]


def _as_vec3(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} must be finite, got {v}")
    return v


@dataclass
class AgentState:
    """Position and velocity of one agent.

    Attributes:
        position: Cartesian position, km.
        velocity: Cartesian velocity, km/s.
    """

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self) -> None:
        self.position = _as_vec3(self.position, "position")
        self.velocity = _as_vec3(self.velocity, "velocity")

    def copy(self) -> AgentState:
        return AgentState(self.position.copy(), self.velocity.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AgentState):
            return NotImplemented
        return bool(
            np.array_equal(self.position, other.position)
            and np.array_equal(self.velocity, other.velocity)
        )


def saturate_accel(u: np.ndarray, a_max: float) -> np.ndarray:
    """Clip an acceleration command to the ball of radius a_max.

    Direction is preserved; only the magnitude is scaled down when it
    exceeds the bound.
    """
    if not a_max > 0.0:
        raise ValueError(f"a_max must be positive, got {a_max}")
    u = _as_vec3(u, "u")
    mag = float(np.linalg.norm(u))
    if mag <= a_max:
        return u.copy()
    return u * (a_max / mag)


def step_state(state: AgentState, u: np.ndarray, dt: float) -> AgentState:
    """Advance an agent by dt under a constant acceleration u.

    Classical RK4 on the double integrator. With u held constant this is
    exact: p' = p + v*dt + u*dt^2/2 and v' = v + u*dt up to rounding.

    Args:
        state: current agent state.
        u: acceleration command held over the step, km/s^2.
        dt: step length, s; must be positive.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = _as_vec3(u, "u")

    def deriv(y: np.ndarray) -> np.ndarray:
        out = np.empty(6)
        out[:3] = y[3:]
        out[3:] = u
        return out

    y0 = np.concatenate((state.position, state.velocity))
    k1 = deriv(y0)
    k2 = deriv(y0 + 0.5 * dt * k1)
    k3 = deriv(y0 + 0.5 * dt * k2)
    k4 = deriv(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return AgentState(y1[:3], y1[3:])
