"""Shared fixtures and small scene factories for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from wtasim.dynamics import AgentState
from wtasim.geometry import build_snapshot
from wtasim.scenario import (
    AssetSpec,
    CostWeights,
    InterceptorSpec,
    Scenario,
    TargetSpec,
    bundled_scenario_path,
    load_scenario,
    validate_scenario,
)


def make_scenario(
    n_interceptors: int = 2,
    n_targets: int = 2,
    *,
    spread_km: float = 40.0,
    target_range_km: float = 90.0,
    interceptor_speed: float = 2.0,
    target_speed: float = 1.0,
    t_final: float = 120.0,
    epoch_dt: float = 2.0,
    coverage: str = "auto",
    a_max: float = 0.2,
) -> Scenario:
    """Planar engagement: targets inbound toward one asset at the origin,
    interceptors screening outward at matching bearings."""
    assets = [AssetSpec(1, np.array([0.0, 0.0, 0.0]), 0.9, 5.0)]
    targets = []
    for k in range(1, n_targets + 1):
        ang = 2.0 * np.pi * (k - 1) / max(n_targets, 1)
        p = target_range_km * np.array([np.cos(ang), np.sin(ang), 0.0])
        v = -target_speed * p / np.linalg.norm(p)
        targets.append(
            TargetSpec(k, AgentState(p, v), threat_level=0.5 + 0.4 * (k % 2), intended_asset=1)
        )
    interceptors = []
    for i in range(1, n_interceptors + 1):
        ang = 2.0 * np.pi * (i - 1) / max(n_targets, 1)
        p = spread_km * np.array([np.cos(ang), np.sin(ang), 0.0])
        v = interceptor_speed * np.array([np.cos(ang), np.sin(ang), 0.0])
        interceptors.append(InterceptorSpec(i, AgentState(p, v)))
    scn = Scenario(
        interceptors=interceptors,
        targets=targets,
        assets=assets,
        a_max=a_max,
        x_max=500.0,
        sim_dt=0.1,
        epoch_dt=epoch_dt,
        t_final=t_final,
        kill_radius=0.15,
        cost_weights=CostWeights(w_d=3.0, w_v=0.3, w_theta=0.5, w_psi=0.5),
        tau_ref=60.0,
        coverage=coverage,
        name="test_scene",
    )
    assert validate_scenario(scn) == []
    return scn


def snapshot_of(scenario: Scenario, epoch: int = 0, time: float = 0.0, prev=None):
    return build_snapshot(
        scenario,
        {i.id: i.initial_state.copy() for i in scenario.interceptors},
        {t.id: t.initial_state.copy() for t in scenario.targets},
        epoch,
        time,
        previous_assignment=prev,
    )


@pytest.fixture(scope="session")
def baseline_scenario():
    return load_scenario(bundled_scenario_path("paper_baseline"))
