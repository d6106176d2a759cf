"""Episode lifecycle: seeded resets, stepping, and trace export.

A step applies the agent command, runs the traffic controllers, advances all
vehicles one dynamics step, then reports collision, the new affordance state,
and the reward evaluated on that state. Everything is a pure function of
(state, action, seed), so episodes are reproducible and independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..safety import SafetyConfig, SafetyVerdict
from .affordances import AffordanceScale, extract_affordances
from .collision import detect_collision
from .dynamics import advance_vehicle, apply_action
from .rewards import total_reward
from .traffic import traffic_policy_step
from .types import (
    ActionSpec,
    DynamicsConfig,
    EpisodeState,
    N_AFFORDANCES,
    RewardConfig,
    VehicleState,
    action_table,
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that defines the driving scenario, reward, and safety rule."""

    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    d_sense: float = 100.0
    road_length: float = 500.0
    episode_budget: int = 200
    ego_length: float = 4.0
    ego_width: float = 1.8
    traffic_length: float = 4.0
    traffic_width: float = 1.8
    traffic_speed_min: float = 20.0
    traffic_speed_max: float = 32.0
    traffic_lane_change_prob: float = 0.0
    n_vehicles_min: int = 6
    n_vehicles_max: int = 24
    actions: tuple[ActionSpec, ...] = field(default_factory=action_table)

    def __post_init__(self):
        if self.d_sense <= 0.0 or self.road_length <= 0.0:
            raise ConfigurationError("d_sense and road_length must be positive")
        if self.episode_budget <= 0:
            raise ConfigurationError("episode_budget must be positive")
        for name in ("ego_length", "ego_width", "traffic_length", "traffic_width"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"{name} must be positive")
        dyn = self.dynamics
        if not (dyn.v_min <= self.traffic_speed_min <= self.traffic_speed_max <= dyn.v_max):
            raise ConfigurationError(
                "traffic speed band must satisfy v_min <= lo <= hi <= v_max"
            )
        if not dyn.v_min <= self.reward.v_des <= dyn.v_max:
            raise ConfigurationError("v_des must lie within [v_min, v_max]")
        if not 0.0 <= self.traffic_lane_change_prob <= 1.0:
            raise ConfigurationError("traffic_lane_change_prob must be in [0, 1]")
        if not 0 <= self.n_vehicles_min <= self.n_vehicles_max:
            raise ConfigurationError("need 0 <= n_vehicles_min <= n_vehicles_max")
        longest = max(self.ego_length, self.traffic_length)
        if self.safety.d_min < longest:
            raise ConfigurationError(
                f"safety d_min ({self.safety.d_min}) must be >= the longest vehicle "
                f"({longest}) so overlapping states always fail the gap rule"
            )

    @property
    def scale(self) -> AffordanceScale:
        return AffordanceScale(self.d_sense, self.dynamics.v_max, self.dynamics.road_width)


def reset_episode(n_vehicles: int, seed: int, scenario: ScenarioConfig) -> EpisodeState:
    """Place ego on the center lane at desired speed and traffic at random.

    Traffic gets random lanes, longitudinal gaps of at least d_safe within a
    lane, and random initial/target speeds inside the configured band.
    """
    if n_vehicles < 0:
        raise ConfigurationError("n_vehicles must be >= 0")
    dyn = scenario.dynamics
    rng = np.random.default_rng(seed)
    ego = VehicleState(
        x=0.0,
        y=dyn.lane_center(1),
        v_x=scenario.reward.v_des,
        length=scenario.ego_length,
        width=scenario.ego_width,
    )
    min_gap = max(scenario.reward.d_safe, scenario.traffic_length + scenario.ego_length)
    half = scenario.road_length / 2.0
    placed: list[tuple[int, float]] = [(1, 0.0)]  # ego occupies lane 1 at x=0
    traffic: list[VehicleState] = []
    speeds: list[float] = []
    targets: list[float] = []
    attempts_left = 100 * n_vehicles + 100
    for _ in range(n_vehicles):
        while True:
            attempts_left -= 1
            if attempts_left < 0:
                raise ConfigurationError(
                    f"could not place {n_vehicles} vehicles on a {scenario.road_length} m "
                    f"segment with {min_gap} m gaps"
                )
            lane = int(rng.integers(0, 3))
            x = float(rng.uniform(-half, half))
            if all(l != lane or abs(x - px) >= min_gap for l, px in placed):
                break
        placed.append((lane, x))
        traffic.append(
            VehicleState(
                x=x,
                y=dyn.lane_center(lane),
                v_x=float(rng.uniform(scenario.traffic_speed_min, scenario.traffic_speed_max)),
                length=scenario.traffic_length,
                width=scenario.traffic_width,
            )
        )
        targets.append(float(rng.uniform(scenario.traffic_speed_min, scenario.traffic_speed_max)))
    return EpisodeState(
        ego=ego,
        traffic=tuple(traffic),
        traffic_targets=tuple(targets),
        step=0,
        seed=seed,
    )


@dataclass(frozen=True)
class StepResult:
    state: EpisodeState
    affordances: np.ndarray  # raw units, of the new state
    reward: float
    collided: bool


class HighwayEnv:
    """Three-lane highway wrapper binding a scenario to reset/step/observe."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self.actions = scenario.actions

    @property
    def scale(self) -> AffordanceScale:
        return self.scenario.scale

    def reset(self, n_vehicles: int, seed: int) -> EpisodeState:
        return reset_episode(n_vehicles, seed, self.scenario)

    def affordances(self, ep: EpisodeState) -> np.ndarray:
        return extract_affordances(ep, self.scenario.d_sense, self.scenario.dynamics.lane_width)

    def step(self, ep: EpisodeState, action: ActionSpec) -> StepResult:
        scn = self.scenario
        dyn = scn.dynamics
        ep = apply_action(ep, action, dyn)
        ep = traffic_policy_step(ep, dyn, scn.safety, scn.d_sense, scn.traffic_lane_change_prob)
        ego, ego_m = advance_vehicle(ep.ego, ep.ego_maneuver, dyn)
        traffic = []
        maneuvers = []
        for v, m in zip(ep.traffic, ep.traffic_maneuvers):
            nv, nm = advance_vehicle(v, m, dyn)
            traffic.append(nv)
            maneuvers.append(nm)
        nxt = EpisodeState(
            ego=ego,
            traffic=tuple(traffic),
            traffic_targets=ep.traffic_targets,
            step=ep.step + 1,
            seed=ep.seed,
            ego_maneuver=ego_m,
            traffic_maneuvers=tuple(maneuvers),
        )
        collided = detect_collision(nxt)
        aff = self.affordances(nxt)
        reward = total_reward(aff, collided, scn.reward)
        return StepResult(nxt, aff, reward, collided)


TRACE_HEADER = (
    ["step", "ego_x", "ego_y", "ego_vx", "action_id", "reward", "collision"]
    + [f"a{i:02d}" for i in range(N_AFFORDANCES)]
    + ["safe", "violating_mode", "violating_step"]
)


class TraceRecorder:
    """Collects one row per step and writes the episode trace CSV."""

    def __init__(self):
        self.rows: list[list] = []

    def record(
        self,
        ep: EpisodeState,
        action_id: int,
        reward: float,
        collided: bool,
        aff: np.ndarray,
        verdict: SafetyVerdict | None = None,
    ) -> None:
        row = [ep.step, ep.ego.x, ep.ego.y, ep.ego.v_x, action_id, reward, int(collided)]
        row.extend(float(v) for v in aff)
        if verdict is None:
            row.extend(["", "", ""])
        else:
            row.append(int(verdict.safe))
            row.append("" if verdict.violating_mode is None else verdict.violating_mode)
            row.append("" if verdict.violating_horizon_step is None else verdict.violating_horizon_step)
        self.rows.append(row)

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            writer.writerows(self.rows)
