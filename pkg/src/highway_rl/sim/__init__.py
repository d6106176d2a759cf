"""Deterministic three-lane highway environment."""

from .types import (
    DEFAULT_ACTION_LAYOUT,
    FRONT_SLOTS,
    IDX_EGO_VX,
    IDX_EGO_Y,
    N_AFFORDANCES,
    N_LANES,
    REAR_SLOTS,
    SLOT_FRONT_CENTER,
    SLOT_NAMES,
    ActionSpec,
    DynamicsConfig,
    EpisodeState,
    LaneChange,
    Lateral,
    Longitudinal,
    RewardConfig,
    VehicleState,
    action_table,
    slot_base,
)
from .affordances import AffordanceScale, extract_affordances
from .collision import detect_collision, rectangles_overlap
from .dynamics import advance_vehicle, apply_action, start_lane_change, step_dynamics
from .rewards import reward_headway, reward_lane, reward_speed, shaped_reward, total_reward
from .traffic import traffic_policy_step
from .env import (
    HighwayEnv,
    ScenarioConfig,
    StepResult,
    TRACE_HEADER,
    TraceRecorder,
    reset_episode,
)

__all__ = [
    "ActionSpec",
    "AffordanceScale",
    "DEFAULT_ACTION_LAYOUT",
    "DynamicsConfig",
    "EpisodeState",
    "FRONT_SLOTS",
    "HighwayEnv",
    "IDX_EGO_VX",
    "IDX_EGO_Y",
    "LaneChange",
    "Lateral",
    "Longitudinal",
    "N_AFFORDANCES",
    "N_LANES",
    "REAR_SLOTS",
    "RewardConfig",
    "ScenarioConfig",
    "SLOT_FRONT_CENTER",
    "SLOT_NAMES",
    "StepResult",
    "TRACE_HEADER",
    "TraceRecorder",
    "VehicleState",
    "action_table",
    "advance_vehicle",
    "apply_action",
    "detect_collision",
    "extract_affordances",
    "rectangles_overlap",
    "reset_episode",
    "reward_headway",
    "reward_lane",
    "reward_speed",
    "shaped_reward",
    "slot_base",
    "start_lane_change",
    "step_dynamics",
    "total_reward",
    "traffic_policy_step",
]
