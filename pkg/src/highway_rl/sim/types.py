"""Core value types for the three-lane highway simulation.

The affordance state layout is fixed here: six neighbor slots in canonical
order (front-left, front-center, front-right, rear-left, rear-center,
rear-right), each contributing (relative longitudinal distance, relative
longitudinal velocity, occupancy flag), followed by ego longitudinal velocity
and ego lateral position. Lateral position y increases toward the left lane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from ..errors import ConfigurationError

N_LANES = 3

SLOT_NAMES = (
    "front_left",
    "front_center",
    "front_right",
    "rear_left",
    "rear_center",
    "rear_right",
)
FRONT_SLOTS = (0, 1, 2)
REAR_SLOTS = (3, 4, 5)
SLOT_FRONT_CENTER = 1
N_AFFORDANCES = 20
IDX_EGO_VX = 18
IDX_EGO_Y = 19


def slot_base(slot: int) -> int:
    """Index of a slot's (distance, velocity, occupancy) triple in the state vector."""
    return 3 * slot


class Longitudinal(str, Enum):
    MAINTAIN = "maintain"
    ACCELERATE = "accelerate"
    BRAKE = "brake"
    HARD_BRAKE = "hard_brake"


class Lateral(str, Enum):
    KEEP = "keep"
    LEFT = "change_left"
    RIGHT = "change_right"


@dataclass(frozen=True)
class ActionSpec:
    """One of the discrete command combinations available to the agent."""

    id: int
    longitudinal: Longitudinal
    lateral: Lateral


# Four longitudinal commands with lane keep, plus lane changes combined with
# maintain or brake: eight actions total.
DEFAULT_ACTION_LAYOUT: tuple[tuple[Longitudinal, Lateral], ...] = (
    (Longitudinal.MAINTAIN, Lateral.KEEP),
    (Longitudinal.ACCELERATE, Lateral.KEEP),
    (Longitudinal.BRAKE, Lateral.KEEP),
    (Longitudinal.HARD_BRAKE, Lateral.KEEP),
    (Longitudinal.MAINTAIN, Lateral.LEFT),
    (Longitudinal.BRAKE, Lateral.LEFT),
    (Longitudinal.MAINTAIN, Lateral.RIGHT),
    (Longitudinal.BRAKE, Lateral.RIGHT),
)


def action_table(layout: tuple[tuple[Longitudinal, Lateral], ...] | None = None) -> tuple[ActionSpec, ...]:
    """Build the indexed action table, defaulting to the eight-action layout."""
    pairs = DEFAULT_ACTION_LAYOUT if layout is None else layout
    if not pairs:
        raise ConfigurationError("action layout must contain at least one entry")
    return tuple(ActionSpec(i, Longitudinal(lo), Lateral(la)) for i, (lo, la) in enumerate(pairs))


@dataclass(frozen=True)
class VehicleState:
    """Pose and commanded acceleration of one car, in road coordinates."""

    x: float
    y: float
    v_x: float
    v_y: float = 0.0
    a_x: float = 0.0
    length: float = 4.0
    width: float = 1.8

    def __post_init__(self):
        if self.v_x < 0.0:
            raise ConfigurationError(f"v_x must be >= 0, got {self.v_x}")
        if self.length <= 0.0 or self.width <= 0.0:
            raise ConfigurationError("vehicle extents must be positive")


@dataclass(frozen=True)
class DynamicsConfig:
    """Sampling time, road geometry, command levels, and speed limits."""

    dt: float = 0.1
    lane_width: float = 3.5
    accel_maintain: float = 0.0
    accel_accelerate: float = 2.0
    accel_brake: float = -2.0
    accel_hard_brake: float = -4.0
    lane_change_duration: float = 1.0
    v_min: float = 0.0
    v_max: float = 40.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigurationError("dt must be positive")
        if self.lane_width <= 0.0:
            raise ConfigurationError("lane_width must be positive")
        if self.lane_change_duration <= 0.0:
            raise ConfigurationError("lane_change_duration must be positive")
        if not (self.accel_brake < 0.0 and self.accel_hard_brake < self.accel_brake):
            raise ConfigurationError(
                "brake levels must satisfy hard_brake < brake < 0 "
                f"(got {self.accel_hard_brake}, {self.accel_brake})"
            )
        if self.accel_accelerate <= 0.0:
            raise ConfigurationError("accel_accelerate must be positive")
        if not (0.0 <= self.v_min < self.v_max):
            raise ConfigurationError("need 0 <= v_min < v_max")

    def accel_for(self, command: Longitudinal) -> float:
        return {
            Longitudinal.MAINTAIN: self.accel_maintain,
            Longitudinal.ACCELERATE: self.accel_accelerate,
            Longitudinal.BRAKE: self.accel_brake,
            Longitudinal.HARD_BRAKE: self.accel_hard_brake,
        }[command]

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def lane_of(self, y: float) -> int:
        return min(max(int(y // self.lane_width), 0), N_LANES - 1)

    @property
    def road_width(self) -> float:
        return N_LANES * self.lane_width

    @property
    def lane_change_steps(self) -> int:
        return int(math.ceil(self.lane_change_duration / self.dt - 1e-12))


@dataclass(frozen=True)
class RewardConfig:
    """Targets for the shaped reward terms and the collision penalty."""

    v_des: float = 30.0
    y_des: float = 5.25
    d_safe: float = 40.0
    r_collision: float = -10.0

    def __post_init__(self):
        if self.d_safe <= 0.0:
            raise ConfigurationError("d_safe must be positive")
        if not self.r_collision < -3.0:
            raise ConfigurationError(
                "r_collision must be < -3 so it dominates the best shaped return "
                f"(got {self.r_collision})"
            )


@dataclass(frozen=True)
class LaneChange:
    """An in-progress lateral maneuver; y snaps to target on the final step."""

    target_y: float
    steps_left: int


@dataclass(frozen=True)
class EpisodeState:
    """Snapshot of one episode: ego, traffic, and maneuver bookkeeping."""

    ego: VehicleState
    traffic: tuple[VehicleState, ...]
    traffic_targets: tuple[float, ...]
    step: int
    seed: int
    ego_maneuver: LaneChange | None = None
    traffic_maneuvers: tuple[LaneChange | None, ...] = field(default=())

    def __post_init__(self):
        if len(self.traffic_maneuvers) != len(self.traffic):
            object.__setattr__(self, "traffic_maneuvers", (None,) * len(self.traffic))
        if len(self.traffic_targets) != len(self.traffic):
            raise ConfigurationError("one target speed per traffic vehicle required")
