"""Point-mass vehicle dynamics and action application.

Longitudinal motion is a discrete-time double integrator (position advances
with the pre-update velocity), lateral motion simple kinematics. Lane changes
hold a constant lateral velocity and snap exactly onto the target lane center
on their final step.
"""

from __future__ import annotations

from dataclasses import replace

from .types import (
    N_LANES,
    ActionSpec,
    DynamicsConfig,
    EpisodeState,
    LaneChange,
    Lateral,
    VehicleState,
)


def step_dynamics(v: VehicleState, cfg: DynamicsConfig) -> VehicleState:
    """One explicit-Euler step: x += v_x*dt, v_x += a_x*dt (clamped), y += v_y*dt."""
    return replace(
        v,
        x=v.x + v.v_x * cfg.dt,
        v_x=min(max(v.v_x + v.a_x * cfg.dt, cfg.v_min), cfg.v_max),
        y=v.y + v.v_y * cfg.dt,
    )


def start_lane_change(
    v: VehicleState, direction: Lateral, cfg: DynamicsConfig
) -> tuple[VehicleState, LaneChange] | None:
    """Begin a lane change, or None when the target lane does not exist."""
    lane = cfg.lane_of(v.y)
    target_lane = lane + 1 if direction is Lateral.LEFT else lane - 1
    if not 0 <= target_lane < N_LANES:
        return None
    target_y = cfg.lane_center(target_lane)
    v_y = (target_y - v.y) / cfg.lane_change_duration
    return replace(v, v_y=v_y), LaneChange(target_y, cfg.lane_change_steps)


def apply_action(ep: EpisodeState, action: ActionSpec, cfg: DynamicsConfig) -> EpisodeState:
    """Set ego's commanded acceleration and, if legal, begin a lane change.

    Lateral commands are ignored (degrade to keep) while a change is already
    in progress or when the target lane would leave the road.
    """
    ego = replace(ep.ego, a_x=cfg.accel_for(action.longitudinal))
    maneuver = ep.ego_maneuver
    if action.lateral is not Lateral.KEEP and maneuver is None:
        started = start_lane_change(ego, action.lateral, cfg)
        if started is not None:
            ego, maneuver = started
    return replace(ep, ego=ego, ego_maneuver=maneuver)


def advance_vehicle(
    v: VehicleState, maneuver: LaneChange | None, cfg: DynamicsConfig
) -> tuple[VehicleState, LaneChange | None]:
    """Step one vehicle, finishing its lane change exactly on the lane center."""
    nv = step_dynamics(v, cfg)
    if maneuver is None:
        return nv, None
    left = maneuver.steps_left - 1
    if left <= 0:
        return replace(nv, y=maneuver.target_y, v_y=0.0), None
    return nv, LaneChange(maneuver.target_y, left)
