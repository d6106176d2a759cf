"""Externally controlled traffic: target-speed tracking with gap-rule braking.

Each traffic vehicle tracks the random target speed assigned to it at reset,
brakes when its own gap rule against its leader fails, and (optionally, off by
default) starts a random lane change. Per-step randomness is derived from
(episode seed, step), keeping stepping a pure function of the state.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..safety import SafetyConfig, heuristic_check
from .dynamics import start_lane_change
from .types import DynamicsConfig, EpisodeState, Lateral, VehicleState


def _leader(
    me: VehicleState, idx: int, ep: EpisodeState, lane_width: float, d_sense: float
) -> VehicleState | None:
    """Nearest vehicle ahead in my lane (ego included), within sensing range."""
    my_lane = min(max(int(me.y // lane_width), 0), 2)
    best: VehicleState | None = None
    best_dx = d_sense
    candidates = [v for j, v in enumerate(ep.traffic) if j != idx]
    candidates.append(ep.ego)
    for other in candidates:
        dx = other.x - me.x
        if dx <= 0.0 or dx > best_dx:
            continue
        if min(max(int(other.y // lane_width), 0), 2) != my_lane:
            continue
        best = other
        best_dx = dx
    return best


def traffic_policy_step(
    ep: EpisodeState,
    dyn: DynamicsConfig,
    safety: SafetyConfig,
    d_sense: float,
    lane_change_prob: float = 0.0,
) -> EpisodeState:
    """Set each traffic vehicle's acceleration (and possibly start a maneuver)."""
    if not ep.traffic:
        return ep
    draws = None
    if lane_change_prob > 0.0:
        step_rng = np.random.default_rng((ep.seed, ep.step))
        draws = step_rng.random(2 * len(ep.traffic))
    new_traffic = []
    new_maneuvers = []
    for i, v in enumerate(ep.traffic):
        leader = _leader(v, i, ep, dyn.lane_width, d_sense)
        if leader is not None and not heuristic_check(
            leader.x - v.x, v.v_x - leader.v_x, safety
        ):
            a_x = dyn.accel_brake
        else:
            # Deadbeat tracking of the target speed, limited to the command range.
            a_x = min(
                max((ep.traffic_targets[i] - v.v_x) / dyn.dt, dyn.accel_brake),
                dyn.accel_accelerate,
            )
        v = replace(v, a_x=a_x)
        maneuver = ep.traffic_maneuvers[i]
        if maneuver is None and draws is not None and draws[2 * i] < lane_change_prob:
            direction = Lateral.LEFT if draws[2 * i + 1] < 0.5 else Lateral.RIGHT
            started = start_lane_change(v, direction, dyn)
            if started is not None:
                v, maneuver = started
        new_traffic.append(v)
        new_maneuvers.append(maneuver)
    return replace(ep, traffic=tuple(new_traffic), traffic_maneuvers=tuple(new_maneuvers))
