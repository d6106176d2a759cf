"""Shaped reward terms: desired speed, desired lane position, safe headway.

Each term is exp(-error^2 / scale) - 1, so it lies in (-1, 0] and peaks at 0
when the target is met. The headway term only activates inside the safe
distance. A collision (actual or predicted) replaces the sum with the
configured penalty.
"""

from __future__ import annotations

import math

import numpy as np

from .types import IDX_EGO_VX, IDX_EGO_Y, RewardConfig, SLOT_FRONT_CENTER, slot_base


def reward_speed(v_ex: float, v_des: float) -> float:
    return math.exp(-((v_ex - v_des) ** 2) / 10.0) - 1.0


def reward_lane(d_ey: float, y_des: float) -> float:
    return math.exp(-((d_ey - y_des) ** 2) / 10.0) - 1.0


def reward_headway(d_lead: float, d_safe: float) -> float:
    if d_lead < d_safe:
        return math.exp(-((d_lead - d_safe) ** 2) / (10.0 * d_safe)) - 1.0
    return 0.0


def shaped_reward(aff: np.ndarray, cfg: RewardConfig) -> float:
    """Sum of the three terms, evaluated on a raw-unit affordance vector."""
    r = reward_speed(float(aff[IDX_EGO_VX]), cfg.v_des)
    r += reward_lane(float(aff[IDX_EGO_Y]), cfg.y_des)
    base = slot_base(SLOT_FRONT_CENTER)
    if aff[base + 2] == 1.0:
        r += reward_headway(float(aff[base]), cfg.d_safe)
    return r


def total_reward(aff: np.ndarray, collided: bool, cfg: RewardConfig) -> float:
    if collided:
        return cfg.r_collision
    return shaped_reward(aff, cfg)
