"""Affordance-state extraction and normalization.

The 20-entry state holds, per neighbor slot, the nearest in-lane vehicle's
relative longitudinal distance (their x minus ego x, so rear neighbors are
negative), relative longitudinal velocity, and an occupancy flag; empty slots
carry the sentinel (+/-d_sense, 0, 0). Entries 18 and 19 are ego longitudinal
velocity and lateral position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import (
    FRONT_SLOTS,
    IDX_EGO_VX,
    IDX_EGO_Y,
    N_AFFORDANCES,
    EpisodeState,
    slot_base,
)


def extract_affordances(ep: EpisodeState, d_sense: float, lane_width: float) -> np.ndarray:
    """Raw-unit affordance vector of the episode state, ego-centric."""
    ego = ep.ego
    ego_lane = min(max(int(ego.y // lane_width), 0), 2)
    nearest: list[tuple[float, float] | None] = [None] * 6
    for t in ep.traffic:
        dx = t.x - ego.x
        if dx > d_sense or dx < -d_sense:
            continue
        lane = min(max(int(t.y // lane_width), 0), 2)
        dl = lane - ego_lane
        if dl > 1 or dl < -1:
            continue
        col = 1 - dl  # left lane (+1) -> column 0, center -> 1, right -> 2
        slot = col if dx >= 0.0 else 3 + col
        cur = nearest[slot]
        if cur is None or abs(dx) < abs(cur[0]):
            nearest[slot] = (dx, t.v_x - ego.v_x)
    aff = np.empty(N_AFFORDANCES, dtype=np.float64)
    for slot in range(6):
        base = slot_base(slot)
        hit = nearest[slot]
        if hit is None:
            aff[base] = d_sense if slot in FRONT_SLOTS else -d_sense
            aff[base + 1] = 0.0
            aff[base + 2] = 0.0
        else:
            aff[base] = hit[0]
            aff[base + 1] = hit[1]
            aff[base + 2] = 1.0
    aff[IDX_EGO_VX] = ego.v_x
    aff[IDX_EGO_Y] = ego.y
    return aff


@dataclass(frozen=True)
class AffordanceScale:
    """Unit scales that map raw affordances onto roughly [-1, 1] network inputs."""

    d_sense: float
    v_max: float
    road_width: float

    def normalize(self, aff: np.ndarray) -> np.ndarray:
        out = np.array(aff, dtype=np.float64, copy=True)
        if out.ndim == 1:
            out = out[None, :]
            squeeze = True
        else:
            squeeze = False
        out[..., 0:18:3] /= self.d_sense
        out[..., 1:18:3] /= self.v_max
        out[..., IDX_EGO_VX] /= self.v_max
        out[..., IDX_EGO_Y] /= self.road_width
        return out[0] if squeeze else out

    def denormalize(self, aff: np.ndarray) -> np.ndarray:
        out = np.array(aff, dtype=np.float64, copy=True)
        out[..., 0:18:3] *= self.d_sense
        out[..., 1:18:3] *= self.v_max
        out[..., IDX_EGO_VX] *= self.v_max
        out[..., IDX_EGO_Y] *= self.road_width
        return out

    def to_dict(self) -> dict:
        return {"d_sense": self.d_sense, "v_max": self.v_max, "road_width": self.road_width}

    @classmethod
    def from_dict(cls, d: dict) -> "AffordanceScale":
        return cls(float(d["d_sense"]), float(d["v_max"]), float(d["road_width"]))
