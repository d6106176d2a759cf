"""Axis-aligned rectangle collision detection.

Rectangle overlap (rather than a same-lane distance threshold) stays correct
while a vehicle is laterally between lanes mid-change.
"""

from __future__ import annotations

from .types import EpisodeState, VehicleState


def rectangles_overlap(a: VehicleState, b: VehicleState) -> bool:
    """Strict overlap of the two footprints; touching edges do not collide."""
    return (
        abs(a.x - b.x) < 0.5 * (a.length + b.length)
        and abs(a.y - b.y) < 0.5 * (a.width + b.width)
    )


def detect_collision(ep: EpisodeState) -> bool:
    ego = ep.ego
    return any(rectangles_overlap(ego, t) for t in ep.traffic)
