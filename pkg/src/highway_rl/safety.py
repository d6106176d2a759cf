"""Safety checks: the heuristic minimum-gap rule and the predictive lookahead.

The gap rule requires distance minus reaction-time-scaled closing speed to
strictly exceed a minimum gap. It is applied to every occupied neighbor slot
of a state (with the closing-speed sign resolved per slot direction), and to
every state of every predicted trajectory for the lookahead verdict.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .sim.types import FRONT_SLOTS, slot_base


@dataclass(frozen=True)
class SafetyConfig:
    """Minimum time-to-collision and minimum gap for the heuristic rule."""

    t_min: float = 2.0
    d_min: float = 10.0
    mask_unsafe_actions: bool = False

    def __post_init__(self):
        if self.t_min < 0.0:
            raise ConfigurationError("t_min must be >= 0")
        if self.d_min <= 0.0:
            raise ConfigurationError("d_min must be positive")


@dataclass(frozen=True)
class SafetyVerdict:
    """Outcome of a safety check, with the earliest violation located."""

    safe: bool
    violating_slot: int | None = None
    violating_horizon_step: int | None = None
    violating_mode: int | None = None

    def __post_init__(self):
        if self.safe and (
            self.violating_slot is not None
            or self.violating_horizon_step is not None
            or self.violating_mode is not None
        ):
            raise ConfigurationError("a safe verdict cannot carry violation details")


SAFE = SafetyVerdict(True)

# Predicted occupancy flags are continuous model outputs; treat a slot as
# occupied from 0.5 upward.
OCCUPANCY_THRESHOLD = 0.5


def heuristic_check(d_tv: float, v_tv: float, cfg: SafetyConfig) -> bool:
    """Gap rule: distance - t_min * closing speed must strictly exceed d_min.

    d_tv is the gap magnitude; v_tv is signed with positive meaning closing.
    """
    return d_tv - cfg.t_min * v_tv > cfg.d_min


def state_safety(aff: np.ndarray, cfg: SafetyConfig) -> SafetyVerdict:
    """Apply the gap rule to every occupied neighbor slot of one state.

    Closing speed is clamped at zero: a receding neighbor must not excuse a
    gap below d_min, which also guarantees that any state already in
    geometric collision fails the rule whenever d_min covers a car length.
    """
    for slot in range(6):
        base = slot_base(slot)
        if aff[base + 2] < OCCUPANCY_THRESHOLD:
            continue
        distance = float(aff[base])
        rel_v = float(aff[base + 1])
        # Front slots close when ego is faster (rel_v < 0); rear slots close
        # when the neighbor is faster (rel_v > 0).
        closing = -rel_v if slot in FRONT_SLOTS else rel_v
        if not heuristic_check(abs(distance), max(closing, 0.0), cfg):
            return SafetyVerdict(False, violating_slot=slot)
    return SAFE


def predictive_check(trajectories, cfg: SafetyConfig) -> SafetyVerdict:
    """Check every predicted state of every mode; report the earliest violation.

    Earliest means the smallest horizon step, ties broken by the lowest mode
    index. Trajectories are raw-unit affordance states shaped (modes, k, 20).
    """
    modes = np.asarray(trajectories.modes, dtype=np.float64)
    n_modes, horizon, _ = modes.shape
    for step in range(horizon):
        for mode in range(n_modes):
            verdict = state_safety(modes[mode, step], cfg)
            if not verdict.safe:
                return SafetyVerdict(
                    False,
                    violating_slot=verdict.violating_slot,
                    violating_horizon_step=step,
                    violating_mode=mode,
                )
    return SAFE
