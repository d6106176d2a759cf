import math

import numpy as np
import pytest

from highway_rl.errors import ConfigurationError
from highway_rl.sim import RewardConfig, reward_headway, reward_lane, reward_speed, total_reward
from highway_rl.sim.rewards import shaped_reward
from highway_rl.sim.types import IDX_EGO_VX, IDX_EGO_Y

E_INV_MINUS_1 = math.exp(-1.0) - 1.0


def make_aff(v_ex=30.0, y=5.25, d_lead=None, lead_rel_v=0.0):
    aff = np.zeros(20)
    aff[0], aff[6], aff[9], aff[12], aff[15] = 100.0, 100.0, -100.0, -100.0, -100.0
    if d_lead is None:
        aff[3] = 100.0
    else:
        aff[3], aff[4], aff[5] = d_lead, lead_rel_v, 1.0
    aff[IDX_EGO_VX] = v_ex
    aff[IDX_EGO_Y] = y
    return aff


class TestRewardTerms:
    def test_speed_at_target(self):
        assert reward_speed(30.0, 30.0) == 0.0

    def test_speed_hand_value(self):
        assert reward_speed(30.0 + math.sqrt(10.0), 30.0) == pytest.approx(E_INV_MINUS_1, abs=1e-12)

    def test_lane_hand_value(self):
        assert reward_lane(5.25, 5.25) == 0.0
        assert reward_lane(5.25 + math.sqrt(10.0), 5.25) == pytest.approx(E_INV_MINUS_1, abs=1e-12)

    def test_headway_hand_value(self):
        assert reward_headway(20.0, 40.0) == pytest.approx(E_INV_MINUS_1, abs=1e-12)

    def test_headway_boundary(self):
        assert reward_headway(40.0, 40.0) == 0.0
        assert reward_headway(41.0, 40.0) == 0.0

    def test_terms_in_open_unit_interval(self):
        # mathematically each term is > -1; float64 rounds onto -1.0 once the
        # exponential underflows past 2^-53, so strictness is only checkable
        # for moderate errors
        rng = np.random.default_rng(0)
        for _ in range(500):
            rv = reward_speed(float(rng.uniform(0, 40)), 30.0)
            ry = reward_lane(float(rng.uniform(0, 10.5)), 5.25)
            rx = reward_headway(float(rng.uniform(0, 80)), 40.0)
            for r in (rv, ry, rx):
                assert -1.0 <= r <= 0.0
        for err in rng.uniform(0.0, 10.0, size=200):
            assert -1.0 < reward_speed(30.0 + float(err), 30.0) <= 0.0

    def test_speed_strictly_decreasing_in_error(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            e1, e2 = sorted(rng.uniform(0.0, 15.0, size=2))
            if e1 == e2:
                continue
            assert reward_speed(30.0 + e2, 30.0) < reward_speed(30.0 + e1, 30.0)


class TestTotalReward:
    CFG = RewardConfig()

    def test_collision_penalty(self):
        assert total_reward(make_aff(), True, self.CFG) == -10.0

    def test_all_targets_met(self):
        assert total_reward(make_aff(v_ex=30.0, y=5.25, d_lead=60.0), False, self.CFG) == 0.0

    def test_shaped_total_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            aff = make_aff(
                v_ex=float(rng.uniform(0, 40)),
                y=float(rng.uniform(0, 10.5)),
                d_lead=float(rng.uniform(1, 100)),
            )
            r = shaped_reward(aff, self.CFG)
            assert -3.0 < r <= 0.0

    def test_headway_only_counts_occupied_slot(self):
        near = total_reward(make_aff(d_lead=10.0), False, self.CFG)
        empty = total_reward(make_aff(d_lead=None), False, self.CFG)
        assert near < empty == 0.0

    def test_collision_penalty_must_dominate(self):
        with pytest.raises(ConfigurationError):
            RewardConfig(r_collision=-2.0)
