import numpy as np
import pytest

from ringroad.core import (
    ConfigError, ControllerGains, CoordinationPlan, GainSchedule, HeadwayRamp, Mode, ModeState, PlanKind, Role,
)
from ringroad.supervisor import (
    OUT_OF_RANGE_DEBOUNCE, SwitchReason, coordination_speed_limit, designated_followers, desired_headway,
    platoon_formed_behind, select_mode, switching_threshold,
)

G = ControllerGains()


def state(mode, v_limit=29.0, **kw):
    return ModeState(mode, 0.0, v_limit, HeadwayRamp(1.5, 1.5, 0.5), GainSchedule(), **kw)


@pytest.mark.parametrize("v_e,v_l,expected", [(20, 15, 39.0), (10, 15, 19.0), (29, 29, 47.5)])
def test_switching_threshold(v_e, v_l, expected):
    assert switching_threshold(v_e, v_l, G) == pytest.approx(expected)


def test_cruise_to_following_below_threshold():
    d = select_mode(state(Mode.CRUISE), 38.0, 20.0, 15.0, True, 3.0, G)
    assert d.new_mode is Mode.FOLLOWING
    assert d.reason is SwitchReason.THRESHOLD_CROSSED
    assert d.t == 3.0


def test_cruise_stays_above_threshold_or_without_lead():
    assert select_mode(state(Mode.CRUISE), 200.0, 20.0, 15.0, True, 0.0, G) is None
    assert select_mode(state(Mode.CRUISE), 38.0, 20.0, 15.0, False, 0.0, G) is None


def test_cruise_does_not_follow_a_lead_above_its_limit():
    assert select_mode(state(Mode.CRUISE, v_limit=23.2), 10.0, 20.0, 29.0, True, 0.0, G) is None


def test_lead_exceeds_limit():
    d = select_mode(state(Mode.FOLLOWING, v_limit=0.8 * 29), 47.5, 23.0, 29.0, True, 12.0, G)
    assert d.new_mode is Mode.CRUISE
    assert d.reason is SwitchReason.LEAD_EXCEEDS_LIMIT


def test_speed_margin_absorbs_small_overshoot():
    assert select_mode(state(Mode.FOLLOWING), 47.5, 29.0, 29.2, True, 0.0, G) is None
    assert select_mode(state(Mode.FOLLOWING), 47.5, 29.0, 29.2, True, 0.0, G, speed_margin=0.0) is not None


def test_out_of_range_is_debounced():
    cur = state(Mode.FOLLOWING, out_of_range_since=5.0)
    assert select_mode(cur, 150.0, 20.0, 20.0, False, 5.0 + OUT_OF_RANGE_DEBOUNCE / 2, G) is None
    d = select_mode(cur, 150.0, 20.0, 20.0, False, 5.0 + OUT_OF_RANGE_DEBOUNCE, G)
    assert d.reason is SwitchReason.LEAD_OUT_OF_RANGE


def test_following_stays_on_spacing_growth():
    assert select_mode(state(Mode.FOLLOWING), 110.0, 20.0, 20.0, True, 0.0, G) is None


def test_latched_followers_never_leave():
    cur = state(Mode.FOLLOWING, v_limit=23.2, latched=True)
    assert select_mode(cur, 47.5, 23.0, 29.0, True, 0.0, G) is None


def test_coordination_speed_limit():
    plan = CoordinationPlan(PlanKind.M_PLATOON, (2, 4), alpha=0.8)
    assert coordination_speed_limit(plan, False, 29.0) == pytest.approx(23.2)
    assert coordination_speed_limit(plan, True, 29.0) == 29.0
    with pytest.raises(ConfigError):
        CoordinationPlan(PlanKind.M_PLATOON, (2, 4), alpha=1.0)


def test_designated_followers():
    plan = CoordinationPlan(PlanKind.M_PLATOON, (2, 4))
    assert designated_followers(plan, 4) == {2: [1], 4: [3]}
    one = CoordinationPlan(PlanKind.ONE_PLATOON, (3,))
    assert designated_followers(one, 5) == {3: [1, 2, 4, 5]}


def test_platoon_formed_behind():
    plan = CoordinationPlan(PlanKind.M_PLATOON, (2, 4))
    modes = [state(Mode.FOLLOWING), state(Mode.CRUISE), state(Mode.FOLLOWING), state(Mode.CRUISE)]
    assert platoon_formed_behind(modes, plan, 4)
    modes[2] = state(Mode.CRUISE)
    assert not platoon_formed_behind(modes, plan, 4)
    one = CoordinationPlan(PlanKind.ONE_PLATOON, (2,))
    modes = [state(Mode.FOLLOWING), state(Mode.CRUISE), state(Mode.FOLLOWING), state(Mode.FOLLOWING)]
    assert platoon_formed_behind(modes, one, 2)
    modes[3] = state(Mode.CRUISE)
    assert not platoon_formed_behind(modes, one, 2)


def _headway(plan, role, n=4):
    return desired_headway(plan, 320.0, n, 4.5, 4.0, 29.0, 1.5, role)


def test_desired_headway_symmetrical():
    plan = CoordinationPlan(PlanKind.SYMMETRICAL)
    assert _headway(plan, Role.NONE) == pytest.approx(71.5 / 29, abs=1e-4)
    assert _headway(plan, Role.NONE) == pytest.approx(2.4655, abs=1e-4)


def test_desired_headway_m_platoon():
    plan = CoordinationPlan(PlanKind.M_PLATOON, (2, 4))
    assert _headway(plan, Role.LEADER) == pytest.approx(99.5 / 29)
    assert _headway(plan, Role.LEADER) == pytest.approx(3.431, abs=1e-3)
    assert _headway(plan, Role.FOLLOWER) == 1.5


def test_one_platoon_leader_has_no_target():
    plan = CoordinationPlan(PlanKind.ONE_PLATOON, (1,))
    assert _headway(plan, Role.LEADER) is None
    assert _headway(plan, Role.FOLLOWER) == 1.5


def test_inter_platoon_distance_decreases_with_m():
    n = 6
    hs = [_headway(CoordinationPlan(PlanKind.M_PLATOON, tuple(range(1, m + 1))), Role.LEADER, n)
          for m in (2, 3)]
    assert hs[1] < hs[0]


def test_coordination_rejected_at_high_density():
    with pytest.raises(ConfigError, match="n < n_c"):
        _headway(CoordinationPlan(PlanKind.SYMMETRICAL), Role.NONE, n=8)


@pytest.mark.parametrize("fixture", ["log_a", "log_b", "log_c"])
def test_no_chattering_and_nonnegative_switch_errors(fixture, request):
    lg = request.getfixturevalue(fixture)
    for i in range(1, lg.n + 1):
        assert len(lg.switches(i)) <= 2
    for e in lg.switches():
        assert e.delta >= -0.01


def test_speed_limit_never_exceeds_free_flow(log_c):
    assert np.all(log_c.v_limit <= 29.0)
    assert np.allclose(np.unique(log_c.v_limit), [0.8 * 29.0, 29.0])


def test_switch_sequences_terminate(log_c):
    last = max(e.t for e in log_c.switches())
    assert last < 100.0
