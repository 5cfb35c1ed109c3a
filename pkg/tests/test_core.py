import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringroad.core import (
    ConfigError, ControllerGains, CoordinationPlan, InitialVehicle, PlanKind, RingScenario, VehicleParams,
    VehicleState, gap, positions_from_gaps, ring_gaps, total_gap_sum,
)

L, P = 4.5, 320.0


def test_gap_examples():
    assert gap(0, 52, L, P) == pytest.approx(47.5)
    assert gap(310, 10, L, P, is_wrap=True) == pytest.approx(15.5)
    assert gap(0, 4.5, L, P) == 0.0


@pytest.mark.parametrize("n,expected", [(8, 284.0), (4, 302.0), (1, 315.5)])
def test_total_gap_sum_identity(n, expected):
    rng = np.random.default_rng(n)
    free = P - n * L
    gaps = rng.dirichlet(np.ones(n)) * free
    xs = positions_from_gaps(gaps, L, x1=1234.5)
    states = [VehicleState(x=x) for x in xs]
    assert total_gap_sum(states, L, P) == pytest.approx(expected, rel=1e-12)


def test_total_gap_sum_rejects_empty():
    with pytest.raises(ValueError):
        total_gap_sum([], L, P)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.1, 50.0), min_size=1, max_size=12), st.floats(0.0, 1e5))
def test_positions_and_gaps_partition_the_ring(gaps, x1):
    n = len(gaps)
    perimeter = sum(gaps) + n * L
    xs = positions_from_gaps(gaps, L, x1=x1)
    back = ring_gaps(np.array(xs), L, perimeter)
    assert np.allclose(back, gaps, atol=1e-7)
    assert back.sum() == pytest.approx(perimeter - n * L, rel=1e-9)


def test_scenario_rejects_overfull_ring():
    initial = tuple(InitialVehicle(x=5.0 * i) for i in range(7))
    with pytest.raises(ConfigError, match="vehicles do not fit on ring"):
        RingScenario(perimeter=30.0, initial=initial)


def test_scenario_rejects_unordered_positions():
    with pytest.raises(ConfigError, match="strictly increasing"):
        RingScenario(perimeter=P, initial=(InitialVehicle(x=10.0), InitialVehicle(x=5.0)))


def test_scenario_rejects_touching_vehicles():
    with pytest.raises(ConfigError, match="gaps must be positive"):
        RingScenario(perimeter=P, initial=(InitialVehicle(x=0.0), InitialVehicle(x=4.5)))


def test_default_gains_and_bounds():
    g = ControllerGains()
    assert (g.k_a, g.c_p, g.c_v, g.c_q, g.c_s) == (-9.0, 2.0, 6.0, 0.01, 0.03)
    assert (g.p, g.lam, g.r, g.h, g.s0) == (10.0, 0.5, 1.0, 1.5, 4.0)
    assert g.a_min == pytest.approx(-1.962)
    assert g.a_max == pytest.approx(0.981)


@pytest.mark.parametrize("bad", [dict(k_a=1.0), dict(c_p=-1.0), dict(h=0.0), dict(s0=-1.0),
                                 dict(a_max=-0.1), dict(c_v=math.nan)])
def test_gain_validation(bad):
    with pytest.raises(ConfigError):
        ControllerGains(**bad)


@pytest.mark.parametrize("bad", [dict(mass=0.0), dict(drag=-1.0), dict(length=0.0), dict(engine_tau=0.0)])
def test_vehicle_param_validation(bad):
    with pytest.raises(ConfigError):
        VehicleParams(**bad)


def test_custom_friction_needs_derivative():
    with pytest.raises(ConfigError, match="friction_rate"):
        VehicleParams(friction=lambda v: 10 * v)


@pytest.mark.parametrize("kwargs", [dict(alpha=1.0), dict(alpha=0.0), dict(leaders=(2, 2)),
                                    dict(issue_time=-1.0)])
def test_plan_validation(kwargs):
    base = dict(kind=PlanKind.M_PLATOON, leaders=(2, 4), alpha=0.8)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        CoordinationPlan(**base)


def test_plan_m_bounds():
    CoordinationPlan(PlanKind.M_PLATOON, (2, 4)).validate_for(4)
    with pytest.raises(ConfigError):
        CoordinationPlan(PlanKind.M_PLATOON, (1, 2, 3)).validate_for(4)
    with pytest.raises(ConfigError):
        CoordinationPlan(PlanKind.M_PLATOON, (2, 9)).validate_for(4)
    with pytest.raises(ConfigError):
        CoordinationPlan(PlanKind.ONE_PLATOON, (1, 2))
