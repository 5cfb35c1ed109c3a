"""Built-in scenarios: the three ring-road experiments plus generic builders for sweeps."""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Sequence

from .core import (
    ControllerGains, CoordinationPlan, InitialVehicle, Mode, PlanKind, RingScenario, VehicleParams,
    positions_from_gaps,
)

PERIMETER = 320.0
V_FREE = 29.0
HIGH_DENSITY_NOTE = "n = 8 > n_c = 320/52 = 6.1538: congested, unique symmetric equilibrium at 21 m/s"


def from_gaps(gaps: Sequence[float], *, v: float = 0.0, modes: Optional[Sequence[Optional[Mode]]] = None,
              settled: bool = True, perimeter: float = PERIMETER, **kw) -> RingScenario:
    """Scenario whose vehicles are laid out by the gaps y_1..y_n (sum must equal P - nL)."""
    vehicle = kw.get("vehicle", VehicleParams())
    L = vehicle.length
    n = len(gaps)
    if abs(sum(gaps) - (perimeter - n * L)) > 1e-9 * perimeter:
        raise ValueError(f"gaps sum to {sum(gaps)}, expected P - nL = {perimeter - n * L}")
    xs = positions_from_gaps(gaps, L)
    modes = modes or [None] * n
    initial = tuple(InitialVehicle(x=x, v=v, mode=m, settled=settled)
                    for x, m in zip(xs, modes))
    return RingScenario(perimeter=perimeter, initial=initial, **kw)


def high_density(**kw) -> RingScenario:
    """n=8 at rest: platoon 1-3 led by 3, platoon 4-8 led by 8, y_3(0)=100 m."""
    g = kw.get("gains", ControllerGains())
    L = kw.get("vehicle", VehicleParams()).length
    s0 = g.s0
    gaps = [s0, s0, 100.0, s0, s0, s0, s0]
    gaps.append(PERIMETER - 8 * L - sum(gaps))
    kw.setdefault("name", "highdensity_n8")
    kw.setdefault("notes", HIGH_DENSITY_NOTE)
    return from_gaps(gaps, **kw)


def low_density(free_gap: float = 100.0, **kw) -> RingScenario:
    """n=4 at rest: platoon 1-3 at standstill spacing, vehicle 4 ``free_gap`` ahead of vehicle 3."""
    g = kw.get("gains", ControllerGains())
    L = kw.get("vehicle", VehicleParams()).length
    gaps = [g.s0, g.s0, free_gap]
    gaps.append(PERIMETER - 4 * L - sum(gaps))
    kw.setdefault("name", "lowdensity_n4")
    return from_gaps(gaps, **kw)


def coordination(alpha: float = 0.8, issue_time: float = 10.0, **kw) -> RingScenario:
    """n=4 cruising at V_f in the low-density steady configuration; 2-platoon plan with leaders {2, 4}."""
    g = kw.get("gains", ControllerGains())
    L = kw.get("vehicle", VehicleParams()).length
    v_free = kw.get("v_free", V_FREE)
    safe = g.h * v_free + g.s0
    gaps = [safe, safe, 100.0]
    gaps.append(PERIMETER - 4 * L - sum(gaps))
    kw.setdefault("name", "coordination_n4")
    kw.setdefault("plan", CoordinationPlan(PlanKind.M_PLATOON, leaders=(2, 4), alpha=alpha, issue_time=issue_time))
    modes = [Mode.FOLLOWING, Mode.FOLLOWING, Mode.CRUISE, Mode.CRUISE]
    return from_gaps(gaps, v=v_free, modes=modes, **kw)


def packed(n: int, perimeter: float = PERIMETER, **kw) -> RingScenario:
    """n vehicles at rest, vehicles 1..n-1 at standstill spacing behind vehicle n, which has the rest of the ring."""
    g = kw.get("gains", ControllerGains())
    L = kw.get("vehicle", VehicleParams()).length
    gaps = [g.s0] * (n - 1)
    gaps.append(perimeter - n * L - sum(gaps))
    kw.setdefault("name", f"packed_n{n}")
    return from_gaps(gaps, perimeter=perimeter, **kw)


def cruise_from_rest(**kw) -> RingScenario:
    """Single vehicle alone on the ring, starting at rest."""
    kw.setdefault("name", "cruise_from_rest")
    return packed(1, **kw)


BUNDLED = {
    "highdensity_n8": high_density,
    "lowdensity_n4": low_density,
    "coordination_n4": coordination,
}
