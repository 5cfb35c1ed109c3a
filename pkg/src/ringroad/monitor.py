"""Post-run inspection of trajectory logs: steady-state detection, platoon
partition and safety checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .core import ControllerGains, Mode

SPEED_TOL = 0.05
GAP_TOL = 0.1
WINDOW = 20.0
HEADWAY_TOL = 1e-3


@dataclass(frozen=True)
class Platoon:
    """Vehicles ordered tail to front.  ``leader`` is None for a platoon that closes the ring."""

    members: Tuple[int, ...]
    leader: Optional[int]
    gap_ahead: Optional[float]

    @property
    def is_free(self) -> bool:
        return len(self.members) == 1 and self.leader is not None

    def __str__(self) -> str:
        ids = ",".join(str(i) for i in self.members)
        return f"free[{ids}]" if self.is_free else f"platoon[{ids}]"


@dataclass
class SteadyStateReport:
    converged: bool
    settle_time: Optional[float]
    speeds: np.ndarray
    gaps: np.ndarray
    platoons: List[Platoon] = field(default_factory=list)

    @property
    def mean_speed(self) -> float:
        return float(np.mean(self.speeds)) if len(self.speeds) else float("nan")

    @property
    def configuration(self) -> str:
        return " ".join(str(p) for p in self.platoons)


def partition(modes, y, h_now, gains: ControllerGains, headway_tol: float = HEADWAY_TOL) -> List[Platoon]:
    """Group vehicles into platoons from one snapshot.

    Vehicle i is attached to the vehicle ahead when it is following with the
    base headway.  Leaders of coordinated platoons follow at a larger headway
    and therefore start their own group.  Spacing errors are not used: with
    small integral gains they decay over minutes, long after the platoon
    structure is fixed.
    """
    n = len(y)
    linked = [modes[i] == Mode.FOLLOWING and abs(h_now[i] - gains.h) <= headway_tol for i in range(n)]
    if all(linked):
        return [Platoon(tuple(range(1, n + 1)), None, None)]
    out = []
    for lead in range(n):
        if linked[lead]:
            continue
        members = [lead + 1]
        i = (lead - 1) % n
        while linked[i]:
            members.append(i + 1)
            i = (i - 1) % n
        out.append(Platoon(tuple(reversed(members)), lead + 1, float(y[lead])))
    return out


def detect_steady_state(log, speed_tol: float = SPEED_TOL, gap_tol: float = GAP_TOL,
                        window: float = WINDOW) -> SteadyStateReport:
    """Trailing-window convergence test.

    Converged when, over the last ``window`` seconds, every vehicle's speed is
    within ``speed_tol`` of the fleet mean at each sample and no gap moves by
    ``gap_tol`` or more.  The settle time is the start of the final stretch
    of samples whose trailing windows all pass.  Reported speeds and gaps
    are trailing-window means; the platoon partition is taken at the last
    sample.
    """
    t = np.asarray(log.t)
    n = log.v.shape[1] if log.v.ndim == 2 else 0
    empty = SteadyStateReport(False, None, np.full(n, np.nan), np.full(n, np.nan))
    if len(t) < 2 or window <= 0:
        return empty
    dt = float(t[1] - t[0])
    half = int(round(window / (2.0 * dt)))
    m = 2 * half
    if half == 0 or len(t) <= m:
        return empty
    v, y = np.asarray(log.v), np.asarray(log.y)
    spread_ok = np.abs(v - v.mean(axis=1, keepdims=True)).max(axis=1) < speed_tol
    # rolling over the trailing window [k-m, k] == centred filter at k-half
    bad_speed = minimum_filter1d(spread_ok.astype(np.int8), size=m + 1, mode="nearest") == 0
    drift = (maximum_filter1d(y, size=m + 1, axis=0, mode="nearest")
             - minimum_filter1d(y, size=m + 1, axis=0, mode="nearest")).max(axis=1)
    ok = np.zeros(len(t), dtype=bool)
    ok[m:] = ~bad_speed[half:len(t) - half] & (drift[half:len(t) - half] < gap_tol)
    speeds = v[-m - 1:].mean(axis=0)
    gaps = y[-m - 1:].mean(axis=0)
    gains = log.gains or ControllerGains()
    platoons = partition(log.mode[-1], y[-1], log.h_now[-1], gains)
    if not ok[-1]:
        return SteadyStateReport(False, None, speeds, gaps, platoons)
    fails = np.nonzero(~ok)[0]
    k0 = int(fails[-1]) + 1
    return SteadyStateReport(True, float(t[k0]), speeds, gaps, platoons)


@dataclass(frozen=True)
class SafetyEvent:
    severity: str  # "violation" or "warning"
    t: float
    vehicle: int
    value: float
    message: str


def safety_monitor(log, s_collision: float = 0.0) -> List[SafetyEvent]:
    """Violations for every sample with a gap at or below ``s_collision``;
    warnings for mode switches made with a negative spacing error."""
    out = []
    y = np.asarray(log.y)
    for k, i in zip(*np.nonzero(y <= s_collision)):
        out.append(SafetyEvent("violation", float(log.t[k]), int(i) + 1, float(y[k, i]),
                               f"gap {y[k, i]:.4g} m <= {s_collision:g} m"))
    for e in log.events:
        if e.old_mode != e.new_mode and e.delta < 0:
            out.append(SafetyEvent("warning", float(e.t), e.vehicle, float(e.delta),
                                   f"switch to {e.new_mode.token} with spacing error {e.delta:.4g} m"))
    return out
