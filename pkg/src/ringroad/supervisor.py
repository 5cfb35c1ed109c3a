"""Per-vehicle mode switching and coordinator-driven platoon formation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .analysis import coordinated_gain_rescale, critical_count, inter_platoon_distance
from .core import (
    ConfigError, ControllerGains, CoordinationPlan, GainSchedule, HeadwayRamp, Mode, ModeState,
    PlanKind, Role,
)

OUT_OF_RANGE_DEBOUNCE = 0.5
# Tolerance on the lead-speed test.  A cruising leader overshoots V_s by ~0.2 m/s with the
# default gains; without slack that overshoot (or plain round-off) breaks platoons apart.
SPEED_MARGIN = 0.5


class SwitchReason(str, enum.Enum):
    THRESHOLD_CROSSED = "ThresholdCrossed"
    LEAD_EXCEEDS_LIMIT = "LeadExceedsLimit"
    LEAD_OUT_OF_RANGE = "LeadOutOfRange"
    COORDINATION_SLOWDOWN = "CoordinationSlowdown"
    COORDINATION_RESUME = "CoordinationResume"


@dataclass(frozen=True)
class SwitchDecision:
    new_mode: Mode
    reason: SwitchReason
    t: float
    vehicle: int = 0


@dataclass(frozen=True)
class Snapshot:
    """Read-only view of the fleet used by the supervisor (arrays indexed 0..n-1)."""

    y: np.ndarray
    v: np.ndarray
    v_l: np.ndarray
    v_r: np.ndarray
    delta: np.ndarray
    in_range: np.ndarray


def switching_threshold(v_e, v_l, gains: ControllerGains):
    """Spacing below which a cruising vehicle starts following."""
    return gains.h * v_e + gains.s0 + gains.r * np.maximum(v_e - v_l, 0.0)


def select_mode(current: ModeState, y_e: float, v_e: float, v_l: float, lead_in_range: bool, t: float,
                gains: ControllerGains, *, speed_margin: float = SPEED_MARGIN) -> Optional[SwitchDecision]:
    if current.mode is Mode.CRUISE:
        if lead_in_range and y_e < switching_threshold(v_e, v_l, gains) \
                and v_l <= current.v_limit + speed_margin:
            return SwitchDecision(Mode.FOLLOWING, SwitchReason.THRESHOLD_CROSSED, t)
        return None
    if current.latched:
        return None
    if v_l > current.v_limit + speed_margin:
        return SwitchDecision(Mode.CRUISE, SwitchReason.LEAD_EXCEEDS_LIMIT, t)
    since = current.out_of_range_since
    if not lead_in_range and since is not None and t - since >= OUT_OF_RANGE_DEBOUNCE:
        return SwitchDecision(Mode.CRUISE, SwitchReason.LEAD_OUT_OF_RANGE, t)
    return None


def coordination_speed_limit(plan: CoordinationPlan, platoon_formed_behind: bool, v_free: float) -> float:
    return v_free if platoon_formed_behind else plan.alpha * v_free


def designated_followers(plan: CoordinationPlan, n: int) -> dict:
    """Map leader id -> follower ids (1-based), splitting the ring between consecutive leaders."""
    if plan.kind is PlanKind.SYMMETRICAL:
        return {i: [] for i in range(1, n + 1)}
    leaders = sorted(plan.leaders)
    out = {}
    for k, lead in enumerate(leaders):
        prev = leaders[k - 1] if len(leaders) > 1 else lead
        followers = []
        i = lead - 1 if lead > 1 else n
        while i != prev and i != lead:
            followers.append(i)
            i = i - 1 if i > 1 else n
        out[lead] = sorted(followers)
    return out


def platoon_formed_behind(modes: Sequence[ModeState], plan: CoordinationPlan, leader_index: int) -> bool:
    followers = designated_followers(plan, len(modes))[leader_index]
    return all(modes[i - 1].mode is Mode.FOLLOWING for i in followers)


def desired_headway(plan: CoordinationPlan, P: float, n: int, L: float, s0: float, v_free: float,
                    h: float, role: Role) -> Optional[float]:
    """Target time headway for a vehicle with ``role`` under ``plan``; None means no spacing target."""
    if not n < critical_count(P, h, v_free, s0, L):
        raise ConfigError(f"coordination requires n < n_c (n={n}, n_c={critical_count(P, h, v_free, s0, L):.4f})")
    if plan.kind is PlanKind.SYMMETRICAL:
        h_d = (P / n - L - s0) / v_free
    elif plan.kind is PlanKind.M_PLATOON:
        if role is not Role.LEADER:
            return h
        h_d = (inter_platoon_distance(P, n, plan.m, L, h, s0, v_free) - s0) / v_free
    else:
        return None if role is Role.LEADER else h
    if h_d <= 0:
        raise ConfigError(f"coordination plan gives non-positive headway {h_d}")
    return h_d


def rescaled_gains(gains: ControllerGains, h_target: float) -> tuple:
    """(C_p, C_q) scaled so that h_target * C = h * C stays fixed."""
    return coordinated_gain_rescale(gains, h_target)


class Supervisor:
    """Owns the fleet's ModeStates.

    ``pending`` is a cheap vectorized test for "some decision would fire at
    this instant"; ``resolve`` produces and applies the decisions.
    """

    def __init__(self, modes: List[ModeState], gains: ControllerGains, v_free: float, *,
                 plan: Optional[CoordinationPlan] = None, perimeter: float = 0.0, length: float = 0.0,
                 v2v: bool = False, speed_margin: float = SPEED_MARGIN):
        self.modes = list(modes)
        self.gains = gains
        self.v_free = v_free
        self.plan = plan
        self.perimeter = perimeter
        self.length = length
        self.v2v = v2v
        self.speed_margin = speed_margin
        self.issued = False
        self.followers = designated_followers(plan, len(modes)) if plan is not None else {}
        self.version = 0
        self._sync()

    @property
    def n(self) -> int:
        return len(self.modes)

    def follow_targets(self) -> tuple:
        g = self.gains
        return (g.c_p, g.c_q, g.c_a if self.v2v else 0.0, g.c_b if self.v2v else 0.0)

    def _sync(self):
        ms = self.modes
        self._following = np.array([m.mode is Mode.FOLLOWING for m in ms])
        self._latched = np.array([m.latched for m in ms])
        self._v_limit = np.array([m.v_limit for m in ms])
        self._since = np.array([np.nan if m.out_of_range_since is None else m.out_of_range_since for m in ms])
        self._join = np.array([m.role is Role.LEADER and m.formed and m.h_goal is not None
                               and m.mode is Mode.CRUISE for m in ms])
        self.version += 1

    def pending(self, t: float, snap: Snapshot) -> bool:
        cruise = ~self._following
        d_d = switching_threshold(snap.v, snap.v_l, self.gains)
        if np.any(cruise & snap.in_range & (snap.y < d_d) & (snap.v_l <= self._v_limit + self.speed_margin)):
            return True
        free = self._following & ~self._latched
        if np.any(free & (snap.v_l > self._v_limit + self.speed_margin)):
            return True
        with np.errstate(invalid="ignore"):
            stale = ~snap.in_range & (t - self._since >= OUT_OF_RANGE_DEBOUNCE)
        if np.any(free & stale):
            return True
        if self.plan is not None and not self.issued and t >= self.plan.issue_time:
            return True
        return bool(np.any(self._join & (snap.in_range | self.v2v)))

    def track(self, t: float, snap: Snapshot) -> None:
        """Grid-point bookkeeping for the out-of-range debounce."""
        changed = False
        for i, m in enumerate(self.modes):
            lost = m.mode is Mode.FOLLOWING and not snap.in_range[i]
            if lost and m.out_of_range_since is None:
                self.modes[i] = replace(m, out_of_range_since=t)
                changed = True
            elif not lost and m.out_of_range_since is not None:
                self.modes[i] = replace(m, out_of_range_since=None)
                changed = True
        if changed:
            self._sync()

    # -- transitions -------------------------------------------------------

    def _enter_following(self, i: int, t: float, snap: Snapshot, h_goal: Optional[float] = None) -> None:
        g = self.gains
        m = self.modes[i]
        target = self.follow_targets()
        if h_goal is None:
            headway = HeadwayRamp(g.h, g.h, g.lam, t)
        else:
            headway = HeadwayRamp(g.h, h_goal, g.lam, t)
            target = rescaled_gains(g, h_goal) + target[2:]
        self.modes[i] = replace(m, mode=Mode.FOLLOWING, t_entry=t, v_ref_at_switch=float(snap.v_r[i]),
                                headway=headway, gains=GainSchedule((0.0,) * 4, target, t),
                                out_of_range_since=None)

    def _enter_cruise(self, i: int, t: float) -> None:
        g = self.gains
        m = self.modes[i]
        self.modes[i] = replace(m, mode=Mode.CRUISE, t_entry=t, headway=HeadwayRamp(g.h, g.h, g.lam, t),
                                out_of_range_since=None)

    def _retarget(self, i: int, t: float, h_goal: float) -> None:
        g = self.gains
        m = self.modes[i]
        h_now = float(m.headway.at(t))
        start = m.gains.at(t, g.lam)
        target = rescaled_gains(g, h_goal) + m.gains.target[2:]
        self.modes[i] = replace(m, headway=HeadwayRamp(h_now, h_goal, g.lam, t),
                                gains=GainSchedule(start, target, t))

    def _issue(self, t: float) -> None:
        plan = self.plan
        n = self.n
        self.issued = True
        for lead, fols in self.followers.items():
            h_goal = desired_headway(plan, self.perimeter, n, self.length, self.gains.s0, self.v_free,
                                     self.gains.h, Role.LEADER)
            self.modes[lead - 1] = replace(self.modes[lead - 1], role=Role.LEADER, h_goal=h_goal)
            for f in fols:
                self.modes[f - 1] = replace(self.modes[f - 1], role=Role.FOLLOWER)

    def _coordinate(self, t: float, snap: Snapshot, out: list) -> bool:
        changed = False
        for lead, fols in self.followers.items():
            i = lead - 1
            m = self.modes[i]
            if not m.formed:
                if platoon_formed_behind(self.modes, self.plan, lead):
                    for f in fols:
                        self.modes[f - 1] = replace(self.modes[f - 1], latched=True)
                    m = replace(m, formed=True)
                v_lim = coordination_speed_limit(self.plan, m.formed, self.v_free)
                if v_lim != m.v_limit:
                    reason = SwitchReason.COORDINATION_RESUME if m.formed else SwitchReason.COORDINATION_SLOWDOWN
                    out.append(SwitchDecision(m.mode, reason, t, lead))
                    m = replace(m, v_limit=v_lim)
                if m != self.modes[i]:
                    self.modes[i] = m
                    changed = True
            if not m.formed or m.h_goal is None:
                continue
            if m.mode is Mode.FOLLOWING and not m.latched:
                self._retarget(i, t, m.h_goal)
                self.modes[i] = replace(self.modes[i], latched=True)
                changed = True
            elif m.mode is Mode.CRUISE and (snap.in_range[i] or self.v2v):
                self._enter_following(i, t, snap, m.h_goal)
                self.modes[i] = replace(self.modes[i], latched=True)
                out.append(SwitchDecision(Mode.FOLLOWING, SwitchReason.COORDINATION_RESUME, t, lead))
                changed = True
        return changed

    def resolve(self, t: float, snap: Snapshot) -> List[SwitchDecision]:
        """Apply every decision due at ``t``; returns them in application order."""
        out: List[SwitchDecision] = []
        if self.plan is not None and not self.issued and t >= self.plan.issue_time:
            self._issue(t)
        for _ in range(4 * self.n + 4):
            changed = False
            if self.issued:
                changed |= self._coordinate(t, snap, out)
            for i, m in enumerate(self.modes):
                d = select_mode(m, snap.y[i], snap.v[i], snap.v_l[i], bool(snap.in_range[i]), t, self.gains,
                                speed_margin=self.speed_margin)
                if d is None:
                    continue
                if d.new_mode is Mode.FOLLOWING:
                    self._enter_following(i, t, snap)
                else:
                    self._enter_cruise(i, t)
                out.append(replace(d, vehicle=i + 1))
                changed = True
            if not changed:
                break
        else:
            raise RuntimeError(f"supervisor did not settle at t={t}")
        self._sync()
        return out


def initial_modes(y, v, v_l, in_range, initial_spec, gains: ControllerGains, v_free: float,
                  v2v: bool = False) -> List[ModeState]:
    """Mode states at t=0.

    A vehicle starts in following mode when its spec says so, or when a valid
    lead sits at or inside the switching threshold (non-strict at t=0 so a
    platoon at standstill spacing counts as formed).  ``settled`` followers
    start with fully ramped gains.
    """
    targets = (gains.c_p, gains.c_q, gains.c_a if v2v else 0.0, gains.c_b if v2v else 0.0)
    modes = []
    for i, spec in enumerate(initial_spec):
        if spec.mode is not None:
            mode = spec.mode
        else:
            near = in_range[i] and y[i] <= switching_threshold(v[i], v_l[i], gains) and v_l[i] <= v_free
            mode = Mode.FOLLOWING if near else Mode.CRUISE
        t0 = -math.inf if spec.settled else 0.0
        modes.append(ModeState(mode=mode, t_entry=t0, v_limit=v_free,
                               headway=HeadwayRamp(gains.h, gains.h, gains.lam, t0),
                               gains=GainSchedule((0.0,) * 4, targets, t0),
                               v_ref_at_switch=float(v[i])))
    return modes
