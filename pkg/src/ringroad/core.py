"""Shared domain types and ring geometry.

Vehicles are numbered 1..n in the order they sit around the ring at t=0;
vehicle i+1 is ahead of vehicle i and vehicle n follows vehicle 1.  Public
structures (plans, reports, events, CSV rows) use these 1-based ids; array
columns in logs are 0-based (column i-1 holds vehicle i).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

G = 9.81


class ConfigError(ValueError):
    """Invalid scenario, gain set or coordination plan."""


class Mode(enum.IntEnum):
    CRUISE = 0
    FOLLOWING = 1

    @property
    def token(self) -> str:
        return self.name.lower()


class Role(enum.IntEnum):
    NONE = 0
    LEADER = 1
    FOLLOWER = 2


class Fidelity(str, enum.Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


class PlanKind(str, enum.Enum):
    ONE_PLATOON = "one_platoon_asymmetrical"
    SYMMETRICAL = "symmetrical"
    M_PLATOON = "m_platoon_symmetrical"


@dataclass(frozen=True)
class VehicleParams:
    """Physical parameters of the (homogeneous) vehicles.

    ``friction``/``friction_rate``/``time_constant`` override the default
    linear friction ``c_f * v`` and constant engine lag.  A custom friction
    must come with its analytic derivative in ``friction_rate``.  All three
    must accept numpy arrays.
    """

    mass: float = 1500.0
    drag: float = 0.44
    friction_coeff: float = 50.0
    engine_tau: float = 0.2
    length: float = 4.5
    friction: Optional[Callable] = None
    friction_rate: Optional[Callable] = None
    time_constant: Optional[Callable] = None

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigError("vehicle.mass must be > 0")
        if self.drag < 0:
            raise ConfigError("vehicle.drag must be >= 0")
        if self.length <= 0:
            raise ConfigError("vehicle.length must be > 0")
        if self.time_constant is None and self.engine_tau <= 0:
            raise ConfigError("vehicle.engine_tau must be > 0")
        if (self.friction is None) != (self.friction_rate is None):
            raise ConfigError("vehicle.friction requires vehicle.friction_rate (analytic derivative)")

    def d_m(self, v):
        if self.friction is not None:
            return self.friction(v)
        return self.friction_coeff * v

    def d_m_rate(self, v):
        """d(d_m)/dv, so that the time derivative is d_m_rate(v) * a."""
        if self.friction_rate is not None:
            return self.friction_rate(v)
        return self.friction_coeff + 0.0 * v

    def tau(self, v):
        if self.time_constant is not None:
            return self.time_constant(v)
        return self.engine_tau + 0.0 * v


@dataclass(frozen=True)
class ControllerGains:
    """Design constants.  Defaults are the reference gain set used by the bundled scenarios."""

    k_a: float = -9.0
    c_p: float = 2.0
    c_v: float = 6.0
    c_q: float = 0.01
    c_s: float = 0.03
    c_a: float = 0.0
    c_b: float = 0.0
    p: float = 10.0
    lam: float = 0.5
    r: float = 1.0
    h: float = 1.5
    s0: float = 4.0
    a_min: float = -0.2 * G
    a_max: float = 0.1 * G

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        # Degenerate gain sets (zero damping, zero integral action) are representable so the
        # stability checker can reject them with a verdict instead of an exception.
        for name in ("k_a", "c_p", "c_v", "c_q", "c_s", "c_a", "c_b", "p", "lam", "r", "h", "s0", "a_min",
                     "a_max"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"gains.{name} must be finite")
        if self.k_a > 0:
            raise ConfigError("gains.k_a must be <= 0")
        for name in ("c_p", "c_v", "c_q", "c_s", "c_a", "c_b", "r"):
            if getattr(self, name) < 0:
                raise ConfigError(f"gains.{name} must be >= 0")
        for name in ("p", "lam", "h", "s0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"gains.{name} must be > 0")
        if not self.a_min < 0 < self.a_max:
            raise ConfigError("gains.a_min < 0 < gains.a_max required")


@dataclass(frozen=True)
class VehicleState:
    """Continuous state of one vehicle.  ``F`` is only meaningful at full fidelity."""

    x: float = 0.0
    v: float = 0.0
    a: float = 0.0
    w: float = 0.0
    v_r: float = 0.0
    F: float = 0.0


@dataclass(frozen=True)
class HeadwayRamp:
    """h(t) = h_target + (h_start - h_target) * exp(-lam * (t - t_start))."""

    h_start: float
    h_target: float
    lam: float
    t_start: float = 0.0

    def at(self, t):
        return self.h_target + (self.h_start - self.h_target) * np.exp(-self.lam * (t - self.t_start))


@dataclass(frozen=True)
class GainSchedule:
    """Start/target values of the ramped following gains (C_p, C_q, C_a, C_b)."""

    start: tuple = (0.0, 0.0, 0.0, 0.0)
    target: tuple = (0.0, 0.0, 0.0, 0.0)
    t_start: float = 0.0

    def at(self, t: float, lam: float) -> tuple:
        decay = math.exp(-lam * (t - self.t_start))
        return tuple(c1 + (c0 - c1) * decay for c0, c1 in zip(self.start, self.target))


@dataclass(frozen=True)
class ModeState:
    """Supervisor state of one vehicle."""

    mode: Mode
    t_entry: float
    v_limit: float
    headway: HeadwayRamp
    gains: GainSchedule
    v_ref_at_switch: float = 0.0
    role: Role = Role.NONE
    formed: bool = False
    latched: bool = False
    h_goal: Optional[float] = None
    out_of_range_since: Optional[float] = None


@dataclass(frozen=True)
class CoordinationPlan:
    kind: PlanKind
    leaders: tuple = ()
    alpha: float = 0.8
    issue_time: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("coordination.alpha must lie in (0, 1)")
        if self.issue_time < 0:
            raise ConfigError("coordination.issue_time must be >= 0")
        if len(set(self.leaders)) != len(self.leaders):
            raise ConfigError("coordination.leaders must be distinct")
        if self.kind is PlanKind.ONE_PLATOON and len(self.leaders) != 1:
            raise ConfigError("coordination.leaders must name exactly one vehicle for one_platoon_asymmetrical")

    @property
    def m(self) -> int:
        return len(self.leaders)

    def validate_for(self, n: int) -> None:
        for i in self.leaders:
            if not 1 <= i <= n:
                raise ConfigError(f"coordination.leaders: vehicle {i} not in 1..{n}")
        if self.kind is PlanKind.M_PLATOON and not 1 < self.m <= n / 2:
            raise ConfigError(f"coordination.leaders: m-platoon plan needs 1 < m <= n/2, got m={self.m}, n={n}")


@dataclass(frozen=True)
class InitialVehicle:
    """Start state of one vehicle.

    ``mode=None`` lets the supervisor infer the mode from the geometry.  A
    vehicle that starts in following mode has not switched, so by default it
    runs its full gains from t=0; ``settled=False`` instead ramps them from
    zero as if it had just switched.
    """

    x: float
    v: float = 0.0
    a: float = 0.0
    mode: Optional[Mode] = None
    settled: bool = True


@dataclass(frozen=True)
class RingScenario:
    perimeter: float
    initial: tuple
    v_free: float = 29.0
    gains: ControllerGains = field(default_factory=ControllerGains)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    sensing_range: float = 120.0
    v2v: bool = False
    plan: Optional[CoordinationPlan] = None
    dt: float = 0.01
    t_end: float = 300.0
    fidelity: Fidelity = Fidelity.LINEAR
    name: str = "scenario"
    notes: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def n(self) -> int:
        return len(self.initial)

    def validate(self) -> None:
        n, L, P = self.n, self.vehicle.length, self.perimeter
        if n < 1:
            raise ConfigError("scenario needs at least one vehicle")
        if not P > n * L:
            raise ConfigError(f"vehicles do not fit on ring: P={P} <= n*L={n * L}")
        if self.v_free <= 0:
            raise ConfigError("v_free must be > 0")
        if self.dt <= 0 or self.t_end <= 0:
            raise ConfigError("dt and t_end must be > 0")
        if self.sensing_range <= 0:
            raise ConfigError("sensing_range must be > 0")
        xs = [iv.x for iv in self.initial]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError("initial positions must be strictly increasing in vehicle order")
        gaps = [gap(xs[i], xs[(i + 1) % n], L, P, is_wrap=(i == n - 1)) for i in range(n)]
        bad = [i + 1 for i, y in enumerate(gaps) if not y > 0]
        if bad:
            raise ConfigError(f"initial gaps must be positive (vehicles {bad})")
        if self.plan is not None:
            self.plan.validate_for(n)


def gap(x_follower: float, x_leader: float, L: float, P: float, is_wrap: bool = False) -> float:
    """Bumper-to-bumper spacing; ``is_wrap`` for vehicle n behind vehicle 1."""
    y = x_leader - x_follower - L
    return y + P if is_wrap else y


def ring_gaps(x: np.ndarray, L: float, P: float) -> np.ndarray:
    """Gaps y_1..y_n for cumulative positions ``x`` (last axis = vehicles)."""
    x = np.asarray(x, dtype=float)
    ahead = np.roll(x, -1, axis=-1)
    y = ahead - x - L
    y[..., -1] += P
    return y


def total_gap_sum(states: Sequence[VehicleState], L: float, P: float, n: Optional[int] = None) -> float:
    if n is None:
        n = len(states)
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.array([s.x for s in states[:n]], dtype=float)
    return float(ring_gaps(xs, L, P).sum())


def positions_from_gaps(gaps: Sequence[float], L: float, x1: float = 0.0) -> list:
    """Positions x_1..x_n for the non-wrap gaps y_1..y_{n-1} (y_n is implied by P)."""
    xs = [x1]
    for y in gaps[:-1]:
        xs.append(xs[-1] + L + y)
    return xs
