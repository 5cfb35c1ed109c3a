"""Jerk-level control laws for cruise and vehicle-following modes.

Every primitive here is written with numpy operations so that the same
function serves a single vehicle (floats) and the simulator (arrays).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ControllerGains, HeadwayRamp, VehicleState

__all__ = [
    "ControlInput", "EffectiveGains", "HeadwayRamp", "saturate",
    "cruise_reference_derivative", "cruise_control", "following_reference_speed",
    "gain_ramp", "spacing_error", "following_control", "headway_now", "jerk",
]


@dataclass(frozen=True)
class ControlInput:
    u: float
    dw: float
    dv_r: float = 0.0


@dataclass(frozen=True)
class EffectiveGains:
    """Time-varying following gains evaluated at the current instant."""

    c_p: float
    c_q: float
    c_a: float = 0.0
    c_b: float = 0.0

    @classmethod
    def settled(cls, gains: ControllerGains, v2v: bool = False) -> "EffectiveGains":
        if v2v:
            return cls(gains.c_p, gains.c_q, gains.c_a, gains.c_b)
        return cls(gains.c_p, gains.c_q)


def saturate(x, a_min, a_max):
    return np.clip(x, a_min, a_max)


def cruise_reference_derivative(v_r, v_limit, gains: ControllerGains):
    return saturate(gains.p * (v_limit - v_r), gains.a_min, gains.a_max)


def following_reference_speed(v_l, v_r_at_switch, lam, t_since_switch):
    return v_l + (v_r_at_switch - v_l) * np.exp(-lam * t_since_switch)


def gain_ramp(c_target, c_start, lam, t_since_start):
    return c_target + (c_start - c_target) * np.exp(-lam * t_since_start)


def spacing_error(y, v, h_now, s0):
    return y - (h_now * v + s0)


def headway_now(ramp: HeadwayRamp, t):
    if np.any(np.asarray(t) < ramp.t_start):
        raise ValueError("headway ramp evaluated before its start time")
    return ramp.at(t)


def jerk(a, v, v_r, w, gains: ControllerGains, delta=0.0, a_l=0.0, c_p=0.0, c_q=0.0, c_a=0.0, c_b=0.0):
    """(u, dw) of the common control law.  Zero ramped gains give the cruise law."""
    speed_err = v_r - v
    accel_err = a_l - a
    u = gains.k_a * a + c_p * delta + gains.c_v * speed_err + c_a * accel_err + w
    dw = c_q * delta + gains.c_s * speed_err + c_b * accel_err
    return u, dw


def cruise_control(state: VehicleState, gains: ControllerGains, v_limit: float) -> ControlInput:
    u, dw = jerk(state.a, state.v, state.v_r, state.w, gains)
    return ControlInput(float(u), float(dw), float(cruise_reference_derivative(state.v_r, v_limit, gains)))


def following_control(ego: VehicleState, lead_v: float, lead_a: float, delta: float, v_r: float,
                      gains: ControllerGains, effective: EffectiveGains) -> ControlInput:
    """Following law.  ``v_r`` is the ramped reference speed, which already tracks the lead speed,
    so ``lead_v`` does not enter the law itself."""
    u, dw = jerk(ego.a, ego.v, v_r, ego.w, gains, delta=delta, a_l=lead_a,
                 c_p=effective.c_p, c_q=effective.c_q, c_a=effective.c_a, c_b=effective.c_b)
    return ControlInput(float(u), float(dw), 0.0)
