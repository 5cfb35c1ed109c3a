"""Longitudinal vehicle dynamics: linearized triple integrator and the full
drag/friction/engine-lag model with its exact feedback linearization.

The array-level helpers (``beta``, ``alpha``, ``throttle``, ``acceleration``)
accept scalars or numpy arrays; the simulator calls them on whole fleets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import VehicleParams, VehicleState


@dataclass(frozen=True)
class ModelDerivative:
    dx: float
    dv: float
    da: float
    dF: float = 0.0


def linear_derivative(state: VehicleState, u: float) -> ModelDerivative:
    return ModelDerivative(dx=state.v, dv=state.a, da=u)


def alpha(v, params: VehicleParams):
    return 1.0 / (params.mass * params.tau(v))


def beta(v, a, params: VehicleParams):
    m, kd = params.mass, params.drag
    d_m_dot = params.d_m_rate(v) * a
    return (-2.0 * kd / m * v * a - d_m_dot / m
            - (a + kd / m * v * v + params.d_m(v) / m) / params.tau(v))


def engine_force(v, a, params: VehicleParams):
    """Engine force that produces acceleration ``a`` at speed ``v``."""
    return params.mass * a + params.drag * v * v + params.d_m(v)


def acceleration(v, F, params: VehicleParams):
    return (F - params.drag * v * v - params.d_m(v)) / params.mass


def throttle(v, a, u, params: VehicleParams):
    return (u - beta(v, a, params)) / alpha(v, params)


def feedback_linearize(state: VehicleState, u: float, params: VehicleParams) -> float:
    """Throttle force that makes the jerk of the full model equal ``u``."""
    if not all(math.isfinite(q) for q in (state.v, state.a, u)):
        raise ValueError(f"non-finite state or input: v={state.v}, a={state.a}, u={u}")
    return float(throttle(state.v, state.a, u, params))


def nonlinear_derivative(state: VehicleState, theta: float, params: VehicleParams) -> ModelDerivative:
    """Rates of the full model.  Acceleration is taken from the force balance on ``state.F``."""
    v, F = state.v, state.F
    a = acceleration(v, F, params)
    dF = (theta - F) / params.tau(v)
    da = beta(v, a, params) + alpha(v, params) * theta
    return ModelDerivative(dx=v, dv=float(a), da=float(da), dF=float(dF))


def with_engine_force(state: VehicleState, params: VehicleParams) -> VehicleState:
    """Copy of ``state`` whose F is consistent with its (v, a)."""
    return VehicleState(state.x, state.v, state.a, state.w, state.v_r,
                        float(engine_force(state.v, state.a, params)))


def is_finite(arr) -> bool:
    return bool(np.all(np.isfinite(arr)))
