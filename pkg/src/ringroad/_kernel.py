"""Compiled right-hand side and RK4 step for the linearized fleet.

Mirrors ``Simulator.evaluate`` for the triple-integrator model.  The
per-vehicle schedule is packed into one (ROWS, n) array so the kernel takes
only plain arrays.  Falls back to interpreted loops if numba is missing.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# schedule rows
FOL, TG, G0, G1, H0, H1, TH, VR0, TE, VLIM = 0, 1, 2, 6, 10, 11, 12, 13, 14, 15
ROWS = 16
# parameter vector
K_A, C_V, C_S, LAM, S0, P, A_MIN, A_MAX, LEN = range(9)
# auxiliary rows
AU, AY, ADELTA, AREF, AH, AVL = range(6)


def pack_params(gains, length: float) -> np.ndarray:
    g = gains
    return np.array([g.k_a, g.c_v, g.c_s, g.lam, g.s0, g.p, g.a_min, g.a_max, length], dtype=float)


@njit(cache=True)
def derivative(t, S, sch, lead, wrap, prm, dS, aux):
    k_a, c_v, c_s, lam, s0 = prm[K_A], prm[C_V], prm[C_S], prm[LAM], prm[S0]
    n = S.shape[1]
    for i in range(n):
        j = lead[i]
        v = S[1, i]
        a = S[2, i]
        y = S[0, j] + wrap[i] - S[0, i] - prm[LEN]
        v_l = S[1, j]
        h_now = sch[H1, i] + (sch[H0, i] - sch[H1, i]) * math.exp(-lam * (t - sch[TH, i]))
        delta = y - (h_now * v + s0)
        f = sch[FOL, i]
        eg = math.exp(-lam * (t - sch[TG, i]))
        c_p = f * (sch[G1, i] + (sch[G0, i] - sch[G1, i]) * eg)
        c_q = f * (sch[G1 + 1, i] + (sch[G0 + 1, i] - sch[G1 + 1, i]) * eg)
        c_a = f * (sch[G1 + 2, i] + (sch[G0 + 2, i] - sch[G1 + 2, i]) * eg)
        c_b = f * (sch[G1 + 3, i] + (sch[G0 + 3, i] - sch[G1 + 3, i]) * eg)
        if f > 0.0:
            ref = v_l + (sch[VR0, i] - v_l) * math.exp(-lam * (t - sch[TE, i]))
            dvr = 0.0
        else:
            ref = S[4, i]
            dvr = min(max(prm[P] * (sch[VLIM, i] - ref), prm[A_MIN]), prm[A_MAX])
        speed_err = ref - v
        accel_err = S[2, j] - a
        u = k_a * a + c_p * delta + c_v * speed_err + c_a * accel_err + S[3, i]
        dS[0, i] = v
        dS[1, i] = a
        dS[2, i] = u
        dS[3, i] = c_q * delta + c_s * speed_err + c_b * accel_err
        dS[4, i] = dvr
        aux[AU, i] = u
        aux[AY, i] = y
        aux[ADELTA, i] = delta
        aux[AREF, i] = ref
        aux[AH, i] = h_now
        aux[AVL, i] = v_l


@njit(cache=True)
def rk4(t, S, h, sch, lead, wrap, prm):
    n = S.shape[1]
    aux = np.empty((6, n))
    k1 = np.empty_like(S)
    k2 = np.empty_like(S)
    k3 = np.empty_like(S)
    k4 = np.empty_like(S)
    derivative(t, S, sch, lead, wrap, prm, k1, aux)
    derivative(t + 0.5 * h, S + 0.5 * h * k1, sch, lead, wrap, prm, k2, aux)
    derivative(t + 0.5 * h, S + 0.5 * h * k2, sch, lead, wrap, prm, k3, aux)
    derivative(t + h, S + h * k3, sch, lead, wrap, prm, k4, aux)
    return S + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def auxiliary(t, S, sch, lead, wrap, prm):
    dS = np.empty_like(S)
    aux = np.empty((6, S.shape[1]))
    derivative(t, S, sch, lead, wrap, prm, dS, aux)
    return aux
