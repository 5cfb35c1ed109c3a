"""Deterministic fixed-step RK4 simulation of the ring road.

Mode switches are event-located: when the supervisor reports a pending
decision at the end of a step, the crossing instant is bisected inside the
step, decisions are applied there, and integration resumes to the next grid
point.  The logged grid stays uniform.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import _kernel
from .controllers import cruise_reference_derivative, following_reference_speed, jerk, spacing_error
from .core import ConfigError, ControllerGains, Fidelity, Mode, RingScenario, Role
from .supervisor import SPEED_MARGIN, Snapshot, Supervisor, SwitchDecision, desired_headway, initial_modes
from .vehicle import acceleration, engine_force, throttle

log = logging.getLogger(__name__)

X, V, A, W, VR = range(5)
BISECT_ITERS = 52
MAX_EVENTS_PER_STEP = 64


class SimulationError(RuntimeError):
    """Integration produced a non-finite state or the supervisor failed to settle."""

    def __init__(self, msg: str, t: float = math.nan, vehicles: Sequence[int] = ()):
        super().__init__(msg)
        self.t = t
        self.vehicles = tuple(vehicles)


@dataclass
class SwitchEvent:
    t: float
    vehicle: int
    old_mode: Mode
    new_mode: Mode
    reason: str
    delta: float
    v_limit: float

    @property
    def is_mode_change(self) -> bool:
        return self.old_mode != self.new_mode


@dataclass
class TrajectoryLog:
    """Per-step record of the whole fleet.  Arrays are (steps, n); column i is vehicle i+1."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: np.ndarray
    w: np.ndarray
    v_r: np.ndarray
    mode: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    v_limit: np.ndarray
    h_now: np.ndarray
    events: List[SwitchEvent] = field(default_factory=list)
    perimeter: float = 0.0
    length: float = 0.0
    name: str = ""
    runtime: float = 0.0
    diagnostics: List[str] = field(default_factory=list)
    gains: Optional[ControllerGains] = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def switches(self, vehicle: Optional[int] = None) -> List[SwitchEvent]:
        return [e for e in self.events if e.is_mode_change and (vehicle is None or e.vehicle == vehicle)]

    def first_switch(self, vehicle: int, to: Mode = Mode.FOLLOWING) -> Optional[float]:
        for e in self.switches(vehicle):
            if e.new_mode is to:
                return e.t
        return None

    def to_csv(self, path, stride: int = 1) -> None:
        from .io import write_trajectory_csv
        write_trajectory_csv(self, path, stride)


class _Schedule:
    """Per-vehicle ramp parameters, rebuilt whenever the supervisor changes state."""

    def __init__(self, sup: Supervisor):
        ms = sup.modes
        self.version = sup.version
        self.following = np.array([m.mode is Mode.FOLLOWING for m in ms], dtype=float)
        self.fmask = self.following > 0
        self.t_g = np.array([m.gains.t_start for m in ms])
        self.g0 = np.array([m.gains.start for m in ms]).T.copy()
        self.g1 = np.array([m.gains.target for m in ms]).T.copy()
        self.h0 = np.array([m.headway.h_start for m in ms])
        self.h1 = np.array([m.headway.h_target for m in ms])
        self.t_h = np.array([m.headway.t_start for m in ms])
        self.vr0 = np.array([m.v_ref_at_switch for m in ms])
        self.t_e = np.array([m.t_entry for m in ms])
        self.v_limit = np.array([m.v_limit for m in ms])
        packed = np.empty((_kernel.ROWS, len(ms)))
        packed[_kernel.FOL] = self.following
        packed[_kernel.TG] = self.t_g
        packed[_kernel.G0:_kernel.G0 + 4] = self.g0
        packed[_kernel.G1:_kernel.G1 + 4] = self.g1
        packed[_kernel.H0] = self.h0
        packed[_kernel.H1] = self.h1
        packed[_kernel.TH] = self.t_h
        packed[_kernel.VR0] = self.vr0
        packed[_kernel.TE] = self.t_e
        packed[_kernel.VLIM] = self.v_limit
        self.packed = packed


class Simulator:
    """Integrates one scenario.  ``compiled=False`` forces the numpy reference path."""

    def __init__(self, scenario: RingScenario, *, speed_margin: float = SPEED_MARGIN, compiled: bool = True):
        self.sc = sc = scenario
        self.n = n = sc.n
        self.gains = sc.gains
        self.params = sc.vehicle
        self.L = sc.vehicle.length
        self.P = sc.perimeter
        self.nonlinear = sc.fidelity is Fidelity.NONLINEAR
        self.lead = np.roll(np.arange(n), -1)
        self.wrap = np.zeros(n)
        self.wrap[-1] = self.P
        self.dt = sc.dt
        self.compiled = compiled and not self.nonlinear
        self._prm = _kernel.pack_params(sc.gains, self.L)
        self._cache = None
        if sc.plan is not None:
            for role in (Role.LEADER, Role.FOLLOWER):
                desired_headway(sc.plan, sc.perimeter, n, self.L, sc.gains.s0, sc.v_free, sc.gains.h, role)

        S = np.zeros((5, n))
        S[X] = [iv.x for iv in sc.initial]
        S[V] = [iv.v for iv in sc.initial]
        acc = np.array([iv.a for iv in sc.initial], dtype=float)
        S[A] = engine_force(S[V], acc, self.params) if self.nonlinear else acc
        S[VR] = S[V]
        self.t = 0.0
        self.S = S

        y, vl, in_range = self._geometry(S)
        modes = initial_modes(y, S[V], vl, in_range, sc.initial, sc.gains, sc.v_free, sc.v2v)
        self.sup = Supervisor(modes, sc.gains, sc.v_free, plan=sc.plan, perimeter=self.P, length=self.L,
                              v2v=sc.v2v, speed_margin=speed_margin)
        self._sched = _Schedule(self.sup)
        self.events: List[SwitchEvent] = []
        self.diagnostics: List[str] = []

    # -- dynamics ------------------------------------------------------------

    def _accel(self, S):
        return acceleration(S[V], S[A], self.params) if self.nonlinear else S[A]

    def _geometry(self, S):
        y = S[X, self.lead] + self.wrap - S[X] - self.L
        vl = S[V, self.lead]
        if self.n == 1:
            in_range = np.zeros(1, dtype=bool)
        elif self.sc.v2v:
            in_range = np.ones(self.n, dtype=bool)
        else:
            in_range = y <= self.sc.sensing_range
        return y, vl, in_range

    def evaluate(self, t: float, S: np.ndarray):
        """Time derivative of the stacked state plus the auxiliary signals at (t, S)."""
        g = self.gains
        sch = self._sched
        a = self._accel(S)
        v = S[V]
        y = S[X, self.lead] + self.wrap - S[X] - self.L
        v_l = v[self.lead]
        a_l = a[self.lead]
        h_now = sch.h1 + (sch.h0 - sch.h1) * np.exp(-g.lam * (t - sch.t_h))
        delta = spacing_error(y, v, h_now, g.s0)
        c_p, c_q, c_a, c_b = sch.following * (sch.g1 + (sch.g0 - sch.g1) * np.exp(-g.lam * (t - sch.t_g)))
        ref = np.where(sch.fmask, following_reference_speed(v_l, sch.vr0, g.lam, t - sch.t_e), S[VR])
        u, dw = jerk(a, v, ref, S[W], g, delta=delta, a_l=a_l, c_p=c_p, c_q=c_q, c_a=c_a, c_b=c_b)
        dvr = np.where(sch.fmask, 0.0, cruise_reference_derivative(S[VR], sch.v_limit, g))
        if self.nonlinear:
            theta = throttle(v, a, u, self.params)
            third = (theta - S[A]) / self.params.tau(v)
        else:
            third = u
        dS = np.stack((v, a, third, dw, dvr))
        return dS, (a, u, y, delta, ref, h_now, v_l)

    def _aux(self, t: float, S: np.ndarray):
        if not self.compiled:
            return self.evaluate(t, S)[1]
        aux = _kernel.auxiliary(t, S, self._sched.packed, self.lead, self.wrap, self._prm)
        K = _kernel
        return S[A], aux[K.AU], aux[K.AY], aux[K.ADELTA], aux[K.AREF], aux[K.AH], aux[K.AVL]

    def _rk4(self, t: float, S: np.ndarray, h: float) -> np.ndarray:
        if self.compiled:
            return _kernel.rk4(t, S, h, self._sched.packed, self.lead, self.wrap, self._prm)
        k1 = self.evaluate(t, S)[0]
        k2 = self.evaluate(t + 0.5 * h, S + 0.5 * h * k1)[0]
        k3 = self.evaluate(t + 0.5 * h, S + 0.5 * h * k2)[0]
        k4 = self.evaluate(t + h, S + h * k3)[0]
        return S + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _snapshot(self, t, S, aux=None) -> Snapshot:
        if aux is None:
            aux = self._aux(t, S)
        _, _, y, delta, ref, _, v_l = aux
        in_range = self._geometry(S)[2]
        return Snapshot(y=y, v=S[V], v_l=v_l, v_r=ref, delta=delta, in_range=in_range)

    def _pending(self, t, S, aux=None) -> bool:
        return self.sup.pending(t, self._snapshot(t, S, aux))

    def _apply(self, t: float, S: np.ndarray) -> np.ndarray:
        snap = self._snapshot(t, S)
        before = list(self.sup.modes)
        decisions: List[SwitchDecision] = self.sup.resolve(t, snap)
        S = S.copy()
        for d in decisions:
            i = d.vehicle - 1
            self.events.append(SwitchEvent(t, d.vehicle, before[i].mode, d.new_mode, d.reason.value,
                                           float(snap.delta[i]), self.sup.modes[i].v_limit))
            if before[i].mode != d.new_mode:
                S[W, i] = 0.0
                S[VR, i] = snap.v_r[i]
                before[i] = self.sup.modes[i]
                log.debug("t=%.4f vehicle %d -> %s (%s)", t, d.vehicle, d.new_mode.token, d.reason.value)
        self._sched = _Schedule(self.sup)
        return S

    def _check(self, t, S):
        if not np.all(np.isfinite(S)):
            bad = [int(i) + 1 for i in np.nonzero(~np.all(np.isfinite(S), axis=0))[0]]
            raise SimulationError(f"non-finite state at t={t:.4f} for vehicles {bad}", t, bad)

    # -- stepping ------------------------------------------------------------

    def advance(self, t_next: float) -> None:
        """Integrate from self.t to t_next, locating and applying any switch inside the interval."""
        S, tau = self.S, self.t
        for _ in range(MAX_EVENTS_PER_STEP):
            h = t_next - tau
            S1 = self._rk4(tau, S, h)
            self._check(t_next, S1)
            aux = self._aux(t_next, S1)
            if not self._pending(t_next, S1, aux):
                S = S1
                self._cache = (t_next, self._sched.version, aux)
                break
            lo, hi = 0.0, h
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if self._pending(tau + mid, self._rk4(tau, S, mid)):
                    hi = mid
                else:
                    lo = mid
            S = self._rk4(tau, S, hi)
            tau = tau + hi
            S = self._apply(tau, S)
            if tau >= t_next:
                break
        else:
            raise SimulationError(f"too many switch events in one step near t={tau:.4f}", tau)
        self.S, self.t = S, t_next

    def _observe(self):
        """Settle the supervisor at the current grid point; returns the auxiliary signals there."""
        t = self.t
        c = self._cache
        if c is not None and c[0] == t and c[1] == self._sched.version:
            aux = c[2]
        else:
            if self._pending(t, self.S):
                self.S = self._apply(t, self.S)
            aux = self._aux(t, self.S)
        self.sup.track(t, self._snapshot(t, self.S, aux))
        return aux

    def step(self, dt: Optional[float] = None) -> np.ndarray:
        """Advance the world by one step of ``dt`` (default: the scenario's) and return the new state."""
        dt = self.dt if dt is None else dt
        if not dt > 0:
            raise ValueError("dt must be > 0")
        if self._cache is None or self._cache[0] != self.t:
            self._observe()
        self.advance(self.t + dt)
        self._observe()
        return self.S

    def run(self) -> TrajectoryLog:
        sc = self.sc
        steps = int(round(sc.t_end / sc.dt))
        n = self.n
        out = {k: np.empty((steps + 1, n)) for k in ("x", "v", "a", "u", "w", "v_r", "y", "delta",
                                                     "v_limit", "h_now")}
        mode = np.empty((steps + 1, n), dtype=np.int8)
        tgrid = np.arange(steps + 1) * sc.dt
        start = time.perf_counter()
        for k in range(steps + 1):
            t = self.t
            a, u, y, delta, ref, h_now, _ = self._observe()
            out["x"][k] = self.S[X]
            out["v"][k] = self.S[V]
            out["a"][k] = a
            out["u"][k] = u
            out["w"][k] = self.S[W]
            out["v_r"][k] = ref
            out["y"][k] = y
            out["delta"][k] = delta
            out["v_limit"][k] = self._sched.v_limit
            out["h_now"][k] = h_now
            mode[k] = self._sched.following
            if np.any(self.S[V] < 0) and not self.diagnostics:
                self.diagnostics.append(f"negative speed at t={t:.2f}")
                log.warning("negative speed at t=%.2f", t)
            if k < steps:
                self.advance(float(tgrid[k + 1]))
        runtime = time.perf_counter() - start
        return TrajectoryLog(t=tgrid, mode=mode, events=list(self.events), perimeter=self.P, length=self.L,
                             name=sc.name, runtime=runtime, diagnostics=list(self.diagnostics), gains=sc.gains,
                             **out)


def run(scenario: RingScenario, **kw) -> TrajectoryLog:
    return Simulator(scenario, **kw).run()
