"""Closed-form equilibria, the fundamental diagram and stability checks of
the cruise, following and coordinated closed loops.

Transfer functions are handled as coefficient lists in descending powers
of s.  Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize, signal

from .core import ConfigError, ControllerGains, VehicleParams

HURWITZ_MARGIN = 1e-9
MAGNITUDE_TOL = 1e-9
IMPULSE_EPS = 1e-6

_DEFAULT_GAINS = ControllerGains()
_DEFAULT_VEHICLE = VehicleParams()


# -- equilibria and the fundamental diagram ----------------------------------

def critical_count(P: float, h: float, v_free: float, s0: float, L: float) -> float:
    """Vehicle count at which the ring stops being able to carry everyone at V_f (may be fractional)."""
    return P / (h * v_free + s0 + L)


def equilibrium_speed(n: int, P: float, h: float, v_free: float, s0: float, L: float) -> float:
    if not P > n * L:
        raise ConfigError("vehicles do not fit on ring")
    return min(v_free, (P / n - s0 - L) / h)


def inter_platoon_distance(P: float, n: int, m: int, L: float, h: float, s0: float, v_free: float) -> float:
    """Gap ahead of each of ``m`` equal platoons when the free space is shared evenly between them."""
    safe = h * v_free + s0
    return n / m * (P / n - L - safe) + safe


class Regime(str, enum.Enum):
    FREE_FLOW = "FreeFlow"
    CONGESTED = "Congested"


@dataclass(frozen=True)
class FundamentalDiagramPoint:
    rho: float
    q_star: float
    v_star: float
    regime: Regime


@dataclass(frozen=True)
class FundamentalDiagram:
    points: Tuple[FundamentalDiagramPoint, ...]
    rho_c: float
    capacity: float
    h: float
    v_free: float


def fundamental_diagram(rho_grid: Sequence[float], *, h: float = _DEFAULT_GAINS.h, v_free: float = 29.0,
                        s0: float = _DEFAULT_GAINS.s0, length: float = _DEFAULT_VEHICLE.length
                        ) -> FundamentalDiagram:
    """Equilibrium flow/speed on the triangular diagram at each density of ``rho_grid``."""
    rho = np.asarray(rho_grid, dtype=float)
    if rho.size == 0:
        raise ConfigError("density grid is empty")
    if np.any(rho <= 0) or np.any(rho >= 1.0 / length):
        raise ConfigError(f"densities must lie in (0, 1/L) = (0, {1.0 / length:.6g})")
    spacing = h * v_free + s0 + length
    rho_c = 1.0 / spacing
    points = []
    for r in rho:
        r = float(r)
        if r < rho_c:
            q, regime = v_free * r, Regime.FREE_FLOW
        else:
            q, regime = (1.0 - r * (s0 + length)) / h, Regime.CONGESTED
        points.append(FundamentalDiagramPoint(r, q, q / r, regime))
    return FundamentalDiagram(tuple(points), rho_c, v_free / spacing, h, v_free)


# -- polynomial helpers --------------------------------------------------------

def poly_roots(coeffs: Sequence[float]) -> np.ndarray:
    """Roots from the eigenvalues of the companion matrix (LAPACK balances it first)."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "f")
    if c.size < 2:
        return np.empty(0, dtype=complex)
    return np.roots(c).astype(complex)


def is_hurwitz(coeffs: Sequence[float], margin: float = HURWITZ_MARGIN) -> bool:
    r = poly_roots(coeffs)
    return bool(r.size == 0 or r.real.max() < -margin)


def freq_response(num: Sequence[float], den: Sequence[float], w) -> np.ndarray:
    s = 1j * np.asarray(w, dtype=float)
    return np.polyval(num, s) / np.polyval(den, s)


def magnitude_sweep(num: Sequence[float], den: Sequence[float], w_grid=None) -> Tuple[float, float]:
    """Largest |N(jw)/D(jw)| over w >= 0, as (max, argmax).

    The default grid is 2048 log-spaced points on [1e-4, 1e4] rad/s plus
    w = 0; the coarse maximum is polished with a golden-section search.
    """
    if not is_hurwitz(den):
        raise ValueError("magnitude sweep needs a Hurwitz denominator")
    if w_grid is None:
        w_grid = np.concatenate(([0.0], np.logspace(-4, 4, 2048)))
    w = np.asarray(w_grid, dtype=float)
    mag = np.abs(freq_response(num, den, w))
    k = int(np.argmax(mag))
    best, arg = float(mag[k]), float(w[k])
    if 0 < k < len(w) - 1 and w[k - 1] > 0:
        f = lambda lw: -abs(freq_response(num, den, [math.exp(lw)])[0])
        lo, mid, hi = math.log(w[k - 1]), math.log(w[k]), math.log(w[k + 1])
        try:
            res = optimize.minimize_scalar(f, bracket=(lo, mid, hi), method="golden", tol=1e-12)
            if -res.fun > best:
                best, arg = float(-res.fun), float(math.exp(res.x))
        except ValueError:
            pass  # flat neighbourhood, the grid value stands
    return best, arg


@dataclass(frozen=True)
class ImpulseCheck:
    nonnegative: bool
    first_negative: Optional[float]
    minimum: float


def impulse_nonneg(num: Sequence[float], den: Sequence[float], horizon: float = 600.0, dt: float = 0.01,
                   eps: float = IMPULSE_EPS) -> ImpulseCheck:
    """Integrate the impulse response of a strictly proper N/D with RK4 and look for g(t) < -eps."""
    if not is_hurwitz(den):
        raise ValueError("impulse check needs a Hurwitz denominator")
    A, B, C, D = signal.tf2ss(num, den)
    if np.any(np.abs(D) > 0):
        raise ValueError("impulse check needs a strictly proper transfer function")
    # RK4 applied to x' = Ax is the fixed linear map below.
    hA = dt * A
    step = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, 5):
        term = term @ hA / k
        step = step + term
    x = B[:, 0].copy()
    c = C[0]
    steps = int(round(horizon / dt))
    g = np.empty(steps + 1)
    for k in range(steps + 1):
        g[k] = c @ x
        x = step @ x
    neg = np.nonzero(g < -eps)[0]
    first = float(neg[0] * dt) if neg.size else None
    return ImpulseCheck(neg.size == 0, first, float(g.min()))


# -- stability reports ---------------------------------------------------------

@dataclass
class StabilityReport:
    """Outcome of one transfer-function check.

    ``verdict`` is the conjunction of the Hurwitz test, the C1/C2 inequalities
    (following loops) and the magnitude bound (where it applies).  The
    impulse check is advisory and never changes the verdict.
    """

    name: str
    numerator: Tuple[float, ...]
    denominator: Tuple[float, ...]
    roots: np.ndarray
    hurwitz: bool
    c1: Optional[float] = None
    c2_minus_cv2: Optional[float] = None
    cruise_margin: Optional[float] = None
    max_magnitude: Optional[float] = None
    argmax_w: Optional[float] = None
    magnitude_required: bool = False
    impulse: Optional[ImpulseCheck] = None
    notes: List[str] = field(default_factory=list)

    @property
    def magnitude_ok(self) -> Optional[bool]:
        if self.max_magnitude is None:
            return None
        return self.max_magnitude <= 1.0 + MAGNITUDE_TOL

    @property
    def verdict(self) -> bool:
        ok = self.hurwitz
        if self.c1 is not None:
            ok = ok and self.c1 >= 0
        if self.c2_minus_cv2 is not None:
            ok = ok and self.c2_minus_cv2 >= 0
        if self.magnitude_required:
            ok = ok and bool(self.magnitude_ok)
        return ok

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "numerator": list(self.numerator),
            "denominator": list(self.denominator),
            "roots": [[float(r.real), float(r.imag)] for r in self.roots],
            "hurwitz": self.hurwitz,
            "verdict": self.verdict,
        }
        for key in ("c1", "c2_minus_cv2", "cruise_margin", "max_magnitude", "argmax_w"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.impulse is not None:
            d["impulse_nonnegative"] = self.impulse.nonnegative
            d["impulse_first_negative"] = self.impulse.first_negative
        if self.notes:
            d["notes"] = list(self.notes)
        return d

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.verdict else 'FAIL'}",
                 f"  denominator  {_fmt_poly(self.denominator)}",
                 f"  numerator    {_fmt_poly(self.numerator)}",
                 "  roots        " + ", ".join(_fmt_root(r) for r in self.roots),
                 f"  hurwitz      {self.hurwitz}"]
        if self.cruise_margin is not None:
            lines.append(f"  K_a*C_v+C_s  {self.cruise_margin:.6g}")
        if self.c1 is not None:
            lines.append(f"  C1           {self.c1:.6g}")
        if self.c2_minus_cv2 is not None:
            lines.append(f"  C2 - C_v^2   {self.c2_minus_cv2:.6g}")
        if self.max_magnitude is not None:
            lines.append(f"  max|H(jw)|   {self.max_magnitude:.12g} at w={self.argmax_w:.6g} rad/s")
        if self.impulse is not None:
            tail = "" if self.impulse.nonnegative else f" (first negative at t={self.impulse.first_negative:.2f} s)"
            lines.append(f"  impulse>=0   {self.impulse.nonnegative}{tail} [advisory]")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def _fmt_poly(c) -> str:
    return "[" + ", ".join(f"{x:.6g}" for x in c) + "]"


def _fmt_root(r) -> str:
    return f"{r.real:.6g}" if abs(r.imag) < 1e-12 else f"{r.real:.6g}{r.imag:+.6g}j"


def cruise_polynomials(g: ControllerGains):
    return (g.c_v, g.c_s), (1.0, -g.k_a, g.c_v, g.c_s)


def following_polynomials(g: ControllerGains, h: Optional[float] = None):
    """(N, F) of the spacing-error transfer function between consecutive followers."""
    h = g.h if h is None else h
    num = (g.c_v, g.c_p + g.c_s, g.c_q)
    den = (1.0, -g.k_a, h * g.c_p + g.c_v, g.c_p + h * g.c_q + g.c_s, g.c_q)
    return num, den


def following_inequalities(g: ControllerGains, h: Optional[float] = None) -> Tuple[float, float]:
    """(C1, C2 - C_v^2) of the sufficient string-attenuation test."""
    h = g.h if h is None else h
    c1 = g.k_a ** 2 - 2.0 * (h * g.c_p + g.c_v)
    c2 = (h * g.c_p + g.c_v) ** 2 + 2.0 * g.c_q + 2.0 * g.k_a * (g.c_p + h * g.c_q + g.c_s)
    return c1, c2 - g.c_v ** 2


def _report(name, num, den, *, magnitude_required, impulse, horizon, **extra) -> StabilityReport:
    roots = poly_roots(den)
    hurwitz = bool(roots.size == 0 or roots.real.max() < -HURWITZ_MARGIN)
    rep = StabilityReport(name, tuple(float(c) for c in num), tuple(float(c) for c in den), roots, hurwitz,
                          magnitude_required=magnitude_required, **extra)
    if hurwitz:
        rep.max_magnitude, rep.argmax_w = magnitude_sweep(num, den)
        if impulse:
            rep.impulse = impulse_nonneg(num, den, horizon=horizon)
    else:
        rep.notes.append("denominator not Hurwitz; frequency and impulse checks skipped")
    return rep


def cruise_stability(gains: ControllerGains, *, impulse: bool = True, horizon: float = 600.0) -> StabilityReport:
    """Speed-tracking loop K(s).  Verdict is the Hurwitz test; |K| and k(t) >= 0 are reported only."""
    num, den = cruise_polynomials(gains)
    rep = _report("K(s) cruise", num, den, magnitude_required=False, impulse=impulse, horizon=horizon,
                  cruise_margin=gains.k_a * gains.c_v + gains.c_s)
    return rep


def following_stability(gains: ControllerGains, h_eff: Optional[float] = None, *, impulse: bool = True,
                        horizon: float = 600.0, name: str = "G(s) following") -> StabilityReport:
    num, den = following_polynomials(gains, h_eff)
    c1, c2 = following_inequalities(gains, h_eff)
    return _report(name, num, den, magnitude_required=True, impulse=impulse, horizon=horizon,
                   c1=c1, c2_minus_cv2=c2)


def attenuation_margin_poly(gains: ControllerGains, h: Optional[float] = None) -> np.ndarray:
    """Coefficients in w^2 (descending) of |F(jw)|^2 - |N(jw)|^2.

    Nonnegative for all w iff |G(jw)| <= 1; the w^6 and w^4 coefficients are
    C1 and C2 - C_v^2.
    """
    g = gains
    h = g.h if h is None else h
    c1, c2m = following_inequalities(g, h)
    return np.array([1.0, c1, c2m, 2.0 * h * g.c_q * g.c_s + (h * g.c_q) ** 2, 0.0])


def coordinated_gain_rescale(base: ControllerGains, h_target: float) -> Tuple[float, float]:
    """(C_p, C_q) for headway ``h_target`` that keep h*C_p and h*C_q unchanged."""
    if not base.k_a * base.c_p + base.c_q < 0:
        raise ConfigError("gain rescaling requires K_a*C_p + C_q < 0 "
                          f"(got {base.k_a * base.c_p + base.c_q:.6g})")
    if not h_target > 0:
        raise ConfigError("h_target must be > 0")
    return base.h * base.c_p / h_target, base.h * base.c_q / h_target


@dataclass
class CascadeReport:
    h_m: float
    c_p: float
    c_q: float
    h_m_report: StabilityReport
    base_report: StabilityReport

    @property
    def verdict(self) -> bool:
        return self.h_m_report.verdict and self.base_report.verdict

    def summary(self) -> str:
        return "\n".join([
            f"cascade H_m(s)G(s) at h_m={self.h_m:.6g}: {'PASS' if self.verdict else 'FAIL'}",
            f"  rescaled C_p={self.c_p:.6g} C_q={self.c_q:.6g}",
            self.h_m_report.summary(), self.base_report.summary()])

    def to_dict(self) -> dict:
        return {"h_m": self.h_m, "c_p": self.c_p, "c_q": self.c_q, "verdict": self.verdict,
                "h_m_report": self.h_m_report.to_dict(), "base_report": self.base_report.to_dict()}


def coordination_stability(base: ControllerGains, h_m: float, *, impulse: bool = False) -> CascadeReport:
    """Check the leader loop H_m(s) with rescaled gains, and the follower loop G(s) it feeds."""
    c_p, c_q = coordinated_gain_rescale(base, h_m)
    scaled = replace(base, c_p=c_p, c_q=c_q)
    hm = following_stability(scaled, h_m, impulse=impulse, name=f"H_m(s) leader at h_m={h_m:.6g}")
    g = following_stability(base, impulse=impulse)
    return CascadeReport(h_m, c_p, c_q, hm, g)


# -- string attenuation on simulated logs ---------------------------------------

@dataclass
class AttenuationReport:
    vehicles: Tuple[int, ...]
    delta_inf: np.ndarray
    delta_l2: np.ndarray
    max_abs_a: np.ndarray
    failures: List[str]
    tol: float

    @property
    def verdict(self) -> bool:
        return not self.failures


def string_attenuation_metrics(log, platoon: Sequence[int], tol: float = 1e-3, t_from: float = 0.0,
                               t_to: float = math.inf) -> AttenuationReport:
    """Error norms along a platoon and whether any grows upstream.

    ``platoon`` lists 1-based ids from the tail to the leader, e.g. (4, 5, 6, 7, 8).
    Spacing norms are taken for the followers only (the leader's spacing
    error is not regulated while it cruises); max|a| covers every member.
    Each upstream vehicle may exceed the one ahead of it by at most ``tol``.
    Norms are taken over t_from <= t <= t_to.
    """
    ids = tuple(int(i) for i in platoon)
    cols = [i - 1 for i in ids]
    t = np.asarray(log.t)
    keep = (t >= t_from) & (t <= t_to)
    t = t[keep]
    d = np.asarray(log.delta)[keep][:, cols]
    a = np.asarray(log.a)[keep][:, cols]
    d_inf = np.abs(d).max(axis=0) if len(t) else np.zeros(len(ids))
    d_l2 = np.sqrt(integrate.trapezoid(d * d, t, axis=0)) if len(t) > 1 else np.zeros(len(ids))
    a_max = np.abs(a).max(axis=0) if len(t) else np.zeros(len(ids))
    failures = []
    for k in range(len(ids) - 1):
        up, down = ids[k], ids[k + 1]
        if a_max[k] > a_max[k + 1] + tol:
            failures.append(f"max|a| grows from vehicle {down} to {up}: {a_max[k + 1]:.6g} -> {a_max[k]:.6g}")
        if k + 1 < len(ids) - 1 and d_l2[k] > d_l2[k + 1] + tol:
            failures.append(f"||delta||_2 grows from vehicle {down} to {up}: {d_l2[k + 1]:.6g} -> {d_l2[k]:.6g}")
    return AttenuationReport(ids, d_inf, d_l2, a_max, failures, tol)
