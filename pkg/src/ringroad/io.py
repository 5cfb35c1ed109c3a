"""Scenario files (TOML) and CSV export of trajectories and fundamental diagrams.

Scenario file layout::

    name = "highdensity_n8"
    perimeter = 320.0
    v_free = 29.0
    sensing_range = 120.0
    v2v = false
    fidelity = "linear"          # or "nonlinear"

    [integration]
    dt = 0.01
    t_end = 300.0

    [vehicle]                    # optional, VehicleParams fields
    length = 4.5

    [gains]                      # optional, ControllerGains fields
    h = 1.5

    [initial]
    gaps = [4, 4, 100, 4, 4, 4, 4, 160]   # or positions = [...]
    speed = 0.0                           # or speeds = [...]
    modes = ["auto", "auto", ...]         # optional: auto | cruise | following
    settled = true                        # false: initial followers ramp their gains from zero

    [plan]                       # optional coordination plan
    kind = "m_platoon_symmetrical"
    leaders = [2, 4]
    alpha = 0.8
    issue_time = 10.0
"""

from __future__ import annotations

import csv
import dataclasses
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import (
    ConfigError, ControllerGains, CoordinationPlan, Fidelity, InitialVehicle, Mode, PlanKind, RingScenario,
    VehicleParams, positions_from_gaps,
)

TRAJECTORY_HEADER = ("t", "vehicle", "x", "v", "a", "u", "w", "v_r", "mode", "y", "delta", "V_s", "h_now")
FD_HEADER = ("rho", "v_star", "q_star", "regime")

_TOP_KEYS = {"name", "notes", "perimeter", "v_free", "sensing_range", "v2v", "fidelity",
             "integration", "vehicle", "gains", "initial", "plan"}
_VEHICLE_KEYS = {"mass", "drag", "friction_coeff", "engine_tau", "length"}
_INITIAL_KEYS = {"gaps", "positions", "speed", "speeds", "accelerations", "modes", "settled"}
_PLAN_KEYS = {"kind", "leaders", "alpha", "issue_time"}
_MODE_TOKENS = {"auto": None, "cruise": Mode.CRUISE, "following": Mode.FOLLOWING}


def _check_keys(table: Dict[str, Any], allowed: Iterable[str], where: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}{key}'")


def _number(table: Dict[str, Any], key: str, where: str, default=None) -> Optional[float]:
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"key '{where}{key}' must be a number, got {val!r}")
    return float(val)


def _numbers(table: Dict[str, Any], key: str, where: str) -> Optional[list]:
    if key not in table:
        return None
    val = table[key]
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                            for v in val):
        raise ConfigError(f"key '{where}{key}' must be a list of numbers")
    return [float(v) for v in val]


def _section(data: Dict[str, Any], key: str) -> Dict[str, Any]:
    sec = data.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"key '{key}' must be a table")
    return sec


def scenario_from_dict(data: Dict[str, Any]) -> RingScenario:
    _check_keys(data, _TOP_KEYS, "")
    integ = _section(data, "integration")
    _check_keys(integ, {"dt", "t_end"}, "integration.")

    veh_tab = _section(data, "vehicle")
    _check_keys(veh_tab, _VEHICLE_KEYS, "vehicle.")
    vehicle = VehicleParams(**{k: _number(veh_tab, k, "vehicle.") for k in veh_tab})

    gain_tab = _section(data, "gains")
    _check_keys(gain_tab, {f.name for f in dataclasses.fields(ControllerGains)}, "gains.")
    gains = ControllerGains(**{k: _number(gain_tab, k, "gains.") for k in gain_tab})

    init = _section(data, "initial")
    _check_keys(init, _INITIAL_KEYS, "initial.")
    gaps = _numbers(init, "gaps", "initial.")
    xs = _numbers(init, "positions", "initial.")
    if (gaps is None) == (xs is None):
        raise ConfigError("exactly one of 'initial.gaps' and 'initial.positions' is required")
    if xs is None:
        xs = positions_from_gaps(gaps, vehicle.length)
    n = len(xs)
    if n == 0:
        raise ConfigError("key 'initial' must describe at least one vehicle")
    speeds = _numbers(init, "speeds", "initial.")
    if speeds is None:
        speeds = [_number(init, "speed", "initial.", 0.0)] * n
    accs = _numbers(init, "accelerations", "initial.") or [0.0] * n
    tokens = init.get("modes", ["auto"] * n)
    if not isinstance(tokens, list) or any(t not in _MODE_TOKENS for t in tokens):
        raise ConfigError("key 'initial.modes' must list auto|cruise|following")
    for key, seq in (("speeds", speeds), ("accelerations", accs), ("modes", tokens)):
        if len(seq) != n:
            raise ConfigError(f"key 'initial.{key}' has {len(seq)} entries for {n} vehicles")
    settled = init.get("settled", True)
    if not isinstance(settled, bool):
        raise ConfigError("key 'initial.settled' must be true or false")
    initial = tuple(InitialVehicle(x=x, v=v, a=a, mode=_MODE_TOKENS[m], settled=settled)
                    for x, v, a, m in zip(xs, speeds, accs, tokens))

    plan = None
    if "plan" in data:
        ptab = _section(data, "plan")
        _check_keys(ptab, _PLAN_KEYS, "plan.")
        try:
            kind = PlanKind(ptab.get("kind"))
        except ValueError:
            raise ConfigError(f"key 'plan.kind' must be one of {[k.value for k in PlanKind]}") from None
        leaders = ptab.get("leaders", [])
        if not isinstance(leaders, list) or not all(isinstance(i, int) and not isinstance(i, bool)
                                                    for i in leaders):
            raise ConfigError("key 'plan.leaders' must be a list of vehicle ids")
        plan = CoordinationPlan(kind, tuple(leaders), alpha=_number(ptab, "alpha", "plan.", 0.8),
                                issue_time=_number(ptab, "issue_time", "plan.", 0.0))

    try:
        fidelity = Fidelity(data.get("fidelity", "linear"))
    except ValueError:
        raise ConfigError("key 'fidelity' must be 'linear' or 'nonlinear'") from None
    v2v = data.get("v2v", False)
    if not isinstance(v2v, bool):
        raise ConfigError("key 'v2v' must be true or false")
    perimeter = _number(data, "perimeter", "")
    if perimeter is None:
        raise ConfigError("key 'perimeter' is required")
    return RingScenario(
        perimeter=perimeter, initial=initial, v_free=_number(data, "v_free", "", 29.0), gains=gains,
        vehicle=vehicle, sensing_range=_number(data, "sensing_range", "", 120.0), v2v=v2v, plan=plan,
        dt=_number(integ, "dt", "integration.", 0.01), t_end=_number(integ, "t_end", "integration.", 300.0),
        fidelity=fidelity, name=str(data.get("name", "scenario")), notes=str(data.get("notes", "")))


def load_scenario(path: Union[str, Path]) -> RingScenario:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return scenario_from_dict(data)


def load_gains(path: Union[str, Path]) -> ControllerGains:
    """Gains from the [gains] table of a TOML file (a scenario file works too)."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    tab = _section(data, "gains")
    _check_keys(tab, {f.name for f in dataclasses.fields(ControllerGains)}, "gains.")
    return ControllerGains(**{k: _number(tab, k, "gains.") for k in tab})


def bundled_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("ringroad.data").iterdir() if p.name.endswith(".toml"))


def load_bundled(name: str) -> RingScenario:
    res = resources.files("ringroad.data") / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"no bundled scenario '{name}' (have: {', '.join(bundled_names())})")
    with res.open("rb") as fh:
        return scenario_from_dict(tomllib.load(fh))


def resolve_scenario(ref: str) -> RingScenario:
    """A path to a TOML file, or the name of a bundled scenario."""
    p = Path(ref)
    if p.suffix == ".toml" or p.exists():
        if not p.is_file():
            raise ConfigError(f"scenario file not found: {ref}")
        return load_scenario(p)
    return load_bundled(ref)


def write_trajectory_csv(log, path, stride: int = 1) -> None:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    tokens = [m.token for m in Mode]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k in range(0, len(log.t), stride):
            t = f"{log.t[k]:.9g}"
            for i in range(log.n):
                w.writerow((t, i + 1, *(f"{arr[k, i]:.9g}" for arr in (log.x, log.v, log.a, log.u, log.w,
                                                                          log.v_r)),
                            tokens[log.mode[k, i]],
                            *(f"{arr[k, i]:.9g}" for arr in (log.y, log.delta, log.v_limit, log.h_now))))


def write_fd_csv(diagram, path, simulated: Iterable = ()) -> None:
    """Analytic points, then any simulated (rho, v, q) triples tagged with regime 'Simulated'."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FD_HEADER)
        for p in diagram.points:
            w.writerow((f"{p.rho:.9g}", f"{p.v_star:.9g}", f"{p.q_star:.9g}", p.regime.value))
        for rho, v, q in simulated:
            w.writerow((f"{rho:.9g}", f"{v:.9g}", f"{q:.9g}", "Simulated"))
