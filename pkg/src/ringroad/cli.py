"""Command-line front end.

    ringroad run SCENARIO [--out DIR] [--dt S] [--t-end S] [--stride N] [--h S] [--v2v]
    ringroad fd [--h S] [--v2v] [--rho LIST | --counts A:B] [--simulate] [--out FILE]
    ringroad check-gains [--gains FILE] [--k-a X ...] [--h S] [--h-target S]

Flags override values from scenario or gain files.  Exit status: 0 clean,
1 configuration or integration error, 2 safety violation (run) or failed
verdict (check-gains exits 1).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import analysis, io, monitor, scenarios
from .core import ConfigError, ControllerGains
from .sim import SimulationError, Simulator, TrajectoryLog

log = logging.getLogger("ringroad")

OUT_ENV = "RINGROAD_OUT"
V2V_HEADWAY = 0.6


@dataclass
class RunReport:
    scenario: str
    steady: monitor.SteadyStateReport
    violations: int
    warnings: int
    attenuation: List[analysis.AttenuationReport]
    runtime: float
    seed_note: str = ""
    switches: List[str] = field(default_factory=list)

    @property
    def attenuation_ok(self) -> bool:
        return all(r.verdict for r in self.attenuation)

    def to_dict(self) -> dict:
        s = self.steady
        return {
            "scenario": self.scenario,
            "converged": s.converged,
            "settle_time": s.settle_time,
            "mean_speed": s.mean_speed,
            "speeds": s.speeds.tolist(),
            "gaps": s.gaps.tolist(),
            "configuration": s.configuration,
            "safety_violations": self.violations,
            "safety_warnings": self.warnings,
            "attenuation_ok": self.attenuation_ok,
            "attenuation": [{"platoon": list(r.vehicles), "failures": r.failures} for r in self.attenuation],
            "switches": self.switches,
            "runtime_s": self.runtime,
            "seed_note": self.seed_note,
        }

    def text(self) -> str:
        s = self.steady
        lines = [f"scenario      {self.scenario}",
                 f"converged     {s.converged}" + (f" (settled at t={s.settle_time:.2f} s)" if s.converged else ""),
                 f"mean speed    {s.mean_speed:.4f} m/s",
                 "speeds        " + " ".join(f"{v:.4f}" for v in s.speeds),
                 "gaps          " + " ".join(f"{y:.3f}" for y in s.gaps),
                 f"configuration {s.configuration}",
                 f"safety        {self.violations} violation(s), {self.warnings} warning(s)",
                 f"attenuation   {'ok' if self.attenuation_ok else 'FAILED'}"]
        for r in self.attenuation:
            lines.extend(f"  {msg}" for msg in r.failures)
        lines.extend(f"switch        {sw}" for sw in self.switches)
        lines.append(f"runtime       {self.runtime:.2f} s")
        return "\n".join(lines)


def build_report(lg: TrajectoryLog, seed_note: str = "") -> RunReport:
    steady = monitor.detect_steady_state(lg)
    events = monitor.safety_monitor(lg)
    gains = lg.gains or ControllerGains()
    start = monitor.partition(lg.mode[0], lg.y[0], lg.h_now[0], gains)
    att = []
    for p in start:
        if p.leader is None or len(p.members) < 2:
            continue
        cols = [i - 1 for i in p.members]
        # judge the platoon as formed at t=0, up to the first coordinator action on it
        moved = np.any((lg.h_now[:, cols] != lg.h_now[0, cols]) | (lg.v_limit[:, cols] != lg.v_limit[0, cols]),
                       axis=1)
        t_to = float(lg.t[np.argmax(moved) - 1]) if moved.any() else math.inf
        att.append(analysis.string_attenuation_metrics(lg, p.members, t_to=t_to))
    switches = [f"t={e.t:.3f} vehicle {e.vehicle} {e.old_mode.token} -> {e.new_mode.token} ({e.reason})"
                for e in lg.switches()]
    return RunReport(lg.name, steady, sum(e.severity == "violation" for e in events),
                     sum(e.severity == "warning" for e in events), att, lg.runtime, seed_note, switches)


def _out_dir(arg: Optional[str]) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV, "ringroad_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    sc = io.resolve_scenario(args.scenario)
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.h is not None:
        changes["gains"] = replace(sc.gains, h=args.h)
    if args.v2v:
        changes["v2v"] = True
    if changes:
        sc = replace(sc, **changes)
        sc.validate()
    lg = Simulator(sc).run()
    report = build_report(lg, args.seed_note or "")
    out = _out_dir(args.out)
    lg.to_csv(out / f"{sc.name}_trajectory.csv", stride=args.stride)
    (out / f"{sc.name}_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    print(report.text())
    return 2 if report.violations else 0


def _parse_counts(spec: str) -> List[int]:
    lo, _, hi = spec.partition(":")
    a, b = int(lo), int(hi or lo)
    return list(range(a, b + 1))


def _simulate_point(job):
    n, perimeter, gains, t_end = job
    sc = replace(scenarios.packed(n, perimeter=perimeter, gains=gains), t_end=t_end)
    lg = Simulator(sc).run()
    return n, float(lg.v[-1].mean())


def simulate_fd(rhos: Sequence[float], perimeter: float, gains: ControllerGains, t_end: float,
                workers: int = 1) -> list:
    """(rho, v, q) from a full run for each density that puts an integer number of vehicles on the ring."""
    jobs = []
    for rho in rhos:
        n = rho * perimeter
        if abs(n - round(n)) < 1e-9 and round(n) >= 1:
            jobs.append((int(round(n)), perimeter, gains, t_end))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_point, jobs))
    else:
        results = [_simulate_point(j) for j in jobs]
    return [(n / perimeter, v, n / perimeter * v) for n, v in results]


def cmd_fd(args) -> int:
    h = args.h if args.h is not None else (V2V_HEADWAY if args.v2v else ControllerGains().h)
    gains = replace(ControllerGains(), h=h)
    L = args.length
    if args.rho is not None:
        rhos = [float(r) for r in args.rho.split(",") if r.strip()]
    else:
        counts = _parse_counts(args.counts) if args.counts else \
            range(1, int(math.ceil(args.perimeter / (gains.s0 + L))))
        rhos = [n / args.perimeter for n in counts]
    fd = analysis.fundamental_diagram(rhos, h=h, v_free=args.v_free, s0=gains.s0, length=L)
    n_c = analysis.critical_count(args.perimeter, h, args.v_free, gains.s0, L)
    print(f"h={h:g} s  rho_c={fd.rho_c:.12g} veh/m  capacity={fd.capacity:.12g} veh/s  n_c={n_c:.6g}")
    simulated = []
    if args.simulate:
        simulated = simulate_fd(rhos, args.perimeter, gains, args.t_end, args.workers)
        analytic = {round(p.rho * args.perimeter): p for p in fd.points}
        for rho, v, q in simulated:
            ref = analytic[round(rho * args.perimeter)].q_star
            print(f"n={round(rho * args.perimeter):3d} rho={rho:.6f} q_sim={q:.6f} q*={ref:.6f} "
                  f"err={abs(q - ref) / ref:.3%}")
    out = Path(args.out) if args.out else _out_dir(None) / "fundamental_diagram.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_fd_csv(fd, out, simulated)
    return 0


_GAIN_FLAGS = ("k_a", "c_p", "c_v", "c_q", "c_s", "c_a", "c_b", "h")


def cmd_check_gains(args) -> int:
    base = {}
    if args.gains:
        base = asdict(io.load_gains(args.gains))
    for key in _GAIN_FLAGS:
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    gains = ControllerGains(**base)
    reports = [analysis.cruise_stability(gains), analysis.following_stability(gains)]
    ok = all(r.verdict for r in reports)
    for r in reports:
        print(r.summary())
    if args.h_target is not None:
        cascade = analysis.coordination_stability(gains, args.h_target)
        print(cascade.summary())
        ok = ok and cascade.verdict
    print(f"rescale precondition K_a*C_p + C_q = {gains.k_a * gains.c_p + gains.c_q:.6g}")
    print("overall: " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringroad", description="Ring-road ACC/platooning simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario file or bundled scenario")
    r.add_argument("scenario", help=f"TOML file or bundled name ({', '.join(io.bundled_names())})")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./ringroad_out)")
    r.add_argument("--dt", type=float)
    r.add_argument("--t-end", type=float)
    r.add_argument("--stride", type=int, default=1, help="write every N-th sample to the CSV")
    r.add_argument("--h", type=float, help="time headway override")
    r.add_argument("--v2v", action="store_true", help="enable V2V (acceleration feedback, unlimited range)")
    r.add_argument("--seed-note", help="free text stored in the report; the simulator is deterministic")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fd", help="fundamental diagram")
    f.add_argument("--h", type=float)
    f.add_argument("--v2v", action="store_true", help=f"use the V2V headway {V2V_HEADWAY} s unless --h is given")
    f.add_argument("--v-free", type=float, default=scenarios.V_FREE)
    f.add_argument("--length", type=float, default=4.5)
    f.add_argument("--perimeter", type=float, default=scenarios.PERIMETER)
    g = f.add_mutually_exclusive_group()
    g.add_argument("--rho", help="comma-separated densities (veh/m)")
    g.add_argument("--counts", help="vehicle counts A:B on the ring (densities n/P)")
    f.add_argument("--simulate", action="store_true", help="cross-check integer-n points by simulation")
    f.add_argument("--t-end", type=float, default=300.0)
    f.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    f.add_argument("--out", help="CSV path")
    f.set_defaults(func=cmd_fd)

    c = sub.add_parser("check-gains", help="stability report for a gain set")
    c.add_argument("--gains", help="TOML file with a [gains] table")
    for key in _GAIN_FLAGS:
        c.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    c.add_argument("--h-target", type=float, help="also check the coordinated leader loop at this headway")
    c.set_defaults(func=cmd_check_gains)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
