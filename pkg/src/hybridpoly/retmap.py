"""First-return maps on a section, stability probes and periodic-orbit search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .flow import (
    HybridTrajectory, SectionDef, SectionHit, SmoothArc, _arc_section_hits, flow_hybrid,
    section_hits,
)
from .integrator import IntegratorOptions
from .sysdef import HybridSystemDef, RegionError, region_of

__all__ = [
    "ReturnMapOptions", "NoReturn", "BracketInvalid", "ReturnResult", "ProbeEntry", "ProbeResult",
    "FixedPointResult", "return_map", "stability_probe", "find_fixed_point",
    "probe_to_csv", "EMPIRICAL_STABLE", "EMPIRICAL_UNSTABLE", "EMPIRICAL_MIXED",
]

EMPIRICAL_STABLE = "Stable"
EMPIRICAL_UNSTABLE = "Unstable"
EMPIRICAL_MIXED = "Mixed"
DEGENERATE_GAP = 1e-8


class NoReturn(RuntimeError):
    def __init__(self, reason: str, s: float | None = None):
        super().__init__(f"no return to the section{'' if s is None else f' from s={s!r}'}: {reason}")
        self.reason = reason
        self.s = s


class BracketInvalid(ValueError):
    pass


@dataclass(frozen=True)
class ReturnMapOptions:
    """``orientation`` 0 means: take the sign of the crossing at the launch point."""

    orientation: int = 0
    crossings: int = 1
    t_max: float = 200.0
    max_jumps: int = 1000
    integrator: IntegratorOptions | None = None
    departure_radius: float | None = None
    stop_on_singular: bool = False

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.max_jumps < 0:
            raise ValueError("max_jumps must be non-negative")
        if self.crossings < 1:
            raise ValueError("crossings must be at least 1")
        if self.orientation not in (-1, 0, 1):
            raise ValueError("orientation must be -1, 0 or 1")


@dataclass
class ReturnResult:
    s: float
    pi_s: float
    t: float
    jumps: int
    orientation: int
    trajectory: HybridTrajectory = field(repr=False)


def _launch_orientation(sys: HybridSystemDef, section: SectionDef, x0) -> int:
    try:
        fi = region_of(sys, x0)
    except RegionError as exc:
        raise NoReturn(f"launch point is not interior: {exc}") from None
    vx, vy = sys.fields[fi](x0)
    n = section.normal
    vn = n[0] * vx + n[1] * vy
    if vn == 0:
        raise NoReturn("flow is tangent to the section at the launch point")
    return 1 if vn > 0 else -1


def return_map(sys: HybridSystemDef, section: SectionDef, s: float,
               opts: ReturnMapOptions | None = None) -> ReturnResult:
    """Parameter of the first qualifying return of the orbit through ``section.point(s)``."""
    opts = opts or ReturnMapOptions()
    iopts = opts.integrator or IntegratorOptions.from_tolerances(sys.tolerances)
    dep = 10 * iopts.event_tol if opts.departure_radius is None else opts.departure_radius
    x0 = section.point(s)
    orient = opts.orientation or _launch_orientation(sys, section, x0)
    count = [0]
    first_t1 = []

    def qualifies(h: SectionHit) -> bool:
        # a crossing at the launch point inside the very first step is not a return
        at_start = abs(h.s - s) <= dep and first_t1 and h.t <= first_t1[0]
        return h.orientation == orient and not at_start

    def observer(step) -> bool:
        # stop once a full step holds the required number of qualifying crossings
        if not first_t1:
            first_t1.append(step.t1)
        arc = SmoothArc(-1, [], [step])
        for h in _arc_section_hits(arc, 0, section, iopts.event_tol):
            if qualifies(h):
                count[0] += 1
        return count[0] >= opts.crossings

    traj = flow_hybrid(sys, x0, opts.t_max, opts.max_jumps, iopts,
                       stop_on_singular=opts.stop_on_singular, observer=observer)
    hits = [h for h in section_hits(traj, section, iopts.event_tol) if qualifies(h)]
    if len(hits) < opts.crossings:
        raise NoReturn(f"{traj.termination}: {traj.message}".rstrip(": "), float(s))
    h = hits[opts.crossings - 1]
    jumps = sum(1 for j in traj.jumps if j.t <= h.t)
    return ReturnResult(float(s), h.s, h.t, jumps, orient, traj)


@dataclass
class ProbeEntry:
    s: float
    pi_s: float | None
    gap: float | None
    error: str | None = None


@dataclass
class ProbeResult:
    entries: list[ProbeEntry]
    verdict: str
    degenerate: bool

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "degenerate": self.degenerate,
                "entries": [{"s": e.s, "pi_s": e.pi_s, "gap": e.gap, "error": e.error} for e in self.entries]}


def stability_probe(sys: HybridSystemDef, section: SectionDef, s_grid: Sequence[float],
                    opts: ReturnMapOptions | None = None) -> ProbeResult:
    """Sign of ``pi(s) - s`` over a grid; failed returns are recorded, not fatal."""
    grid = [float(s) for s in s_grid]
    if not grid:
        raise ValueError("empty probe grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("probe grid must be strictly increasing")
    if grid[0] <= 0 or grid[-1] >= section.length:
        raise ValueError("probe grid must lie inside (0, section length)")
    entries = []
    for s in grid:
        try:
            r = return_map(sys, section, s, opts)
            entries.append(ProbeEntry(s, r.pi_s, r.pi_s - s))
        except NoReturn as exc:
            entries.append(ProbeEntry(s, None, None, str(exc)))
    gaps = [e.gap for e in entries if e.gap is not None]
    if not gaps:
        raise NoReturn("no grid point returned to the section")
    degenerate = all(abs(g) <= DEGENERATE_GAP for g in gaps)
    # a degenerate probe (center-like) carries no sign information
    if degenerate:
        verdict = EMPIRICAL_MIXED
    elif len(gaps) == len(entries) and all(g < 0 for g in gaps):
        verdict = EMPIRICAL_STABLE
    elif len(gaps) == len(entries) and all(g > 0 for g in gaps):
        verdict = EMPIRICAL_UNSTABLE
    else:
        verdict = EMPIRICAL_MIXED
    return ProbeResult(entries, verdict, degenerate)


def probe_to_csv(result: ProbeResult) -> str:
    lines = ["s,pi_s,gap"]
    for e in result.entries:
        cells = [e.s, e.pi_s, e.gap]
        lines.append(",".join("" if c is None else "%.17g" % c for c in cells))
    return "\n".join(lines) + "\n"


@dataclass
class FixedPointResult:
    s_star: float
    gap: float
    period_time: float
    jumps_per_period: int
    degenerate: bool
    iterations: int
    closure_distance: float
    trajectory: HybridTrajectory = field(repr=False)

    def to_json(self) -> dict:
        return {"s_star": self.s_star, "gap": self.gap, "period_time": self.period_time,
                "jumps_per_period": self.jumps_per_period, "degenerate": self.degenerate,
                "iterations": self.iterations, "closure_distance": self.closure_distance}


def find_fixed_point(sys: HybridSystemDef, section: SectionDef, bracket: tuple[float, float],
                     tol: float = 1e-10, opts: ReturnMapOptions | None = None,
                     max_iter: int = 200) -> FixedPointResult:
    """Bisection on ``g(s) = pi(s) - s`` inside a sign-changing bracket."""
    lo, hi = sorted(float(b) for b in bracket)

    def g(s):
        r = return_map(sys, section, s, opts)
        return r.pi_s - s, r

    try:
        g_lo, r_lo = g(lo)
        g_hi, r_hi = g(hi)
    except NoReturn as exc:
        raise BracketInvalid(f"bracket end point does not return: {exc}") from None
    if abs(g_lo) <= DEGENERATE_GAP and abs(g_hi) <= DEGENERATE_GAP:
        mid = 0.5 * (lo + hi)
        gm, rm = g(mid)
        return _result(section, mid, gm, rm, True, 0)
    if g_lo == 0.0:
        return _result(section, lo, g_lo, r_lo, False, 0)
    if g_hi == 0.0:
        return _result(section, hi, g_hi, r_hi, False, 0)
    if (g_lo > 0) == (g_hi > 0):
        raise BracketInvalid(f"pi(s) - s has the same sign at both ends ({g_lo!r}, {g_hi!r})")
    it = 0
    while hi - lo > tol and it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        gm = rm = None
        for attempt in range(4):
            trial = mid + (0.0 if attempt == 0 else (-1) ** attempt * 0.01 * attempt * (hi - lo))
            try:
                gm, rm = g(trial)
                mid = trial
                break
            except NoReturn:
                continue
        if gm is None:
            raise NoReturn("bisection midpoint failed to return after 3 retries", mid)
        if gm == 0.0:
            lo = hi = mid
            break
        if (gm > 0) == (g_lo > 0):
            lo, g_lo = mid, gm
        else:
            hi, g_hi = mid, gm
    s_star = 0.5 * (lo + hi)
    gs, rs = g(s_star)
    return _result(section, s_star, gs, rs, False, it)


def _result(section, s, gap, r: ReturnResult, degenerate, it) -> FixedPointResult:
    q = section.point(r.pi_s)
    p = section.point(s)
    return FixedPointResult(s, gap, r.t, r.jumps, degenerate, it,
                            math.hypot(q[0] - p[0], q[1] - p[1]), r.trajectory)
