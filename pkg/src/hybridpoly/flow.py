"""Hybrid trajectories: smooth arcs inside regions joined by jumps on manifolds."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from scipy.optimize import brentq

from . import expr as ex
from .integrator import IntegrationError, IntegratorOptions, Step, dopri_steps, single_step
from .sysdef import (
    FIELD_VANISHES, JUMP_SINGULARITY, BoundaryEvent, HybridSystemDef, Interior, NonRegular,
    RegionError, RegularBoundary, classify_boundary_event, classify_point, field_for_side,
    resolve_incoming_side,
)

__all__ = [
    "TIME_LIMIT", "JUMP_LIMIT", "NON_REGULAR_HIT", "SINGULAR_EVENT", "EQUILIBRIUM_APPROACH",
    "STEP_FAILURE", "OBSERVER_STOP",
    "SmoothArc", "JumpEvent", "BoundaryHit", "SmoothResult", "HybridTrajectory",
    "SectionDef", "SectionHit",
    "integrate_smooth", "flow_hybrid", "section_hits", "trajectory_to_csv", "trajectory_to_json",
]

TIME_LIMIT = "TimeLimit"
JUMP_LIMIT = "JumpLimit"
NON_REGULAR_HIT = "NonRegularHit"
SINGULAR_EVENT = "SingularEvent"
EQUILIBRIUM_APPROACH = "EquilibriumApproach"
STEP_FAILURE = "StepFailure"
OBSERVER_STOP = "ObserverStop"


@dataclass
class SmoothArc:
    field_index: int
    samples: list[tuple[float, float, float]]
    steps: list[Step] = field(default_factory=list, repr=False)

    @property
    def end(self) -> tuple[float, float]:
        return self.samples[-1][1], self.samples[-1][2]

    @property
    def t_end(self) -> float:
        return self.samples[-1][0]


@dataclass
class BoundaryHit:
    manifold_index: int
    t: float
    p: tuple[float, float]
    incoming_side: int


@dataclass
class JumpEvent:
    manifold_index: int
    t: float
    p: tuple[float, float]
    p_bar: tuple[float, float]
    event: BoundaryEvent | None
    nudge_time: float = 0.0
    nudge_distance: float = 0.0

    @property
    def kind(self) -> str | None:
        return None if self.event is None else self.event.kind


@dataclass
class SmoothResult:
    arc: SmoothArc
    hit: BoundaryHit | None
    termination: str
    message: str = ""


@dataclass
class HybridTrajectory:
    segments: list[SmoothArc | JumpEvent]
    termination: str
    message: str = ""
    metadata: dict = field(default_factory=dict)
    pending_event: BoundaryHit | None = None

    @property
    def arcs(self) -> list[SmoothArc]:
        return [s for s in self.segments if isinstance(s, SmoothArc)]

    @property
    def jumps(self) -> list[JumpEvent]:
        return [s for s in self.segments if isinstance(s, JumpEvent)]

    @property
    def end(self) -> tuple[float, float]:
        last = self.segments[-1]
        return last.end if isinstance(last, SmoothArc) else last.p_bar

    @property
    def t_end(self) -> float:
        last = self.segments[-1]
        return last.t_end if isinstance(last, SmoothArc) else last.t


Observer = Callable[[Step], bool]


def _signs(sys: HybridSystemDef, p) -> list[float]:
    return [m.value(p) for m in sys.manifolds]


def _refine(step: Step, g: Callable[[tuple[float, float]], float], event_tol: float) -> float:
    """Fraction of ``step`` where ``g`` changes sign, tightened to ``event_tol``."""
    def gt(theta):
        return g(step.at(theta))
    g0, g1 = gt(0.0), gt(1.0)
    if g1 == 0.0:
        return 1.0
    if g0 == 0.0:
        return 0.0
    theta = brentq(gt, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=200)
    return theta


def integrate_smooth(sys: HybridSystemDef, field_index: int, x0: Sequence[float], t_max: float,
                     opts: IntegratorOptions | None = None, *, t0: float = 0.0,
                     observer: Observer | None = None) -> SmoothResult:
    """Integrate one field from ``x0`` until ``t_max`` or the first manifold crossing.

    ``t_max`` is an absolute end time. The arc ends exactly at the refined
    crossing point when some ``h_i`` changes sign.
    """
    opts = opts or IntegratorOptions.from_tolerances(sys.tolerances)
    fd = sys.fields[field_index]
    f = fd.fn
    x0 = (float(x0[0]), float(x0[1]))
    arc = SmoothArc(field_index, [(float(t0), x0[0], x0[1])])
    prev_h = _signs(sys, x0)
    ftol = sys.tolerances.field_tol
    if math.hypot(*f(*x0)) < ftol:
        return SmoothResult(arc, None, EQUILIBRIUM_APPROACH, "field vanishes at start")
    if t_max <= t0:
        return SmoothResult(arc, None, TIME_LIMIT)
    try:
        for step in dopri_steps(f, t0, x0, t_max, opts):
            new_h = _signs(sys, step.y1)
            crossed = [i for i, (a, b) in enumerate(zip(prev_h, new_h))
                       if (a > 0 and b <= 0) or (a < 0 and b >= 0)]
            if crossed:
                cands = []
                for i in crossed:
                    m = sys.manifolds[i]
                    theta = _refine(step, m.value, opts.event_tol)
                    p = step.at(theta)
                    p = _polish(m, step, theta, p, opts.event_tol)
                    cands.append((step.t0 + theta * step.h, i, p, theta))
                cands.sort()
                t_hit, i, p, theta = cands[0]
                trunc = step.truncated(theta, p)
                arc.steps.append(trunc)
                arc.samples.append((t_hit, p[0], p[1]))
                if len(cands) > 1 and cands[1][0] - t_hit <= opts.event_tol:
                    return SmoothResult(arc, BoundaryHit(i, t_hit, p, 1 if prev_h[i] > 0 else -1),
                                        NON_REGULAR_HIT, "simultaneous crossing of two manifolds")
                return SmoothResult(arc, BoundaryHit(i, t_hit, p, 1 if prev_h[i] > 0 else -1), "hit")
            arc.steps.append(step)
            arc.samples.append((step.t1, step.y1[0], step.y1[1]))
            prev_h = new_h
            if observer is not None and observer(step):
                return SmoothResult(arc, None, OBSERVER_STOP)
            if math.hypot(*f(*step.y1)) < ftol:
                return SmoothResult(arc, None, EQUILIBRIUM_APPROACH, "field vanishes")
    except IntegrationError as exc:
        return SmoothResult(arc, None, STEP_FAILURE, str(exc))
    return SmoothResult(arc, None, TIME_LIMIT)


def _polish(m, step: Step, theta: float, p, event_tol: float) -> tuple[float, float]:
    """Pull a refined event point onto ``h = 0`` if the root solve left ``|h| > event_tol``."""
    hv = m.value(p)
    if abs(hv) <= event_tol:
        return p
    for _ in range(8):
        gx, gy = m.gradient(p)
        vx, vy = step.velocity(theta)
        dh = (gx * vx + gy * vy) * step.h
        if dh == 0.0:
            break
        theta = min(1.0, max(0.0, theta - hv / dh))
        p = step.at(theta)
        hv = m.value(p)
        if abs(hv) <= event_tol:
            return p
    gx, gy = m.gradient(p)
    g2 = gx * gx + gy * gy
    if g2 > 0:
        p = (p[0] - hv * gx / g2, p[1] - hv * gy / g2)
    return p


def _nudge(sys: HybridSystemDef, i: int, p_bar, field_index: int, side: int, opts: IntegratorOptions):
    """Push ``p_bar`` off manifold ``i`` into ``side`` along the outgoing field."""
    tol = sys.tolerances
    m = sys.manifolds[i]
    f = sys.fields[field_index].fn
    speed = math.hypot(*f(*p_bar))
    if speed == 0.0:
        return None
    target = 10.0 * tol.boundary_tol
    tau = target / speed
    others = [(j, mm, mm.value(p_bar)) for j, mm in enumerate(sys.manifolds) if j != i]
    for _ in range(80):
        try:
            q = single_step(f, p_bar, tau)
        except ex.DomainError:
            return None
        g = math.hypot(*m.gradient(q))
        if g > 0 and side * m.value(q) / g >= target:
            if all(v0 == 0 or v0 * mm.value(q) > 0 for _, mm, v0 in others):
                return q, tau
            return None
        tau *= 2.0
        if tau > 1.0:
            break
    return None


def flow_hybrid(sys: HybridSystemDef, x0: Sequence[float], t_max: float, max_jumps: int,
                opts: IntegratorOptions | None = None, *, stop_on_singular: bool = True,
                observer: Observer | None = None, incoming_side: int | None = None,
                t0: float = 0.0) -> HybridTrajectory:
    """Hybrid orbit from ``x0`` over at most ``t_max`` time units.

    A start point on a manifold is jumped first; that jump does not count
    toward ``max_jumps``. Reaching the manifold for the ``max_jumps + 1``-th
    time stops with ``JumpLimit`` and stores the unapplied hit in
    ``pending_event``.
    """
    opts = opts or IntegratorOptions.from_tolerances(sys.tolerances)
    tol = sys.tolerances
    x0 = (float(x0[0]), float(x0[1]))
    t_end = t0 + t_max
    segs: list[SmoothArc | JumpEvent] = []
    meta = {"nudge_target": 10.0 * tol.boundary_tol, "max_nudge_distance": 0.0}

    def done(reason, msg="", pending=None):
        if not segs:
            segs.append(SmoothArc(-1, [(t, x[0], x[1])]))
        return HybridTrajectory(segs, reason, msg, meta, pending)

    t, x = float(t0), x0
    try:
        pc = classify_point(sys, x0)
    except RegionError as exc:
        return done(NON_REGULAR_HIT, str(exc))
    if isinstance(pc, NonRegular):
        return done(NON_REGULAR_HIT, pc.reason)
    pending_jump = None
    if isinstance(pc, RegularBoundary):
        side = incoming_side
        if side is None:
            side = resolve_incoming_side(sys, pc.manifold_index, x0) or 1
        pending_jump = BoundaryHit(pc.manifold_index, t, x0, side)
        field_index = None
    else:
        field_index = pc.field_index
    jumps = 0
    while True:
        if pending_jump is not None:
            hit = pending_jump
            pending_jump = None
            out = _apply_jump(sys, hit, opts, stop_on_singular, segs, meta)
            if isinstance(out, tuple) and isinstance(out[0], str):
                return done(*out)
            field_index, x, t = out
            if t >= t_end:
                return done(TIME_LIMIT)
        res = integrate_smooth(sys, field_index, x, t_end, opts, t0=t, observer=observer)
        segs.append(res.arc)
        t, x = res.arc.t_end, res.arc.end
        if res.termination != "hit":
            return done(res.termination, res.message)
        hit = res.hit
        try:
            pc = classify_point(sys, hit.p)
        except RegionError as exc:
            return done(NON_REGULAR_HIT, str(exc), hit)
        if isinstance(pc, NonRegular):
            return done(NON_REGULAR_HIT, pc.reason, hit)
        if not isinstance(pc, RegularBoundary):
            # the polished point drifted off the manifold; treat it as a hit anyway
            pass
        if jumps >= max_jumps:
            return done(JUMP_LIMIT, f"{max_jumps} jumps applied", hit)
        jumps += 1
        pending_jump = hit


def _apply_jump(sys, hit: BoundaryHit, opts, stop_on_singular, segs, meta):
    tol = sys.tolerances
    i = hit.manifold_index
    m = sys.manifolds[i]
    try:
        p_bar = tuple(float(v) for v in m.jump(hit.p))
    except (ex.DomainError, ArithmeticError) as exc:
        return (NON_REGULAR_HIT, f"jump undefined: {exc}", hit)
    try:
        ev = classify_boundary_event(sys, hit.p, incoming_side=hit.incoming_side)
    except (ValueError, ex.ExprError) as exc:
        return (NON_REGULAR_HIT, str(exc), hit)
    p_bar = ev.p_bar
    jev = JumpEvent(i, hit.t, hit.p, p_bar, ev)
    segs.append(jev)
    identity = m.jump.is_identity
    resting = (not identity and abs(ev.xh_in) <= tol.lie_tol and abs(ev.xh_out) <= tol.lie_tol)
    if ev.kind == FIELD_VANISHES or resting:
        return (EQUILIBRIUM_APPROACH, "orbit comes to rest on the manifold")
    if ev.kind == JUMP_SINGULARITY and stop_on_singular:
        return (SINGULAR_EVENT, ",".join(sorted(ev.reasons)))
    sides = [ev.outgoing_side] if ev.outgoing_side is not None else [-hit.incoming_side, hit.incoming_side]
    for side in sides:
        try:
            fi = field_for_side(sys, i, p_bar, side)
        except RegionError:
            continue
        nudged = _nudge(sys, i, p_bar, fi, side, opts)
        if nudged is not None:
            q, tau = nudged
            jev.nudge_time = tau
            jev.nudge_distance = math.hypot(q[0] - p_bar[0], q[1] - p_bar[1])
            meta["max_nudge_distance"] = max(meta["max_nudge_distance"], jev.nudge_distance)
            return fi, q, hit.t + tau
    if not identity:
        return (EQUILIBRIUM_APPROACH, "orbit cannot leave the manifold after the jump")
    return (NON_REGULAR_HIT, "no side to continue from the jump image")


# --------------------------------------------------------------------------
# Sections


@dataclass(frozen=True)
class SectionDef:
    """Segment ``base + s*direction``, ``0 <= s <= length``."""

    base: tuple[float, float]
    direction: tuple[float, float]
    length: float

    def __post_init__(self):
        dx, dy = (float(v) for v in self.direction)
        n = math.hypot(dx, dy)
        if n == 0 or not self.length > 0:
            raise ValueError("section needs a nonzero direction and positive length")
        object.__setattr__(self, "direction", (dx / n, dy / n))
        object.__setattr__(self, "base", (float(self.base[0]), float(self.base[1])))
        object.__setattr__(self, "length", float(self.length))

    @property
    def normal(self) -> tuple[float, float]:
        return (self.direction[1], -self.direction[0])

    def point(self, s: float) -> tuple[float, float]:
        return (self.base[0] + s * self.direction[0], self.base[1] + s * self.direction[1])

    def signed_distance(self, p) -> float:
        n = self.normal
        return n[0] * (p[0] - self.base[0]) + n[1] * (p[1] - self.base[1])

    def parameter(self, p) -> float:
        d = self.direction
        return d[0] * (p[0] - self.base[0]) + d[1] * (p[1] - self.base[1])


@dataclass(frozen=True)
class SectionHit:
    s: float
    t: float
    orientation: int
    segment: int


def _arc_section_hits(arc: SmoothArc, seg_index: int, section: SectionDef, event_tol: float):
    out = []
    for step in arc.steps:
        d0 = section.signed_distance(step.y0)
        d1 = section.signed_distance(step.y1)
        if d0 == 0.0 or d0 * d1 > 0.0:
            continue
        theta = _refine(step, section.signed_distance, event_tol)
        p = step.at(theta)
        s = section.parameter(p)
        if 0.0 <= s <= section.length:
            v = step.velocity(theta)
            n = section.normal
            vn = n[0] * v[0] + n[1] * v[1]
            out.append(SectionHit(s, step.t0 + theta * step.h, 1 if vn > 0 else -1, seg_index))
    return out


def section_hits(traj: HybridTrajectory, section: SectionDef, event_tol: float = 1e-11) -> list[SectionHit]:
    """All crossings of the segment by the trajectory's arcs, in time order."""
    hits = []
    for k, seg in enumerate(traj.segments):
        if isinstance(seg, SmoothArc):
            hits.extend(_arc_section_hits(seg, k, section, event_tol))
    return hits


# --------------------------------------------------------------------------
# Export


def _g(v: float) -> str:
    return "%.17g" % v


def trajectory_to_csv(traj: HybridTrajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment", "kind", "t", "x", "y"])
    for k, seg in enumerate(traj.segments):
        if isinstance(seg, SmoothArc):
            for t, x, y in seg.samples:
                w.writerow([k, "arc", _g(t), _g(x), _g(y)])
        else:
            w.writerow([k, "jump_pre", _g(seg.t), _g(seg.p[0]), _g(seg.p[1])])
            w.writerow([k, "jump_post", _g(seg.t), _g(seg.p_bar[0]), _g(seg.p_bar[1])])
    return buf.getvalue()


def trajectory_to_dict(traj: HybridTrajectory) -> dict:
    segs = []
    for seg in traj.segments:
        if isinstance(seg, SmoothArc):
            segs.append({"type": "arc", "field": seg.field_index,
                         "samples": [list(s) for s in seg.samples]})
        else:
            segs.append({"type": "jump", "manifold": seg.manifold_index, "t": seg.t,
                         "p": list(seg.p), "p_bar": list(seg.p_bar),
                         "event": None if seg.event is None else seg.event.to_json(),
                         "nudge_time": seg.nudge_time, "nudge_distance": seg.nudge_distance})
    pending = None
    if traj.pending_event is not None:
        pe = traj.pending_event
        pending = {"manifold": pe.manifold_index, "t": pe.t, "p": list(pe.p),
                   "incoming_side": pe.incoming_side}
    return {"termination": traj.termination, "message": traj.message, "segments": segs,
            "metadata": traj.metadata, "pending_event": pending}


def trajectory_to_json(traj: HybridTrajectory) -> str:
    # json emits floats with repr, which round-trips exactly
    return json.dumps(trajectory_to_dict(traj), indent=1, allow_nan=True) + "\n"
