"""Polycycle descriptions, connection checks, graphic numbers and stability verdicts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from . import expr as ex
from .flow import (
    JUMP_LIMIT, OBSERVER_STOP, HybridTrajectory, SectionDef, _nudge, flow_hybrid,
)
from .integrator import IntegratorOptions
from .local import (
    HYPERBOLIC_SADDLE, NonConvergence, NotASaddle, PreconditionError, SingularityReport,
    analyze_singularity,
)
from .sysdef import (
    JUMP_CROSSING, JUMP_SINGULARITY, ChartError, ConfigError, HybridSystemDef, RegionError,
    SideError, classify_boundary_event,
)

__all__ = [
    "STABLE", "UNSTABLE", "INCONCLUSIVE", "NotHyperbolicPolycycle", "IndeterminateRatio",
    "PolycycleSpec", "EdgeSpec", "EdgeReport", "StabilityVerdict",
    "load_spec", "load_spec_file", "graphic_number", "classify_stability",
    "verify_connections", "analyze_polycycle",
]

STABLE = "Stable"
UNSTABLE = "Unstable"
INCONCLUSIVE = "Inconclusive"
SILENT_AT_ONE = "stability criterion is silent at r = 1"


class NotHyperbolicPolycycle(ValueError):
    """A hyperbolicity condition of the polycycle fails; the message names it."""


class IndeterminateRatio(ValueError):
    pass


@dataclass(frozen=True)
class EdgeSpec:
    source: int
    target: int
    waypoints: tuple[tuple[float, float], ...] = ()


@dataclass(frozen=True)
class PolycycleSpec:
    singularities: tuple[dict, ...]
    edges: tuple[EdgeSpec, ...]
    section: SectionDef
    interior_side: int = 1
    probe_grid: tuple[float, ...] = ()
    bracket: tuple[float, float] | None = None
    assume_flat: bool = False


_SPEC_KEYS = {"singularities", "edges", "section", "probe_grid", "bracket", "assume_flat", "name"}


def _point(v: Any, where: str) -> tuple[float, float]:
    if (not isinstance(v, list) or len(v) != 2
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v)):
        raise ConfigError(f"{where}: expected [x, y]")
    return (float(v[0]), float(v[1]))


def load_spec(document: str | Mapping[str, Any]) -> PolycycleSpec:
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ConfigError("spec: expected an object")
    extra = set(doc) - _SPEC_KEYS
    if extra:
        raise ConfigError(f"spec: unknown key(s) {sorted(extra)}")
    sings = doc.get("singularities")
    if not isinstance(sings, list) or not sings:
        raise ConfigError("singularities: expected a non-empty array")
    out = []
    for k, s in enumerate(sings):
        where = f"singularities[{k}]"
        if not isinstance(s, dict) or s.get("type") not in ("saddle", "jump"):
            raise ConfigError(f"{where}: expected an object with type 'saddle' or 'jump'")
        if s["type"] == "saddle":
            if set(s) - {"type", "guess", "field"}:
                raise ConfigError(f"{where}: unknown key(s) {sorted(set(s) - {'type', 'guess', 'field'})}")
            out.append({"type": "saddle", "guess": list(_point(s.get("guess"), where + ".guess")),
                        **({"field": s["field"]} if "field" in s else {})})
        else:
            allowed = {"type", "p", "manifold", "incoming_side", "outgoing_side"}
            if set(s) - allowed:
                raise ConfigError(f"{where}: unknown key(s) {sorted(set(s) - allowed)}")
            d = {"type": "jump", "p": list(_point(s.get("p"), where + ".p"))}
            if "manifold" in s:
                d["manifold"] = s["manifold"]
            for key in ("incoming_side", "outgoing_side"):
                if key in s:
                    if s[key] not in (-1, 1) or isinstance(s[key], bool):
                        raise ConfigError(f"{where}.{key}: expected -1 or 1")
                    d[key] = int(s[key])
            out.append(d)
    n = len(out)
    edges_raw = doc.get("edges")
    if edges_raw is None:
        edges = tuple(EdgeSpec(k, (k + 1) % n) for k in range(n))
    else:
        if not isinstance(edges_raw, list) or len(edges_raw) != n:
            raise ConfigError(f"edges: expected an array of {n} edges")
        edges = []
        for k, e in enumerate(edges_raw):
            where = f"edges[{k}]"
            if not isinstance(e, dict) or set(e) - {"from", "to", "waypoints"}:
                raise ConfigError(f"{where}: expected {{from, to, waypoints?}}")
            a, b = e.get("from"), e.get("to")
            if not all(isinstance(v, int) and not isinstance(v, bool) and 0 <= v < n for v in (a, b)):
                raise ConfigError(f"{where}: from/to must be singularity indices")
            wps = tuple(_point(w, f"{where}.waypoints") for w in e.get("waypoints", []))
            edges.append(EdgeSpec(a, b, wps))
        edges = tuple(edges)
    sec = doc.get("section")
    if not isinstance(sec, dict) or set(sec) - {"base", "direction", "length", "interior_side"}:
        raise ConfigError("section: expected {base, direction, length, interior_side}")
    try:
        section = SectionDef(_point(sec.get("base"), "section.base"),
                             _point(sec.get("direction"), "section.direction"),
                             float(sec.get("length", 0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section: {exc}") from None
    interior = sec.get("interior_side", 1)
    if interior not in (-1, 1):
        raise ConfigError("section.interior_side: expected -1 or 1")
    grid = doc.get("probe_grid", [])
    if not isinstance(grid, list) or any(isinstance(g, bool) or not isinstance(g, (int, float)) for g in grid):
        raise ConfigError("probe_grid: expected an array of numbers")
    bracket = doc.get("bracket")
    if bracket is not None:
        bracket = _point(bracket, "bracket")
    flat = doc.get("assume_flat", False)
    if not isinstance(flat, bool):
        raise ConfigError("assume_flat: expected true or false")
    return PolycycleSpec(tuple(out), edges, section, int(interior), tuple(float(g) for g in grid),
                         bracket, flat)


def load_spec_file(path) -> PolycycleSpec:
    with open(path, encoding="utf-8") as fh:
        return load_spec(fh.read())


# --------------------------------------------------------------------------
# Graphic number and verdict


def graphic_number(reports: Sequence[SingularityReport | float]) -> float:
    """Product of the hyperbolicity ratios; infinite if any ratio is infinite.

    The product is formed directly so that integer ratios give exact
    results; logarithms are used only if the direct product over- or
    underflows.
    """
    ratios = []
    for k, r in enumerate(reports):
        val = r.ratio if isinstance(r, SingularityReport) else r
        if val is None:
            raise IndeterminateRatio(f"ratio of singularity {k} is indeterminate")
        if not val > 0:
            raise ValueError(f"ratio of singularity {k} must be positive, got {val!r}")
        ratios.append(float(val))
    if any(math.isinf(v) for v in ratios):
        return math.inf
    prod = math.prod(ratios)
    if prod == 0.0 or math.isinf(prod):
        log_r = math.fsum(math.log(v) for v in ratios)
        try:
            return math.exp(log_r)
        except OverflowError:
            return math.inf
    return prod


@dataclass
class EdgeReport:
    source: int
    target: int
    residual: float
    passed: bool
    crossings: list[str] = field(default_factory=list)
    termination: str = ""
    message: str = ""
    endpoint: tuple[float, float] | None = None

    def to_json(self) -> dict:
        return {"from": self.source, "to": self.target, "residual": self.residual,
                "passed": self.passed, "crossings": self.crossings,
                "termination": self.termination, "message": self.message,
                "endpoint": None if self.endpoint is None else list(self.endpoint)}


@dataclass
class StabilityVerdict:
    r: float | None
    verdict: str
    reports: list[SingularityReport] = field(default_factory=list)
    edges: list[EdgeReport] = field(default_factory=list)
    inconclusive_reason: str | None = None

    def to_json(self) -> dict:
        r = self.r
        return {"r": None if r is None or math.isinf(r) else r,
                "r_is_infinite": r is not None and math.isinf(r),
                "verdict": self.verdict, "inconclusive_reason": self.inconclusive_reason,
                "singularities": [rep.to_json() for rep in self.reports],
                "edges": [e.to_json() for e in self.edges]}


def classify_stability(r: float, r_margin: float = 1e-6) -> StabilityVerdict:
    if math.isinf(r) or r > 1 + r_margin:
        return StabilityVerdict(r, STABLE)
    if r < 1 - r_margin:
        return StabilityVerdict(r, UNSTABLE)
    return StabilityVerdict(r, INCONCLUSIVE, inconclusive_reason=SILENT_AT_ONE)


# --------------------------------------------------------------------------
# Connections


def _cross(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _run_edge(sys: HybridSystemDef, start, src_rep: SingularityReport | None, tgt: SingularityReport,
              t_max: float, opts: IntegratorOptions) -> EdgeReport:
    tol = sys.tolerances
    crossings: list[str] = []
    best = math.inf
    tp = tgt.p
    armed = [math.hypot(start[0] - tp[0], start[1] - tp[1]) > 2 * tol.box_radius]
    origin = start

    def observer(step):
        nonlocal best
        q = step.y1
        d = math.hypot(q[0] - tp[0], q[1] - tp[1])
        if math.hypot(q[0] - origin[0], q[1] - origin[1]) > 1e3:
            return True
        if not armed[0]:
            armed[0] = d > 2 * tol.box_radius
            return False
        best = min(best, d)
        return tgt.kind == HYPERBOLIC_SADDLE and d <= tol.box_radius

    x, t_used, incoming = start, 0.0, None
    while t_used < t_max:
        traj = flow_hybrid(sys, x, t_max - t_used, 0, opts, stop_on_singular=False,
                           observer=observer, incoming_side=incoming, t0=t_used)
        t_used = traj.t_end
        end = traj.end
        if traj.termination == OBSERVER_STOP:
            d = math.hypot(end[0] - tp[0], end[1] - tp[1])
            if tgt.kind == HYPERBOLIC_SADDLE and d <= tol.box_radius:
                res = abs(_cross((end[0] - tp[0], end[1] - tp[1]), tgt.e_s))
                return EdgeReport(-1, -1, res, res <= tol.connection_tol, crossings,
                                  traj.termination, "entered the saddle box", end)
            return EdgeReport(-1, -1, max(best, d), False, crossings, traj.termination, "escaped")
        if traj.termination != JUMP_LIMIT or traj.pending_event is None:
            return EdgeReport(-1, -1, best, False, crossings, traj.termination, traj.message, end)
        hit = traj.pending_event
        d = math.hypot(hit.p[0] - tp[0], hit.p[1] - tp[1])
        if tgt.kind != HYPERBOLIC_SADDLE and hit.manifold_index == tgt.manifold_index and d <= tol.capture_radius:
            return EdgeReport(-1, -1, d, d <= tol.connection_tol, crossings, traj.termination,
                              "reached the target manifold", hit.p)
        try:
            ev = classify_boundary_event(sys, hit.p, incoming_side=hit.incoming_side)
        except (ValueError, ArithmeticError, ex.ExprError) as exc:
            return EdgeReport(-1, -1, best, False, crossings, traj.termination, str(exc), hit.p)
        crossings.append(ev.kind)
        if ev.kind != JUMP_CROSSING:
            return EdgeReport(-1, -1, best, False, crossings, traj.termination,
                              f"mid-edge {ev.kind} at {hit.p}", hit.p)
        x, incoming = hit.p, hit.incoming_side
        t_used = hit.t
    return EdgeReport(-1, -1, best, False, crossings, "TimeLimit", "edge time budget exhausted")


def verify_connections(sys: HybridSystemDef, spec: PolycycleSpec, reports: Sequence[SingularityReport],
                       opts: IntegratorOptions | None = None, t_max: float = 50.0) -> list[EdgeReport]:
    """Integrate every declared edge and measure how close it lands to its target."""
    tol = sys.tolerances
    # saddle passages amplify integration error, so edges use tighter tolerances
    opts = opts or IntegratorOptions.from_tolerances(tol, rel_tol=min(tol.rel_tol, 1e-12),
                                                     abs_tol=min(tol.abs_tol, 1e-14))
    out = []
    for e in spec.edges:
        src, tgt = reports[e.source], reports[e.target]
        if src.kind == HYPERBOLIC_SADDLE:
            cands = []
            for sgn in (1, -1):
                start = (src.p[0] + sgn * tol.eigvec_offset * src.e_u[0],
                         src.p[1] + sgn * tol.eigvec_offset * src.e_u[1])
                cands.append(_run_edge(sys, start, src, tgt, t_max, opts))
            rep = min(cands, key=lambda r: (not r.passed, r.residual))
        else:
            nudged = _nudge(sys, src.manifold_index, src.p_bar, src.field_out, src.outgoing_side, opts)
            if nudged is None:
                rep = EdgeReport(-1, -1, math.inf, False, [], "", "cannot leave the jump image")
            else:
                rep = _run_edge(sys, nudged[0], src, tgt, t_max, opts)
        rep.source, rep.target = e.source, e.target
        out.append(rep)
    return out


def analyze_polycycle(sys: HybridSystemDef, spec: PolycycleSpec, max_order: int | None = None,
                      opts: IntegratorOptions | None = None) -> StabilityVerdict:
    """Local analysis of every singularity, edge verification, graphic number and verdict."""
    tol = sys.tolerances
    reports = []
    for k, desc in enumerate(spec.singularities):
        try:
            rep = analyze_singularity(sys, desc, max_order, spec.assume_flat)
        except NotASaddle as exc:
            raise NotHyperbolicPolycycle(f"singularity {k} is not a hyperbolic saddle: {exc}") from None
        except NonConvergence as exc:
            raise NotHyperbolicPolycycle(f"singularity {k}: no equilibrium found: {exc}") from None
        except (PreconditionError, SideError, ChartError, RegionError) as exc:
            raise NotHyperbolicPolycycle(f"singularity {k}: {exc}") from None
        if rep.kind == HYPERBOLIC_SADDLE:
            for m in sys.manifolds:
                if m.distance(rep.p) <= tol.boundary_tol:
                    raise NotHyperbolicPolycycle(
                        f"singularity {k}: saddle at {rep.p} lies on switching manifold {m.name!r}")
        else:
            if rep.event_kind != JUMP_SINGULARITY:
                raise NotHyperbolicPolycycle(f"singularity {k}: {rep.p} is a {rep.event_kind}, "
                                             f"not a jump singularity")
            if rep.n_s is None or rep.n_u is None:
                raise NotHyperbolicPolycycle(f"singularity {k}: flat contact at {rep.p}")
        reports.append(rep)
    edges = verify_connections(sys, spec, reports, opts)
    for e in edges:
        if not e.passed:
            raise NotHyperbolicPolycycle(
                f"edge {e.source}->{e.target} does not connect: residual {e.residual:.3g} "
                f"(connection_tol {tol.connection_tol:g}); {e.message}")
    try:
        r = graphic_number(reports)
    except IndeterminateRatio as exc:
        return StabilityVerdict(None, INCONCLUSIVE, reports, edges, str(exc))
    verdict = classify_stability(r, tol.r_margin)
    verdict.reports, verdict.edges = reports, edges
    return verdict
