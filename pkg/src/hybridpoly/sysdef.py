"""Hybrid system data model and point classification.

A system is a list of switching manifolds ``h_i(x, y) = 0``, each carrying a
jump map, plus smooth fields attached to regions described by sign vectors of
the ``h_i``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from . import expr as ex
from .expr import Expression

__all__ = [
    "Tolerances", "ConfigError", "RegionError", "NoMatch", "AmbiguousMatch",
    "OnBoundary", "ChartError", "SideError",
    "ExprJump", "InverseJump", "ManifoldDef", "FieldDef", "HybridSystemDef",
    "Interior", "RegularBoundary", "NonRegular", "BoundaryEvent",
    "JUMP_CROSSING", "JUMP_SINGULARITY", "FIELD_VANISHES",
    "TANGENCY_AT_P", "TANGENCY_AT_PBAR", "NOT_LOCAL_DIFFEO",
    "load_system", "load_system_file", "region_of", "classify_point",
    "classify_boundary_event", "field_for_side", "lie_derivatives",
    "contact_order_value", "resolve_incoming_side", "resolve_outgoing_side",
    "jump_chart_series", "chart_axis", "point_on_manifold",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances; every value can be overridden from a config."""

    boundary_tol: float = 1e-9
    grad_tol: float = 1e-9
    field_tol: float = 1e-12
    lie_tol: float = 1e-9
    diffeo_tol: float = 1e-9
    jump_consistency_tol: float = 1e-7
    n_check: int = 32
    check_radius: float = 10.0
    coeff_tol: float = 1e-9
    max_order: int = 8
    r_margin: float = 1e-6
    eigvec_offset: float = 1e-6
    connection_tol: float = 1e-4
    capture_radius: float = 0.25
    box_radius: float = 1e-3
    section_offset: float = 1e-3
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    event_tol: float = 1e-11
    max_steps: int = 1_000_000
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float = 0.1

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Tolerances":
        known = {f.name: f for f in fields(self)}
        clean = {}
        for name, value in overrides.items():
            if name not in known:
                raise ConfigError(f"unknown tolerance {name!r}")
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"tolerance {name!r} must be a number")
            if known[name].type in ("int", int):
                if float(value) != int(value):
                    raise ConfigError(f"tolerance {name!r} must be an integer")
                value = int(value)
            else:
                value = float(value)
            if not value > 0:
                raise ConfigError(f"tolerance {name!r} must be positive")
            clean[name] = value
        return replace(self, **clean)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class ConfigError(ValueError):
    """Malformed or inconsistent system configuration."""


class RegionError(ValueError):
    pass


class NoMatch(RegionError):
    pass


class AmbiguousMatch(RegionError):
    pass


class OnBoundary(RegionError):
    pass


class ChartError(ArithmeticError):
    pass


class SideError(ValueError):
    pass


# --------------------------------------------------------------------------
# Jumps


@dataclass(frozen=True)
class ExprJump:
    """Jump map given by two expressions in x and y."""

    fx: Expression
    fy: Expression

    def __post_init__(self):
        object.__setattr__(self, "_fn", ex.compile_expr((self.fx, self.fy)))

    def __call__(self, p: Sequence[float]) -> tuple[float, float]:
        return self._fn(float(p[0]), float(p[1]))

    @property
    def is_identity(self) -> bool:
        return self.fx == ex.Var("x") and self.fy == ex.Var("y")

    def series(self, xs: list[float], ys: list[float], order: int) -> tuple[list[float], list[float]]:
        b = {"x": xs, "y": ys}
        return ex.series_evaluate(self.fx, b, order), ex.series_evaluate(self.fy, b, order)

    def to_json(self) -> list[str]:
        return [ex.to_string(self.fx), ex.to_string(self.fy)]


@dataclass(frozen=True)
class InverseJump:
    """Numerical inverse of a jump map restricted to its manifold.

    Preimages are searched along the manifold near the query point by an
    outward bracket scan in the graph chart followed by ``brentq``.
    """

    forward: ExprJump
    h: Expression
    scan_step: float = 0.05
    scan_limit: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "_h", ex.compile_expr(self.h))
        dh = (ex.differentiate(self.h, "x"), ex.differentiate(self.h, "y"))
        object.__setattr__(self, "_dh", ex.compile_expr(dh))

    @property
    def is_identity(self) -> bool:
        return self.forward.is_identity

    def __call__(self, p: Sequence[float]) -> tuple[float, float]:
        p = (float(p[0]), float(p[1]))
        if self.is_identity:
            return p
        gx, gy = self._dh(*p)
        axis = 1 if abs(gy) <= abs(gx) else 0

        def lift(t: float) -> tuple[float, float]:
            return point_on_manifold(self._h, self._dh, axis, t, p)

        def g(t: float) -> float:
            return self.forward(lift(t))[axis] - p[axis]

        t0 = p[axis]
        g0 = g(t0)
        if g0 == 0.0:
            return lift(t0)
        step = self.scan_step
        prev = {1: (t0, g0), -1: (t0, g0)}
        while step <= self.scan_limit:
            for d in (1, -1):
                t = t0 + d * step
                try:
                    gt = g(t)
                except (ex.DomainError, ChartError):
                    continue
                tp, gp = prev[d]
                if gt == 0.0:
                    return lift(t)
                if math.copysign(1.0, gt) != math.copysign(1.0, gp):
                    lo, hi = sorted((tp, t))
                    root = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                    return lift(root)
                prev[d] = (t, gt)
            step *= 1.5
        raise ChartError(f"no preimage of {p} found along the manifold")

    def series(self, xs: list[float], ys: list[float], order: int):
        raise ChartError("series of an inverted jump is only available through jump_chart_series")

    def to_json(self) -> dict:
        return {"inverse_of": self.forward.to_json()}


def point_on_manifold(h_fn, dh_fn, axis: int, t: float, guess: Sequence[float],
                      tol: float = 1e-15, iters: int = 60) -> tuple[float, float]:
    """Point of ``h = 0`` whose ``axis`` coordinate equals ``t`` (Newton on the other)."""
    other = 1 - axis
    q = [0.0, 0.0]
    q[axis] = t
    q[other] = float(guess[other])
    for _ in range(iters):
        hv = h_fn(q[0], q[1])
        d = dh_fn(q[0], q[1])[other]
        if d == 0.0:
            raise ChartError("manifold is not a graph over the chart axis here")
        step = hv / d
        q[other] -= step
        if abs(step) <= tol * (1.0 + abs(q[other])):
            return (q[0], q[1])
    if abs(h_fn(q[0], q[1])) > 1e-9:
        raise ChartError("graph chart Newton iteration did not converge")
    return (q[0], q[1])


# --------------------------------------------------------------------------
# System definition


@dataclass(frozen=True)
class ManifoldDef:
    name: str
    h: Expression
    jump: ExprJump | InverseJump

    def __post_init__(self):
        grad = (ex.differentiate(self.h, "x"), ex.differentiate(self.h, "y"))
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "h_fn", ex.compile_expr(self.h))
        object.__setattr__(self, "grad_fn", ex.compile_expr(grad))

    def value(self, p: Sequence[float]) -> float:
        return self.h_fn(float(p[0]), float(p[1]))

    def gradient(self, p: Sequence[float]) -> tuple[float, float]:
        return self.grad_fn(float(p[0]), float(p[1]))

    def distance(self, p: Sequence[float]) -> float:
        """Normalized distance ``|h|/|grad h|`` (infinite-free: uses a tiny floor)."""
        g = math.hypot(*self.gradient(p))
        return abs(self.value(p)) / max(g, 1e-300)


@dataclass(frozen=True)
class FieldDef:
    signs: tuple[int, ...]
    f: tuple[Expression, Expression]

    def __post_init__(self):
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        jac = tuple(ex.differentiate(c, v) for c in self.f for v in ("x", "y"))
        object.__setattr__(self, "jac", jac)
        object.__setattr__(self, "fn", ex.compile_expr(tuple(self.f)))
        object.__setattr__(self, "jac_fn", ex.compile_expr(jac))

    def __call__(self, p: Sequence[float]) -> tuple[float, float]:
        return self.fn(float(p[0]), float(p[1]))

    def jacobian(self, p: Sequence[float]) -> np.ndarray:
        return np.array(self.jac_fn(float(p[0]), float(p[1]))).reshape(2, 2)

    def matches(self, signs: Sequence[int]) -> bool:
        return all(a == 0 or a == b for a, b in zip(self.signs, signs))


@dataclass(frozen=True)
class HybridSystemDef:
    manifolds: tuple[ManifoldDef, ...]
    fields: tuple[FieldDef, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    tolerances: Tolerances = Tolerances()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "manifolds", tuple(self.manifolds))
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "_lie_cache", {})
        # manifolds that matter for region selection
        used = tuple(any(fd.signs[i] != 0 for fd in self.fields) for i in range(len(self.manifolds)))
        object.__setattr__(self, "_used", used)

    def manifold_index(self, name: str) -> int:
        for i, m in enumerate(self.manifolds):
            if m.name == name:
                return i
        raise KeyError(f"no manifold named {name!r}")

    def h_values(self, p: Sequence[float]) -> list[float]:
        return [m.value(p) for m in self.manifolds]

    def with_tolerances(self, tol: Tolerances) -> "HybridSystemDef":
        return HybridSystemDef(self.manifolds, self.fields, self.params, tol, self.name)


# --------------------------------------------------------------------------
# Loading


_TOP_KEYS = {"params", "manifolds", "fields", "tolerances", "name", "description"}


def _parse(text: Any, where: str, names: frozenset[str], params: Mapping[str, float]) -> Expression:
    if not isinstance(text, str):
        raise ConfigError(f"{where}: expected an expression string")
    try:
        e = ex.parse_expression(text, names)
    except ex.ExprError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if params:
        e = ex.substitute(e, {k: ex.const(v) for k, v in params.items()})
    return e


def _pair(value: Any, where: str) -> list:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{where}: expected a list of two expression strings")
    return value


def _check_keys(obj: Any, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {sorted(missing)}")


def load_system(document: str | Mapping[str, Any], *, check_jumps: bool = True,
                tolerance_overrides: Mapping[str, Any] | None = None) -> HybridSystemDef:
    """Build a system from a JSON document (text or already-decoded object)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    else:
        doc = document
    _check_keys(doc, _TOP_KEYS, {"fields"}, "config")

    params_raw = doc.get("params", {})
    if not isinstance(params_raw, dict):
        raise ConfigError("params: expected an object")
    params: dict[str, float] = {}
    for k, v in params_raw.items():
        if not isinstance(k, str) or not k.isidentifier() or k in ("x", "y", "pi") or k in ex.FUNCTIONS:
            raise ConfigError(f"params: invalid parameter name {k!r}")
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"params.{k}: expected a finite number")
        params[k] = float(v)
    names = frozenset({"x", "y", *params})

    tol = Tolerances()
    raw_tol = doc.get("tolerances", {})
    if not isinstance(raw_tol, dict):
        raise ConfigError("tolerances: expected an object")
    tol = tol.with_overrides(raw_tol)
    if tolerance_overrides:
        tol = tol.with_overrides(tolerance_overrides)

    manifolds = []
    raw_m = doc.get("manifolds", [])
    if not isinstance(raw_m, list):
        raise ConfigError("manifolds: expected an array")
    seen = set()
    for i, m in enumerate(raw_m):
        where = f"manifolds[{i}]"
        _check_keys(m, {"name", "h", "jump"}, {"name", "h", "jump"}, where)
        if not isinstance(m["name"], str) or m["name"] in seen:
            raise ConfigError(f"{where}.name: expected a unique string")
        seen.add(m["name"])
        h = _parse(m["h"], f"{where}.h", names, params)
        jx, jy = _pair(m["jump"], f"{where}.jump")
        jump = ExprJump(_parse(jx, f"{where}.jump[0]", names, params),
                        _parse(jy, f"{where}.jump[1]", names, params))
        manifolds.append(ManifoldDef(m["name"], h, jump))

    raw_f = doc["fields"]
    if not isinstance(raw_f, list) or not raw_f:
        raise ConfigError("fields: expected a non-empty array")
    fds = []
    for j, f in enumerate(raw_f):
        where = f"fields[{j}]"
        _check_keys(f, {"signs", "f"}, {"f"}, where)
        signs = f.get("signs", [0] * len(manifolds))
        if (not isinstance(signs, list) or len(signs) != len(manifolds)
                or any(isinstance(s, bool) or s not in (-1, 0, 1) for s in signs)):
            raise ConfigError(f"{where}.signs: expected {len(manifolds)} entries from -1, 0, 1")
        fx, fy = _pair(f["f"], f"{where}.f")
        fds.append(FieldDef(tuple(signs), (_parse(fx, f"{where}.f[0]", names, params),
                                            _parse(fy, f"{where}.f[1]", names, params))))

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("name: expected a string")
    sys = HybridSystemDef(tuple(manifolds), tuple(fds), params, tol, name)
    if check_jumps:
        for i in range(len(manifolds)):
            check_jump_consistency(sys, i)
    return sys


def load_system_file(path, **kwargs) -> HybridSystemDef:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return load_system(text, **kwargs)


def sample_manifold(m: ManifoldDef, n: int, radius: float, seed: int = 0,
                    max_lines: int = 400) -> list[tuple[float, float]]:
    """Up to ``n`` points of ``h = 0`` found by root solving along random lines."""
    rng = np.random.default_rng(seed)
    pts: list[tuple[float, float]] = []
    s_grid = np.linspace(-2 * radius, 2 * radius, 201)
    for _ in range(max_lines):
        if len(pts) >= n:
            break
        c = rng.uniform(-radius, radius, 2)
        ang = rng.uniform(0, math.pi)
        d = np.array([math.cos(ang), math.sin(ang)])

        def g(s, c=c, d=d):
            return m.h_fn(c[0] + s * d[0], c[1] + s * d[1])

        try:
            vals = [g(s) for s in s_grid]
        except ex.DomainError:
            continue
        for a, b, ga, gb in zip(s_grid[:-1], s_grid[1:], vals[:-1], vals[1:]):
            if ga == 0.0 or ga * gb < 0:
                s = a if ga == 0.0 else brentq(g, a, b, xtol=1e-15)
                pts.append((float(c[0] + s * d[0]), float(c[1] + s * d[1])))
                if len(pts) >= n:
                    break
    return pts


def check_jump_consistency(sys: HybridSystemDef, i: int) -> None:
    tol = sys.tolerances
    m = sys.manifolds[i]
    for p in sample_manifold(m, tol.n_check, tol.check_radius, seed=i):
        try:
            q = m.jump(p)
            val = m.value(q)
        except ex.DomainError:
            continue
        if abs(val) > tol.jump_consistency_tol:
            raise ConfigError(
                f"manifolds[{i}] ({m.name}): jump sends {p} to {q} with |h| = {abs(val):.3g}"
                f" > jump_consistency_tol")


# --------------------------------------------------------------------------
# Classification


@dataclass(frozen=True)
class Interior:
    field_index: int


@dataclass(frozen=True)
class RegularBoundary:
    manifold_index: int
    p_bar: tuple[float, float]


@dataclass(frozen=True)
class NonRegular:
    reason: str


JUMP_CROSSING = "JumpCrossing"
JUMP_SINGULARITY = "JumpSingularity"
FIELD_VANISHES = "FieldVanishes"
TANGENCY_AT_P = "TangencyAtP"
TANGENCY_AT_PBAR = "TangencyAtPbar"
NOT_LOCAL_DIFFEO = "NotLocalDiffeo"


@dataclass(frozen=True)
class BoundaryEvent:
    """Classification of a regular boundary point together with its diagnostics."""

    kind: str
    reasons: frozenset[str]
    manifold_index: int
    p: tuple[float, float]
    p_bar: tuple[float, float]
    incoming_side: int | None
    outgoing_side: int | None
    field_in: int | None
    field_out: int | None
    xh_in: float
    xh_out: float
    chart_derivative: float
    product: float

    def to_json(self) -> dict:
        return {
            "kind": self.kind, "reasons": sorted(self.reasons),
            "manifold": self.manifold_index, "p": list(self.p), "p_bar": list(self.p_bar),
            "incoming_side": self.incoming_side, "outgoing_side": self.outgoing_side,
            "xh_in": self.xh_in, "xh_out": self.xh_out,
            "chart_derivative": self.chart_derivative, "product": self.product,
        }


def _sign(v: float) -> int:
    return 1 if v > 0 else -1


def region_of(sys: HybridSystemDef, p: Sequence[float]) -> int:
    """Index of the unique field whose sign pattern matches ``p``."""
    tol = sys.tolerances.boundary_tol
    signs = []
    for i, m in enumerate(sys.manifolds):
        v = m.value(p)
        if sys._used[i] and m.distance(p) <= tol:
            raise OnBoundary(f"point {tuple(p)} lies on manifold {m.name!r}")
        signs.append(_sign(v) if v != 0 else 0)
    return _match(sys, signs)


def _match(sys: HybridSystemDef, signs: Sequence[int]) -> int:
    hits = [j for j, fd in enumerate(sys.fields) if fd.matches(signs)]
    if not hits:
        raise NoMatch(f"no field matches sign vector {list(signs)}")
    if len(hits) > 1:
        raise AmbiguousMatch(f"fields {hits} all match sign vector {list(signs)}")
    return hits[0]


def field_for_side(sys: HybridSystemDef, i: int, p: Sequence[float], side: int) -> int:
    """Field acting on the ``side`` of manifold ``i`` near the boundary point ``p``."""
    signs = []
    for j, m in enumerate(sys.manifolds):
        if j == i:
            signs.append(side)
        else:
            v = m.value(p)
            signs.append(_sign(v) if v != 0 else 0)
    return _match(sys, signs)


def classify_point(sys: HybridSystemDef, p: Sequence[float]) -> Interior | RegularBoundary | NonRegular:
    tol = sys.tolerances
    p = (float(p[0]), float(p[1]))
    on = []
    for i, m in enumerate(sys.manifolds):
        g = math.hypot(*m.gradient(p))
        hv = abs(m.value(p))
        if g < tol.grad_tol:
            if hv <= tol.boundary_tol:
                return NonRegular("h not regular here")
            continue
        if hv / g <= tol.boundary_tol:
            on.append(i)
    if not on:
        return Interior(region_of(sys, p))
    if len(on) > 1:
        return NonRegular("on two manifolds")
    i0 = on[0]
    try:
        p_bar = tuple(float(v) for v in sys.manifolds[i0].jump(p))
    except (ex.DomainError, ChartError) as exc:
        return NonRegular(f"jump undefined here: {exc}")
    for j, m in enumerate(sys.manifolds):
        if j != i0 and m.distance(p_bar) <= tol.boundary_tol:
            return NonRegular("jump image lies on another manifold")
    return RegularBoundary(i0, p_bar)


# --------------------------------------------------------------------------
# Lie derivatives


def lie_derivatives(sys: HybridSystemDef, field_index: int, manifold_index: int, k: int) -> list[Expression]:
    """Symbolic ``[X^1 h, ..., X^k h]`` for the given field and manifold (cached)."""
    key = (field_index, manifold_index)
    cache = sys._lie_cache
    chain = cache.setdefault(key, [sys.manifolds[manifold_index].h])
    fx, fy = sys.fields[field_index].f
    while len(chain) <= k:
        prev = chain[-1]
        nxt = ex.add(ex.mul(fx, ex.differentiate(prev, "x")), ex.mul(fy, ex.differentiate(prev, "y")))
        chain.append(nxt)
    return chain[1:k + 1]


def contact_order_value(sys: HybridSystemDef, field_index: int, manifold_index: int,
                        p: Sequence[float], max_order: int | None = None) -> tuple[int | None, float]:
    """First ``k`` with ``|X^k h(p)| > lie_tol`` and that value; ``(None, 0.0)`` beyond ``max_order``."""
    tol = sys.tolerances
    max_order = tol.max_order if max_order is None else max_order
    env = {"x": float(p[0]), "y": float(p[1])}
    for k in range(1, max_order + 1):
        e = lie_derivatives(sys, field_index, manifold_index, k)[-1]
        v = ex.evaluate(e, env)
        if abs(v) > tol.lie_tol:
            return k, v
    return None, 0.0


def _side_valid_in(sys, i, p, side) -> bool:
    try:
        j = field_for_side(sys, i, p, side)
        m, v = contact_order_value(sys, j, i, p)
    except (RegionError, ex.ExprError):
        return False
    if m is None:
        return False
    return _sign(v) * (-1) ** m == side


def _side_valid_out(sys, i, p_bar, side) -> bool:
    try:
        j = field_for_side(sys, i, p_bar, side)
        m, v = contact_order_value(sys, j, i, p_bar)
    except (RegionError, ex.ExprError):
        return False
    if m is None:
        return False
    return _sign(v) == side


def resolve_incoming_side(sys: HybridSystemDef, i: int, p: Sequence[float]) -> int | None:
    """Side of manifold ``i`` from which the local orbit arrives at ``p`` (``+1`` preferred)."""
    for side in (1, -1):
        if _side_valid_in(sys, i, p, side):
            return side
    return None


def resolve_outgoing_side(sys: HybridSystemDef, i: int, p_bar: Sequence[float], incoming_side: int) -> int | None:
    """Side into which the orbit leaves ``p_bar``: crossing first, then bounce."""
    for side in (-incoming_side, incoming_side):
        if _side_valid_out(sys, i, p_bar, side):
            return side
    return None


def classify_boundary_event(sys: HybridSystemDef, p: Sequence[float], incoming_side: int | None = None,
                            outgoing_side: int | None = None) -> BoundaryEvent:
    """Classify a regular boundary point as jump crossing, jump singularity or vanishing field."""
    tol = sys.tolerances
    pc = classify_point(sys, p)
    if not isinstance(pc, RegularBoundary):
        raise ValueError(f"point {tuple(p)} is not a regular boundary point: {pc}")
    i, p_bar = pc.manifold_index, pc.p_bar
    p = (float(p[0]), float(p[1]))
    m = sys.manifolds[i]
    reasons = set()

    s_in = incoming_side
    if s_in is None:
        s_in = resolve_incoming_side(sys, i, p)
    elif not _side_valid_in(sys, i, p, s_in):
        reasons.add(TANGENCY_AT_P)
    if s_in is None:
        reasons.add(TANGENCY_AT_P)
    s_out = outgoing_side
    if s_out is None:
        s_out = resolve_outgoing_side(sys, i, p_bar, s_in if s_in is not None else 1)
    elif not _side_valid_out(sys, i, p_bar, s_out):
        reasons.add(TANGENCY_AT_PBAR)
    if s_out is None:
        reasons.add(TANGENCY_AT_PBAR)

    f_in = _safe_field(sys, i, p, s_in if s_in is not None else 1)
    f_out = _safe_field(sys, i, p_bar, s_out if s_out is not None else -(s_in or 1))

    def lie1(fi, q):
        if fi is None:
            return 0.0
        gx, gy = m.gradient(q)
        vx, vy = sys.fields[fi](q)
        return vx * gx + vy * gy

    xh_in, xh_out = lie1(f_in, p), lie1(f_out, p_bar)
    try:
        coeffs, _ = jump_chart_series(sys, i, p, 1)
        a1 = coeffs[1]
    except (ChartError, ex.ExprError):
        a1 = 0.0
    sign_in = s_in if s_in is not None else 1
    sign_out = s_out if s_out is not None else -sign_in
    product = (-sign_in * xh_in) * (sign_out * xh_out)

    def event(kind):
        return BoundaryEvent(kind, frozenset(reasons), i, p, p_bar, s_in, s_out, f_in, f_out,
                             xh_in, xh_out, a1, product)

    vanish = (f_in is None or math.hypot(*sys.fields[f_in](p)) < tol.field_tol
              or f_out is None or math.hypot(*sys.fields[f_out](p_bar)) < tol.field_tol)
    if vanish:
        return event(FIELD_VANISHES)
    if abs(xh_in) <= tol.lie_tol:
        reasons.add(TANGENCY_AT_P)
    if abs(xh_out) <= tol.lie_tol:
        reasons.add(TANGENCY_AT_PBAR)
    if abs(a1) <= tol.diffeo_tol:
        reasons.add(NOT_LOCAL_DIFFEO)
    if not reasons and product > tol.lie_tol:
        return event(JUMP_CROSSING)
    if not reasons:
        reasons.add(TANGENCY_AT_P if abs(xh_in) <= abs(xh_out) else TANGENCY_AT_PBAR)
    return event(JUMP_SINGULARITY)


def _safe_field(sys, i, p, side):
    try:
        return field_for_side(sys, i, p, side)
    except RegionError:
        return None


# --------------------------------------------------------------------------
# Graph charts and jump series


def chart_axis(m: ManifoldDef, p: Sequence[float], grad_tol: float = 1e-9) -> int:
    """Ambient axis used as chart parameter: the one with the smaller ``|dh|``."""
    gx, gy = m.gradient(p)
    if math.hypot(gx, gy) < grad_tol:
        raise ChartError(f"gradient of {m.name!r} degenerate at {tuple(p)}")
    return 1 if abs(gy) <= abs(gx) else 0


def _graph_series(m: ManifoldDef, p: Sequence[float], axis: int, order: int) -> tuple[list[float], list[float]]:
    """Series of the manifold point whose ``axis`` coordinate is ``p_axis + t``."""
    n = order + 1
    other = 1 - axis
    lin = [float(p[axis]), 1.0] + [0.0] * (n - 2)
    oth = [float(p[other])] + [0.0] * (n - 1)
    var_axis, var_other = ("x", "y") if axis == 0 else ("y", "x")
    dh_other = m.grad[other]
    # each Newton sweep at least doubles the number of correct coefficients
    for _ in range(order.bit_length() + 3):
        b = {var_axis: lin, var_other: oth}
        hs = ex.series_evaluate(m.h, b, order)
        ds = ex.series_evaluate(dh_other, b, order)
        if ds[0] == 0.0:
            raise ChartError("manifold is not a graph over the chart axis")
        corr = ex._s_div(hs, ds)
        oth = [a - c for a, c in zip(oth, corr)]
    return (lin, oth) if axis == 0 else (oth, lin)


def _reverse_series(c: list[float]) -> list[float]:
    """Compositional inverse of ``c[1] t + c[2] t^2 + ...`` (requires ``c[1] != 0``)."""
    n = len(c)
    if c[1] == 0.0:
        raise ChartError("series is not invertible (zero linear term)")
    inv = [0.0, 1.0 / c[1]] + [0.0] * (n - 2)
    for k in range(2, n):
        # coefficient k of c(inv(t)) must vanish
        comp = [0.0] * n
        power = [1.0] + [0.0] * (n - 1)
        for j in range(1, n):
            power = ex._s_mul(power, inv)
            for q in range(n):
                comp[q] += c[j] * power[q]
        inv[k] = -comp[k] / c[1]
    return inv


def jump_chart_series(sys: HybridSystemDef, i: int, p: Sequence[float], order: int,
                      chart_axis_in: int | None = None) -> tuple[list[float], int]:
    """Taylor coefficients of the jump displacement in graph charts.

    Returns ``(psi, axis)`` where ``psi[k]`` is the ``t^k`` coefficient of
    ``chart(jump(chart^-1(t))) - chart(p_bar)``; ``psi[0]`` is 0 by construction.
    """
    m = sys.manifolds[i]
    tol = sys.tolerances
    axis = chart_axis(m, p, tol.grad_tol) if chart_axis_in is None else chart_axis_in
    if isinstance(m.jump, InverseJump):
        # reverse the forward series taken at the preimage
        p_src = m.jump(p)
        fwd = ManifoldDef(m.name, m.h, m.jump.forward)
        sub = HybridSystemDef((fwd,), (FieldDef((0,), sys.fields[0].f),), sys.params, tol, sys.name)
        fwd_coeffs, _ = jump_chart_series(sub, 0, p_src, order)
        return _reverse_series(fwd_coeffs), chart_axis(m, p_src, tol.grad_tol)
    xs, ys = _graph_series(m, p, axis, order)
    jx, jy = m.jump.series(xs, ys, order)
    p_bar = (jx[0], jy[0])
    out_axis = chart_axis(m, p_bar, tol.grad_tol)
    comp = jx if out_axis == 0 else jy
    psi = [0.0] + list(comp[1:])
    return psi, out_axis
