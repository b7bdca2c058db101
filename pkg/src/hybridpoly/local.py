"""Local analysis of polycycle singularities and numerical validators.

Saddles are characterized by their eigenvalues, jump singularities by the
contact orders of the fields on both sides and the power order of the jump
in graph charts. Two validators compare asymptotic statements with
integrated transition maps: Dulac-map bounds near a saddle and the power law
of the transition map along a tangency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import expr as ex
from .expr import Expression
from .flow import SectionDef
from .integrator import IntegratorOptions, dopri_steps
from .sysdef import (
    FieldDef, HybridSystemDef, InverseJump, ManifoldDef, RegularBoundary,
    SideError, classify_point, contact_order_value, field_for_side, jump_chart_series, region_of,
)

__all__ = [
    "SectionDef", "NonConvergence", "SingularJacobian", "NotASaddle", "PreconditionError",
    "EscapeError", "SaddleInfo", "PowerOrder", "SingularityReport", "TransitionFit", "DulacReport",
    "find_equilibrium", "saddle_ratio", "contact_order", "jump_power_order",
    "analyze_saddle", "analyze_jump", "analyze_singularity",
    "empirical_transition_exponent", "dulac_bounds_check", "reverse_system",
]


class NonConvergence(ArithmeticError):
    pass


class SingularJacobian(NonConvergence):
    pass


class NotASaddle(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class EscapeError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Saddles


def find_equilibrium(fd: FieldDef, guess: Sequence[float], tol: float = 1e-12,
                     max_iter: int = 50) -> tuple[float, float]:
    """Newton iteration on the field with its symbolic Jacobian."""
    p = np.array([float(guess[0]), float(guess[1])])
    for _ in range(max_iter + 1):
        fv = np.array(fd(p))
        if np.hypot(*fv) <= tol:
            return (float(p[0]), float(p[1]))
        jac = fd.jacobian(p)
        if abs(np.linalg.det(jac)) < 1e-300 or np.linalg.cond(jac) > 1e14:
            raise SingularJacobian(f"singular Jacobian at {tuple(p)}")
        p = p - np.linalg.solve(jac, fv)
        if not np.all(np.isfinite(p)):
            break
    raise NonConvergence(f"Newton did not reach |f| <= {tol} from {tuple(guess)}")


@dataclass(frozen=True)
class SaddleInfo:
    nu: float
    lam: float
    ratio: float
    jacobian: tuple[tuple[float, float], tuple[float, float]]
    e_s: tuple[float, float]
    e_u: tuple[float, float]


def _unit(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    # fix the arbitrary sign: first nonzero component positive
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return (float(v[0]), float(v[1]))


def saddle_ratio(fd: FieldDef, p: Sequence[float]) -> SaddleInfo:
    """Eigen-data of a hyperbolic saddle and its ratio ``|nu|/lambda``."""
    jac = fd.jacobian(p)
    (a, b), (c, d) = jac.tolist()
    # closed-form eigenvalues: symmetric pairs come out exactly symmetric
    half_tr = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if disc <= 0 or a * d - b * c >= 0:
        raise NotASaddle(f"Jacobian {jac.tolist()} at {tuple(p)} is not that of a saddle")
    root = math.sqrt(disc)
    nu, lam = half_tr - root, half_tr + root
    if not nu < 0 < lam:
        raise NotASaddle(f"eigenvalues {nu}, {lam} at {tuple(p)} are not those of a saddle")
    vals, vecs = np.linalg.eig(jac)
    k_s, k_u = (0, 1) if vals.real[0] < vals.real[1] else (1, 0)
    vecs = vecs.real
    return SaddleInfo(nu, lam, abs(nu) / lam, tuple(map(tuple, jac.tolist())),
                      _unit(vecs[:, k_s]), _unit(vecs[:, k_u]))


# --------------------------------------------------------------------------
# Contact and power orders


def contact_order(fd: FieldDef, h: Expression, p: Sequence[float], max_order: int = 8,
                  lie_tol: float = 1e-9) -> tuple[int | None, float]:
    """First ``k <= max_order`` with ``|X^k h(p)| > lie_tol``; ``(None, 0.0)`` if there is none."""
    env = {"x": float(p[0]), "y": float(p[1])}
    fx, fy = fd.f
    cur = h
    for k in range(1, max_order + 1):
        cur = ex.add(ex.mul(fx, ex.differentiate(cur, "x")), ex.mul(fy, ex.differentiate(cur, "y")))
        v = ex.evaluate(cur, env)
        if abs(v) > lie_tol:
            return k, v
    return None, 0.0


@dataclass(frozen=True)
class PowerOrder:
    k0: int | None
    a_k0: float | None
    coefficients: tuple[float, ...]
    chart_axis: int


def jump_power_order(sys: HybridSystemDef, i: int, p: Sequence[float], max_order: int | None = None,
                     chart_axis: int | None = None) -> PowerOrder:
    """Index of the first non-negligible Taylor coefficient of the jump in graph charts.

    A coefficient counts as zero when it is below ``coeff_tol`` times the
    largest lower-order magnitude (or ``coeff_tol`` itself when that is below 1).
    """
    tol = sys.tolerances
    max_order = tol.max_order if max_order is None else max_order
    pc = classify_point(sys, p)
    if not isinstance(pc, RegularBoundary) or pc.manifold_index != i:
        raise PreconditionError(f"{tuple(p)} is not a regular point of manifold {i}: {pc}")
    coeffs, _ = jump_chart_series(sys, i, p, max_order, chart_axis)
    axis = chart_axis if chart_axis is not None else _axis(sys, i, p)
    scale = 1.0
    for k in range(1, max_order + 1):
        if abs(coeffs[k]) > tol.coeff_tol * scale:
            return PowerOrder(k, coeffs[k], tuple(coeffs), axis)
        scale = max(scale, abs(coeffs[k]))
    return PowerOrder(None, None, tuple(coeffs), axis)


def _axis(sys, i, p):
    from .sysdef import chart_axis as _ca
    return _ca(sys.manifolds[i], p, sys.tolerances.grad_tol)


# --------------------------------------------------------------------------
# Reports

HYPERBOLIC_SADDLE = "HyperbolicSaddle"
JUMP_SINGULARITY = "JumpSingularity"


@dataclass
class SingularityReport:
    kind: str
    p: tuple[float, float]
    p_bar: tuple[float, float]
    ratio: float | None
    nu: float | None = None
    lam: float | None = None
    n_s: int | None = None
    n_u: int | None = None
    k0: int | None = None
    a_k0: float | None = None
    diagnostics: list[str] = field(default_factory=list)
    field_index: int | None = None
    field_in: int | None = None
    field_out: int | None = None
    manifold_index: int | None = None
    incoming_side: int | None = None
    outgoing_side: int | None = None
    event_kind: str | None = None
    jacobian: tuple | None = None
    e_s: tuple[float, float] | None = None
    e_u: tuple[float, float] | None = None

    @property
    def ratio_is_infinite(self) -> bool:
        return self.ratio is not None and math.isinf(self.ratio)

    @property
    def indeterminate(self) -> bool:
        return self.ratio is None

    def to_json(self) -> dict:
        return {
            "kind": self.kind, "p": list(self.p), "p_bar": list(self.p_bar),
            "nu": self.nu, "lambda": self.lam, "n_s": self.n_s, "n_u": self.n_u,
            "k0": self.k0 if self.k0 is not None else ("exceeds max_order" if self.kind == JUMP_SINGULARITY else None),
            "a_k0": self.a_k0,
            "ratio": None if self.ratio is None or math.isinf(self.ratio) else self.ratio,
            "ratio_is_infinite": self.ratio_is_infinite,
            "jacobian": None if self.jacobian is None else [list(r) for r in self.jacobian],
            "diagnostics": list(self.diagnostics),
        }


def analyze_saddle(sys: HybridSystemDef, guess: Sequence[float], field_index: int | None = None) -> SingularityReport:
    if field_index is None:
        field_index = region_of(sys, guess)
    fd = sys.fields[field_index]
    p = find_equilibrium(fd, guess)
    info = saddle_ratio(fd, p)
    return SingularityReport(HYPERBOLIC_SADDLE, p, p, info.ratio, nu=info.nu, lam=info.lam,
                             field_index=field_index, jacobian=info.jacobian, e_s=info.e_s, e_u=info.e_u)


def analyze_jump(sys: HybridSystemDef, p: Sequence[float], manifold_index: int | None = None,
                 incoming_side: int | None = None, outgoing_side: int | None = None,
                 max_order: int | None = None, assume_flat: bool = False) -> SingularityReport:
    """Contact orders on both sides, power order and ratio ``(n_u/n_s)*k0``."""
    from .sysdef import classify_boundary_event

    tol = sys.tolerances
    max_order = tol.max_order if max_order is None else max_order
    pc = classify_point(sys, p)
    if not isinstance(pc, RegularBoundary):
        raise PreconditionError(f"{tuple(p)} is not a regular boundary point: {pc}")
    i, p_bar = pc.manifold_index, pc.p_bar
    if manifold_index is not None and manifold_index != i:
        raise PreconditionError(f"{tuple(p)} lies on manifold {i}, not {manifold_index}")
    ev = classify_boundary_event(sys, p, incoming_side, outgoing_side)
    s_in = incoming_side if incoming_side is not None else ev.incoming_side
    s_out = outgoing_side if outgoing_side is not None else ev.outgoing_side
    if s_in is None or s_out is None:
        raise SideError(f"cannot resolve the {'incoming' if s_in is None else 'outgoing'} side at {tuple(p)}")
    f_in = field_for_side(sys, i, p, s_in)
    f_out = field_for_side(sys, i, p_bar, s_out)
    diags = []
    n_s, v_s = contact_order_value(sys, f_in, i, p, max_order)
    n_u, v_u = contact_order_value(sys, f_out, i, p_bar, max_order)
    if n_s is not None and (1 if v_s > 0 else -1) * (-1) ** n_s != s_in:
        raise SideError(f"orbits do not arrive at {tuple(p)} from side {s_in}")
    if n_u is not None and (1 if v_u > 0 else -1) != s_out:
        raise SideError(f"orbits do not leave {tuple(p_bar)} into side {s_out}")
    po = jump_power_order(sys, i, p, max_order)
    rep = SingularityReport(JUMP_SINGULARITY, tuple(map(float, p)), p_bar, None, n_s=n_s, n_u=n_u,
                            k0=po.k0, a_k0=po.a_k0, field_in=f_in, field_out=f_out, manifold_index=i,
                            incoming_side=s_in, outgoing_side=s_out, event_kind=ev.kind,
                            diagnostics=diags)
    if n_s is None or n_u is None:
        diags.append(f"contact order exceeds max_order={max_order} (candidate flat point)")
        return rep
    if po.k0 is None:
        bound = n_u / n_s * (max_order + 1)
        diags.append(f"power order exceeds max_order={max_order}; ratio >= {bound!r}")
        if assume_flat:
            diags.append("treated as infinite (assume_flat)")
            rep.ratio = math.inf
        return rep
    rep.ratio = n_u / n_s * po.k0
    return rep


def analyze_singularity(sys: HybridSystemDef, descriptor: dict, max_order: int | None = None,
                        assume_flat: bool = False) -> SingularityReport:
    """Dispatch on ``{"type": "saddle", "guess": ...}`` or ``{"type": "jump", "p": ...}``."""
    kind = descriptor.get("type")
    if kind == "saddle":
        return analyze_saddle(sys, descriptor["guess"], descriptor.get("field"))
    if kind == "jump":
        mi = descriptor.get("manifold")
        if isinstance(mi, str):
            mi = sys.manifold_index(mi)
        return analyze_jump(sys, descriptor["p"], mi, descriptor.get("incoming_side"),
                            descriptor.get("outgoing_side"), max_order, assume_flat)
    raise ValueError(f"unknown singularity type {kind!r}")


# --------------------------------------------------------------------------
# Integration helpers


def _flow_until(f, y0, g: Callable, t_max: float, opts: IntegratorOptions,
                guard: Callable | None = None) -> tuple[tuple[float, float], float] | None:
    """Integrate until ``g`` changes sign; returns the refined point and time."""
    g_prev = g(y0)
    for step in dopri_steps(f, 0.0, y0, t_max, opts):
        g_new = g(step.y1)
        if g_prev != 0 and (g_new == 0 or (g_new > 0) != (g_prev > 0)):
            def gt(th):
                return g(step.at(th))
            th = 1.0 if g_new == 0 else brentq(gt, 0.0, 1.0, xtol=1e-16, rtol=1e-15)
            return step.at(th), step.t0 + th * step.h
        if guard is not None and guard(step.y1):
            raise EscapeError(f"trajectory left the admissible region near {step.y1}")
        g_prev = g_new
    return None


def _negated(f):
    def nf(x, y):
        a, b = f(x, y)
        return (-a, -b)
    return nf


# --------------------------------------------------------------------------
# Transition exponent


@dataclass(frozen=True)
class TransitionFit:
    exponent: float
    contact_order: int
    xs: tuple[float, ...]
    values: tuple[float, ...]
    residual: float
    dropped: int


def empirical_transition_exponent(fd: FieldDef, h: Expression, p: Sequence[float], samples: int = 10,
                                  x_min: float = 1e-3, x_max: float = 1e-1,
                                  section_offset: float = 1e-3, max_order: int = 8,
                                  lie_tol: float = 1e-9) -> TransitionFit:
    """Fit the exponent of the transition map from the manifold to a transversal section.

    The start section runs along the manifold from ``p`` in the direction of
    the field; the target section is perpendicular to the orbit through
    ``p`` at distance ``max(section_offset, 2*x_max)`` downstream.
    """
    p = (float(p[0]), float(p[1]))
    hf = ex.compile_expr(h)
    hgrad = ex.compile_expr((ex.differentiate(h, "x"), ex.differentiate(h, "y")))
    if abs(hf(*p)) > 1e-9:
        raise PreconditionError(f"{p} is not on the manifold")
    m, _ = contact_order(fd, h, p, max_order, lie_tol)
    if m is None or m < 2:
        raise PreconditionError(f"no tangency at {p} (contact order {m})")
    f = fd.fn
    vx, vy = f(*p)
    speed = math.hypot(vx, vy)
    d = (vx / speed, vy / speed)
    opts = IntegratorOptions(rel_tol=1e-13, abs_tol=1e-22, h_init=1e-4, h_min=1e-16, h_max=0.05)
    offset = max(section_offset, 2.0 * x_max)
    # point on the orbit through p at arclength about `offset`
    base = _flow_until(f, p, lambda q: (q[0] - p[0]) * d[0] + (q[1] - p[1]) * d[1] - offset, 1e3, opts)
    if base is None:
        raise PreconditionError("orbit through the tangency does not reach the target section")
    c, _ = base
    cv = f(*c)
    cs = math.hypot(*cv)
    n = (cv[0] / cs, cv[1] / cs)
    tang = (-n[1], n[0])

    def on_sigma(s: float) -> tuple[float, float]:
        q = [p[0] + s * d[0], p[1] + s * d[1]]
        for _ in range(50):
            hv = hf(*q)
            gx, gy = hgrad(*q)
            g2 = gx * gx + gy * gy
            q = [q[0] - hv * gx / g2, q[1] - hv * gy / g2]
            if abs(hv) <= 1e-16:
                break
        return (q[0], q[1])

    xs = np.geomspace(x_min, x_max, samples)
    vals = []
    for s in xs:
        q0 = on_sigma(float(s))
        hit = _flow_until(f, q0, lambda q: (q[0] - c[0]) * n[0] + (q[1] - c[1]) * n[1], 1e3, opts)
        if hit is None:
            raise PreconditionError(f"orbit from the start section at x={s} misses the target section")
        q, _ = hit
        vals.append(abs((q[0] - c[0]) * tang[0] + (q[1] - c[1]) * tang[1]))
    lx, ly = np.log(xs), np.log(np.array(vals))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + icpt)) ** 2)))
    dropped = 0
    if resid > 1e-2 and samples > 4:
        slope, icpt = np.polyfit(lx[:-2], ly[:-2], 1)
        resid = float(np.sqrt(np.mean((ly[:-2] - (slope * lx[:-2] + icpt)) ** 2)))
        dropped = 2
    return TransitionFit(float(slope), m, tuple(float(v) for v in xs), tuple(vals), resid, dropped)


# --------------------------------------------------------------------------
# Dulac bounds


@dataclass(frozen=True)
class DulacReport:
    delta: float
    epsilon: float
    nu: float
    lam: float
    xs: tuple[float, ...]
    values: tuple[float, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    all_bounds_hold: bool
    margin: float
    closed_form_rel_err: float

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def dulac_bounds_check(fd: FieldDef, p: Sequence[float], epsilon: float, x_grid: Sequence[float],
                       delta: float | None = None, sys: HybridSystemDef | None = None) -> DulacReport:
    """Integrate the Dulac map near a saddle and test the two-sided power bounds.

    ``delta`` defaults to half the distance from the saddle to the nearest
    manifold of ``sys`` (capped at 1). Sections pass through the points of
    the stable and unstable manifolds at distance ``delta`` and are parallel
    to the other eigenvector.
    """
    p = find_equilibrium(fd, p)
    info = saddle_ratio(fd, p)
    if delta is None:
        delta = 1.0
        if sys is not None and sys.manifolds:
            dist = min(_distance_to_manifold(m, p) for m in sys.manifolds)
            delta = min(1.0, 0.5 * dist)
    f = fd.fn
    opts = IntegratorOptions(rel_tol=1e-13, abs_tol=1e-30, h_init=1e-4, h_min=1e-18, h_max=0.05)
    e_s, e_u = info.e_s, info.e_u

    def manifold_point(e, field_fn):
        start = (p[0] + 1e-9 * e[0], p[1] + 1e-9 * e[1])
        hit = _flow_until(field_fn, start, lambda q: math.hypot(q[0] - p[0], q[1] - p[1]) - delta, 1e4, opts)
        if hit is None:
            raise EscapeError("invariant manifold does not reach distance delta")
        return hit[0]

    s0 = manifold_point(e_s, _negated(f))
    u0 = manifold_point(e_u, f)
    # coordinates along e_s measured from u0: solve q - u0 = a*e_u + b*e_s
    basis = np.array([[e_u[0], e_s[0]], [e_u[1], e_s[1]]])
    inv = np.linalg.inv(basis)

    def b_coord(q):
        r = inv @ np.array([q[0] - u0[0], q[1] - u0[1]])
        return float(r[1]), float(r[0])

    def guard(q):
        return math.hypot(q[0] - p[0], q[1] - p[1]) > 3 * delta

    vals = []
    for x in x_grid:
        q0 = (s0[0] + x * e_u[0], s0[1] + x * e_u[1])
        hit = _flow_until(f, q0, lambda q: b_coord(q)[1], 1e4, opts, guard)
        if hit is None:
            raise EscapeError(f"orbit from x={x} does not reach the exit section")
        vals.append(abs(b_coord(hit[0])[0]))
    a, lam = abs(info.nu), info.lam
    lo = [delta ** (1 - a / (lam - epsilon)) * x ** (a / (lam - epsilon)) for x in x_grid]
    hi = [delta ** (1 - a / (lam + epsilon)) * x ** (a / (lam + epsilon)) for x in x_grid]
    closed = [delta * (x / delta) ** (a / lam) for x in x_grid]
    ok = all(l < v < u for l, v, u in zip(lo, vals, hi))
    margin = min(min(v / l, u / v) for l, v, u in zip(lo, vals, hi))
    err = max(abs(v - c) / c for v, c in zip(vals, closed))
    return DulacReport(delta, epsilon, info.nu, lam, tuple(map(float, x_grid)), tuple(vals),
                       tuple(lo), tuple(hi), ok, margin, err)


def _distance_to_manifold(m: ManifoldDef, p, radius: float = 10.0, n: int = 180) -> float:
    """Approximate Euclidean distance from ``p`` to ``h = 0``.

    Coarse ray shooting brackets a root along each direction; the best ray
    angle is then refined by a bounded scalar minimization.
    """
    h0 = m.value(p)
    if h0 == 0:
        return 0.0
    radii = np.geomspace(1e-6, radius, 60)

    def ray_root(ang: float, limit: float = math.inf) -> float:
        d = (math.cos(ang), math.sin(ang))
        prev_s, prev_v = 0.0, h0
        for s in radii:
            if s > limit:
                break
            try:
                v = m.value((p[0] + s * d[0], p[1] + s * d[1]))
            except ex.DomainError:
                break
            if (v > 0) != (prev_v > 0) or v == 0:
                return brentq(lambda r: m.value((p[0] + r * d[0], p[1] + r * d[1])), prev_s, s)
            prev_s, prev_v = s, v
        return math.inf

    best, best_ang = math.inf, 0.0
    for k in range(n):
        ang = 2 * math.pi * k / n
        r = ray_root(ang, best)
        if r < best:
            best, best_ang = r, ang
    if not math.isfinite(best):
        return best
    step = 2 * math.pi / n
    res = minimize_scalar(ray_root, bounds=(best_ang - step, best_ang + step), method="bounded",
                          options={"xatol": 1e-10})
    return min(best, float(res.fun)) if math.isfinite(res.fun) else best


# --------------------------------------------------------------------------
# Time reversal


def reverse_system(sys: HybridSystemDef) -> HybridSystemDef:
    """Same manifolds with inverted jumps and negated fields."""
    manifolds = []
    for m in sys.manifolds:
        jump = m.jump
        if isinstance(jump, InverseJump):
            jump = jump.forward
        elif not jump.is_identity:
            jump = InverseJump(jump, m.h)
        manifolds.append(ManifoldDef(m.name, m.h, jump))
    fields = [FieldDef(fd.signs, (ex.neg(fd.f[0]), ex.neg(fd.f[1]))) for fd in sys.fields]
    return HybridSystemDef(tuple(manifolds), tuple(fields), sys.params, sys.tolerances,
                           (sys.name + " (reversed)").strip())
