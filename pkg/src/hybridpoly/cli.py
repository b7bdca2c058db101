"""Command-line front end: ``hybridpoly <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 polycycle is not hyperbolic, 4 a validation check failed.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from typing import Any, Sequence

import numpy as np
from scipy.optimize import root

from . import __version__
from . import expr as ex
from .flow import SectionDef, flow_hybrid, trajectory_to_csv, trajectory_to_dict
from .integrator import IntegrationError, IntegratorOptions
from .local import (
    EscapeError, NonConvergence, NotASaddle, PreconditionError, contact_order, dulac_bounds_check,
    empirical_transition_exponent, find_equilibrium, reverse_system, saddle_ratio,
)
from .polycycle import NotHyperbolicPolycycle, analyze_polycycle, load_spec_file
from .retmap import (
    BracketInvalid, NoReturn, ReturnMapOptions, find_fixed_point, probe_to_csv, stability_probe,
)
from .sysdef import (
    ChartError, ConfigError, HybridSystemDef, RegularBoundary, SideError, classify_boundary_event,
    classify_point, load_system,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_NOT_HYPERBOLIC = 3
EXIT_VALIDATION = 4

CHECKS = ("dulac", "transition", "derivatives")


class ValidationFailed(Exception):
    pass


def tool_version() -> str:
    return __version__


# --------------------------------------------------------------------------
# Output helpers


def _fmt(v: float) -> str:
    return "%.17g" % v


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the output stays strict JSON."""
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return _clean(o.item())
    return o


def dumps(obj: Any) -> str:
    # json emits repr() of floats, which is the shortest round-tripping form
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects output files and writes the manifest at the end."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = args.out
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.tolerances: dict | None = None
        self.t_start = time.perf_counter()

    def add_input(self, path: str) -> None:
        self.inputs[path] = _sha256(path)

    def write(self, name: str, text: str) -> str:
        path = os.path.join(self.out, name)
        atomic_write(path, text)
        self.outputs.append(name)
        return path

    def manifest(self, exit_code: int, error: str | None) -> dict:
        flags = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func",)}
        repro = self.args.reproducible
        return {
            "tool": "hybridpoly",
            "version": tool_version(),
            "subcommand": self.args.command,
            "flags": flags,
            "inputs": self.inputs,
            "tolerances": self.tolerances,
            "outputs": self.outputs,
            "exit_code": exit_code,
            "error": error,
            "started_at": None if repro else datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "duration_s": None if repro else time.perf_counter() - self.t_start,
        }

    def finish(self, exit_code: int, error: str | None = None) -> None:
        atomic_write(os.path.join(self.out, "manifest.json"), dumps(self.manifest(exit_code, error)))


# --------------------------------------------------------------------------
# Argument parsing helpers


def _floats(text: str, n: int | None = None, what: str = "value") -> list[float]:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{what}: values must be finite")
    return vals


def _tol_overrides(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _load(run: Run) -> HybridSystemDef:
    args = run.args
    path = args.system or args.config
    if not path:
        raise ConfigError("no system file given (positional argument or --config)")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    run.add_input(path)
    overrides = {}
    for k, v in _tol_overrides(args.tol).items():
        try:
            overrides[k] = int(v) if v.lstrip("+-").isdigit() else float(v)
        except ValueError:
            raise ConfigError(f"--tol {k}: {v!r} is not a number") from None
    try:
        sys_ = load_system(text, tolerance_overrides=overrides or None)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    run.tolerances = sys_.tolerances.as_dict()
    return sys_


# --------------------------------------------------------------------------
# Subcommands


def cmd_simulate(run: Run) -> int:
    args = run.args
    sys_ = _load(run)
    x0 = _floats(args.x0, 2, "--x0")
    opts = IntegratorOptions.from_tolerances(sys_.tolerances)
    traj = flow_hybrid(sys_, x0, args.tmax, args.max_jumps, opts, stop_on_singular=args.stop_on_singular)
    if args.format == "csv":
        run.write("trajectory.csv", trajectory_to_csv(traj))
    else:
        run.write("trajectory.json", dumps(trajectory_to_dict(traj)))
    print(f"{traj.termination}: {len(traj.jumps)} jumps, t_end={_fmt(traj.t_end)}")
    return EXIT_OK


def cmd_analyze(run: Run) -> int:
    args = run.args
    sys_ = _load(run)
    run.add_input(args.spec)
    spec = load_spec_file(args.spec)
    opts = IntegratorOptions.from_tolerances(sys_.tolerances)
    verdict = analyze_polycycle(sys_, spec, max_order=args.max_order, opts=opts)
    run.write("verdict.json", dumps(verdict.to_json()))
    print(f"r = {verdict.r!r}: {verdict.verdict}")
    return EXIT_OK


def _section_from_args(args) -> tuple[SectionDef, dict]:
    """Section plus optional grid/bracket defaults from a polycycle file."""
    defaults: dict[str, Any] = {}
    text = args.section
    if text is None:
        raise ConfigError("--section is required (bx,by,dx,dy,length or a polycycle file)")
    if os.path.exists(text):
        spec = load_spec_file(text)
        defaults = {"grid": spec.probe_grid, "bracket": spec.bracket}
        return spec.section, defaults
    bx, by, dx, dy, length = _floats(text, 5, "--section")
    try:
        return SectionDef((bx, by), (dx, dy), length), defaults
    except ValueError as exc:
        raise ConfigError(f"--section: {exc}") from None


def cmd_return_map(run: Run) -> int:
    args = run.args
    sys_ = _load(run)
    section, defaults = _section_from_args(args)
    if os.path.exists(args.section):
        run.add_input(args.section)
    if args.reverse:
        sys_ = reverse_system(sys_)
    ropts = ReturnMapOptions(orientation=args.orientation, t_max=args.t_max, max_jumps=args.max_jumps,
                             integrator=IntegratorOptions.from_tolerances(sys_.tolerances))
    grid = _floats(args.grid, what="--grid") if args.grid else None
    bracket = _floats(args.bracket, 2, "--bracket") if args.bracket else None
    if grid is None and bracket is None:
        grid = defaults.get("grid")
        if grid is None:
            bracket = defaults.get("bracket")
    if grid is None and bracket is None:
        raise ConfigError("return-map needs --grid or --bracket")
    if grid is not None:
        try:
            res = stability_probe(sys_, section, grid, ropts)
        except ValueError as exc:
            raise ConfigError(f"--grid: {exc}") from None
        run.write("probe.csv", probe_to_csv(res))
        if args.svg:
            run.write("probe.svg", probe_svg(res, reproducible=args.reproducible))
        print(f"empirical verdict: {res.verdict}{' (degenerate)' if res.degenerate else ''}")
        return EXIT_OK
    fp = find_fixed_point(sys_, section, tuple(bracket), tol=args.xtol, opts=ropts)
    run.write("fixed_point.json", dumps(fp.to_json()))
    period = flow_hybrid(sys_, section.point(fp.s_star), fp.period_time, ropts.max_jumps,
                         ropts.integrator, stop_on_singular=False)
    run.write("periodic_orbit.csv", trajectory_to_csv(period))
    print(f"s* = {fp.s_star!r}, gap = {fp.gap!r}, period = {fp.period_time!r}")
    return EXIT_OK


def probe_svg(res, reproducible: bool = False, width: int = 480, height: int = 480) -> str:
    """Static plot of ``(s, pi(s))`` against the diagonal, axes padded by 5%."""
    pts = [(e.s, e.pi_s) for e in res.entries if e.pi_s is not None]
    vals = [v for p in pts for v in p] or [0.0, 1.0]
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def X(v):
        return 40 + (width - 60) * (v - lo) / (hi - lo)

    def Y(v):
        return height - 40 - (height - 60) * (v - lo) / (hi - lo)

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if not reproducible:
        out.append(f"<!-- generated {datetime.datetime.now(datetime.timezone.utc).isoformat()} -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
               f'viewBox="0 0 {width} {height}">')
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<line x1="{X(lo):.3f}" y1="{Y(lo):.3f}" x2="{X(hi):.3f}" y2="{Y(lo):.3f}" stroke="black"/>')
    out.append(f'<line x1="{X(lo):.3f}" y1="{Y(lo):.3f}" x2="{X(lo):.3f}" y2="{Y(hi):.3f}" stroke="black"/>')
    out.append(f'<line x1="{X(lo):.3f}" y1="{Y(lo):.3f}" x2="{X(hi):.3f}" y2="{Y(hi):.3f}" '
               'stroke="gray" stroke-dasharray="4 3"/>')
    if len(pts) > 1:
        path = " ".join(f"{X(s):.3f},{Y(p):.3f}" for s, p in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="steelblue"/>')
    for s, p in pts:
        out.append(f'<circle cx="{X(s):.3f}" cy="{Y(p):.3f}" r="3" fill="steelblue"/>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="12">s</text>')
    out.append(f'<text x="12" y="{height / 2:.0f}" font-size="12">pi(s)</text>')
    out.append(f'<text x="40" y="{height - 25}" font-size="10">{lo:.4g}</text>')
    out.append(f'<text x="{width - 60}" y="{height - 25}" font-size="10">{hi:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# Validation


def _find_saddles(sys_: HybridSystemDef, radius: float = 3.0, n: int = 7) -> list[tuple[int, tuple]]:
    found: list[tuple[int, tuple]] = []
    seeds = np.linspace(-radius, radius, n)
    for fi, fd in enumerate(sys_.fields):
        for gx in seeds:
            for gy in seeds:
                try:
                    p = find_equilibrium(fd, (gx, gy))
                    saddle_ratio(fd, p)
                except (NonConvergence, NotASaddle, ArithmeticError):
                    continue
                if any(fj == fi and math.hypot(p[0] - q[0], p[1] - q[1]) < 1e-6 for fj, q in found):
                    continue
                found.append((fi, (float(p[0]), float(p[1]))))
    return found


def _find_tangencies(sys_: HybridSystemDef, radius: float = 3.0, n: int = 7) -> list[tuple[int, int, tuple]]:
    """Solve ``h = 0, Xh = 0`` from a grid of seeds for every manifold/field pair."""
    found: list[tuple[int, int, tuple]] = []
    seeds = np.linspace(-radius, radius, n)
    lie_tol = sys_.tolerances.lie_tol
    for mi, m in enumerate(sys_.manifolds):
        for fi, fd in enumerate(sys_.fields):
            xh = ex.add(ex.mul(fd.f[0], m.grad[0]), ex.mul(fd.f[1], m.grad[1]))
            F = ex.compile_expr((m.h, xh))
            for gx in seeds:
                for gy in seeds:
                    try:
                        sol = root(lambda q: F(*q), (gx, gy), method="hybr", tol=1e-14)
                    except (ArithmeticError, ValueError):
                        continue
                    if not sol.success:
                        continue
                    p = (float(sol.x[0]), float(sol.x[1]))
                    try:
                        if max(abs(v) for v in F(*p)) > lie_tol:
                            continue
                        if not (fd.matches(_side_signs(sys_, mi, p, 1)) or
                                fd.matches(_side_signs(sys_, mi, p, -1))):
                            continue
                        mo, _ = contact_order(fd, m.h, p, sys_.tolerances.max_order, lie_tol)
                    except (ArithmeticError, ValueError):
                        continue
                    if mo is None or mo < 2:
                        continue
                    if any(a == mi and b == fi and math.hypot(p[0] - q[0], p[1] - q[1]) < 1e-6
                           for a, b, q in found):
                        continue
                    found.append((mi, fi, p))
    return found


def _side_signs(sys_: HybridSystemDef, mi: int, p, side: int) -> list[int]:
    signs = []
    for j, m in enumerate(sys_.manifolds):
        if j == mi:
            signs.append(side)
        else:
            v = m.value(p)
            signs.append(0 if v == 0 else (1 if v > 0 else -1))
    return signs


def check_derivatives(sys_: HybridSystemDef, n: int = 50, seed: int = 0, radius: float = 2.0,
                      rel_tol: float = 1e-5) -> dict:
    """Symbolic partial derivatives of every field and manifold function against central differences."""
    rng = np.random.default_rng(seed)
    exprs = [("field %d component %d" % (k, c), fd.f[c]) for k, fd in enumerate(sys_.fields) for c in (0, 1)]
    exprs += [("manifold %s" % m.name, m.h) for m in sys_.manifolds]
    worst, tested = 0.0, 0
    for label, e in exprs:
        fn = ex.compile_expr(e)
        dfs = [ex.compile_expr(ex.differentiate(e, v)) for v in ("x", "y")]
        for _ in range(n):
            p = rng.uniform(-radius, radius, 2)
            for k, df in enumerate(dfs):
                h = 1e-6 * max(1.0, abs(p[k]))
                a, b = p.copy(), p.copy()
                a[k] += h
                b[k] -= h
                try:
                    sym = df(*p)
                    num = (fn(*a) - fn(*b)) / (2 * h)
                except ArithmeticError:
                    continue
                err = abs(sym - num) / max(1.0, abs(sym))
                tested += 1
                worst = max(worst, err)
    return {"check": "derivatives", "passed": worst <= rel_tol, "worst_rel_err": worst,
            "tolerance": rel_tol, "samples": tested}


def check_dulac(sys_: HybridSystemDef, saddle: Sequence[float] | None, epsilon: float) -> list[dict]:
    targets = _find_saddles(sys_) if saddle is None else _saddle_at(sys_, saddle)
    grid = np.geomspace(1e-4, 1e-2, 10)
    out = []
    for fi, p in targets:
        rep = dulac_bounds_check(sys_.fields[fi], p, epsilon, grid, sys=sys_)
        out.append({"check": "dulac", "saddle": p, "field_index": fi, "passed": rep.all_bounds_hold,
                    "margin": rep.margin, "closed_form_rel_err": rep.closed_form_rel_err,
                    "delta": rep.delta, "epsilon": epsilon, "nu": rep.nu, "lambda": rep.lam})
    return out


def _saddle_at(sys_: HybridSystemDef, guess) -> list[tuple[int, tuple]]:
    for fi, fd in enumerate(sys_.fields):
        try:
            p = find_equilibrium(fd, guess)
            saddle_ratio(fd, p)
            return [(fi, (float(p[0]), float(p[1])))]
        except (NonConvergence, NotASaddle, ArithmeticError):
            continue
    raise ValidationFailed(f"no hyperbolic saddle near {tuple(guess)}")


def check_transition(sys_: HybridSystemDef, tangency: Sequence[float] | None, rel: float = 0.05) -> list[dict]:
    if tangency is None:
        targets = _find_tangencies(sys_)
    else:
        p = tuple(tangency)
        targets = []
        for mi, m in enumerate(sys_.manifolds):
            if m.distance(p) > 1e-6:
                continue
            for fi, fd in enumerate(sys_.fields):
                mo, _ = contact_order(fd, m.h, p, sys_.tolerances.max_order, sys_.tolerances.lie_tol)
                if mo is not None and mo >= 2:
                    targets.append((mi, fi, p))
        if not targets:
            raise ValidationFailed(f"no tangency at {p}")
    out = []
    for mi, fi, p in targets:
        fit = empirical_transition_exponent(sys_.fields[fi], sys_.manifolds[mi].h, p,
                                            lie_tol=sys_.tolerances.lie_tol)
        err = abs(fit.exponent - fit.contact_order) / fit.contact_order
        out.append({"check": "transition", "point": p, "manifold": sys_.manifolds[mi].name,
                    "field_index": fi, "contact_order": fit.contact_order, "exponent": fit.exponent,
                    "rel_err": err, "tolerance": rel, "passed": err <= rel})
    return out


def cmd_validate(run: Run) -> int:
    args = run.args
    sys_ = _load(run)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = sorted(set(checks) - set(CHECKS))
    if unknown or not checks:
        raise ConfigError(f"--checks: unknown check(s) {unknown}; known: {','.join(CHECKS)}")
    saddle = _floats(args.saddle, 2, "--saddle") if args.saddle else None
    tangency = _floats(args.tangency, 2, "--tangency") if args.tangency else None
    results: list[dict] = []
    for c in checks:
        try:
            if c == "derivatives":
                results.append(check_derivatives(sys_))
            elif c == "dulac":
                rs = check_dulac(sys_, saddle, args.epsilon)
                results.extend(rs or [{"check": "dulac", "passed": True, "skipped": "no saddle found"}])
            else:
                rs = check_transition(sys_, tangency)
                results.extend(rs or [{"check": "transition", "passed": True, "skipped": "no tangency found"}])
        except (ValidationFailed, PreconditionError, EscapeError, NonConvergence) as exc:
            results.append({"check": c, "passed": False, "error": str(exc)})
    ok = all(r["passed"] for r in results)
    run.write("validation.json", dumps({"passed": ok, "results": results}))
    for r in results:
        status = "skipped" if "skipped" in r else ("pass" if r["passed"] else "FAIL")
        detail = {k: r[k] for k in ("margin", "closed_form_rel_err", "exponent", "rel_err", "worst_rel_err", "error")
                  if k in r}
        print(f"{r['check']}: {status} {json.dumps(_clean(detail))}")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_classify_point(run: Run) -> int:
    args = run.args
    sys_ = _load(run)
    p = _floats(args.point, 2, "--point")
    cls = classify_point(sys_, p)
    out: dict[str, Any] = {"point": p, "class": type(cls).__name__}
    out.update({k: getattr(cls, k) for k in cls.__dataclass_fields__})
    if isinstance(cls, RegularBoundary):
        try:
            ev = classify_boundary_event(sys_, p, args.incoming_side, args.outgoing_side)
            out["event"] = ev.to_json()
        except SideError as exc:
            out["event_error"] = str(exc)
    run.write("classification.json", dumps(out))
    print(out.get("event", {}).get("kind", out["class"]))
    return EXIT_OK


# --------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="system configuration file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: .)")
    common.add_argument("--reproducible", action="store_true", default=argparse.SUPPRESS,
                        help="omit timestamps and timings from outputs")
    common.add_argument("--tol", action="append", default=argparse.SUPPRESS, metavar="NAME=VALUE",
                        help="override a tolerance (repeatable)")

    p = argparse.ArgumentParser(prog="hybridpoly", description="Stability analysis of hybrid polycycles.",
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.add_argument("system", nargs="?", help="system configuration file")
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "integrate a hybrid trajectory")
    sp.add_argument("--x0", required=True, help="initial point x,y")
    sp.add_argument("--tmax", type=float, default=10.0)
    sp.add_argument("--max-jumps", type=int, default=100)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--stop-on-singular", action="store_true")

    sp = add("analyze", cmd_analyze, "graphic number and stability verdict of a polycycle")
    sp.add_argument("--spec", required=True, help="polycycle file")
    sp.add_argument("--max-order", type=int, default=None)

    sp = add("return-map", cmd_return_map, "first-return probe or periodic-orbit search")
    sp.add_argument("--section", required=True,
                    help="bx,by,dx,dy,length or a polycycle file providing section and grid")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--grid", help="comma-separated section parameters")
    g.add_argument("--bracket", help="lo,hi for the fixed-point search")
    sp.add_argument("--reverse", action="store_true", help="use the time-reversed system")
    sp.add_argument("--svg", action="store_true", help="also write probe.svg")
    sp.add_argument("--orientation", type=int, choices=(-1, 0, 1), default=0)
    sp.add_argument("--t-max", type=float, default=200.0)
    sp.add_argument("--max-jumps", type=int, default=1000)
    sp.add_argument("--xtol", type=float, default=1e-10)

    sp = add("validate", cmd_validate, "numerical checks of the local theory on a system")
    sp.add_argument("--checks", default=",".join(CHECKS))
    sp.add_argument("--saddle", help="saddle guess x,y (default: search)")
    sp.add_argument("--tangency", help="tangency point x,y (default: search)")
    sp.add_argument("--epsilon", type=float, default=0.1)

    sp = add("classify-point", cmd_classify_point, "classify a point and its boundary event")
    sp.add_argument("--point", required=True, help="x,y")
    sp.add_argument("--incoming-side", type=int, choices=(-1, 1), default=None)
    sp.add_argument("--outgoing-side", type=int, choices=(-1, 1), default=None)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("config", None), ("out", "."), ("reproducible", False), ("tol", [])):
        if not hasattr(args, name):
            setattr(args, name, default)
    run = Run(args)
    error = None
    try:
        code = args.func(run)
    except ConfigError as exc:
        code, error = EXIT_CONFIG, f"configuration error: {exc}"
    except NotHyperbolicPolycycle as exc:
        code, error = EXIT_NOT_HYPERBOLIC, f"not a hyperbolic polycycle: {exc}"
    except ValidationFailed as exc:
        code, error = EXIT_VALIDATION, f"validation failed: {exc}"
    except (NoReturn, BracketInvalid, IntegrationError, NonConvergence, EscapeError,
            PreconditionError, ChartError, ArithmeticError) as exc:
        code, error = EXIT_NUMERIC, f"numerical failure: {exc}"
    if error:
        print(error, file=sys.stderr)
    try:
        run.finish(code, error)
    except OSError as exc:
        print(f"cannot write manifest: {exc}", file=sys.stderr)
        code = code or EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
