"""Dormand-Prince 5(4) stepping for planar fields with dense output.

The tableau is taken from :class:`scipy.integrate.RK45`; the stepping loop is
written out for two scalar components so that event detection can inspect
every accepted step and its interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

from scipy.integrate import RK45

from . import expr as ex
from .sysdef import Tolerances

__all__ = ["IntegratorOptions", "Step", "StepUnderflow", "MaxStepsExceeded",
           "IntegrationError", "dopri_steps", "single_step"]

_C = tuple(float(c) for c in RK45.C)
_A = tuple(tuple(float(a) for a in row) for row in RK45.A)
_B = tuple(float(b) for b in RK45.B)
_E = tuple(float(e) for e in RK45.E)
_P = tuple(tuple(float(p) for p in row) for row in RK45.P)


class IntegrationError(RuntimeError):
    pass


class StepUnderflow(IntegrationError):
    pass


class MaxStepsExceeded(IntegrationError):
    pass


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float = 0.1
    event_tol: float = 1e-11
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("step bounds must satisfy 0 < h_min <= h_init <= h_max")
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.event_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @classmethod
    def from_tolerances(cls, tol: Tolerances, **overrides) -> "IntegratorOptions":
        kw = dict(rel_tol=tol.rel_tol, abs_tol=tol.abs_tol, h_init=tol.h_init, h_min=tol.h_min,
                  h_max=tol.h_max, event_tol=tol.event_tol, max_steps=tol.max_steps)
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class Step:
    """One accepted step with its quartic dense-output polynomial."""

    t0: float
    h: float
    y0: tuple[float, float]
    y1: tuple[float, float]
    qx: tuple[float, float, float, float]
    qy: tuple[float, float, float, float]

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def at(self, theta: float) -> tuple[float, float]:
        """State at ``t0 + theta*h``, ``0 <= theta <= 1``."""
        if theta == 1.0:
            return self.y1
        qx, qy = self.qx, self.qy
        px = theta * (qx[0] + theta * (qx[1] + theta * (qx[2] + theta * qx[3])))
        py = theta * (qy[0] + theta * (qy[1] + theta * (qy[2] + theta * qy[3])))
        return (self.y0[0] + self.h * px, self.y0[1] + self.h * py)

    def truncated(self, theta: float, y_end: tuple[float, float]) -> "Step":
        """The same interpolant restricted to ``[t0, t0 + theta*h]`` and ending at ``y_end``."""
        sx = tuple(q * theta ** k for k, q in enumerate(self.qx))
        sy = tuple(q * theta ** k for k, q in enumerate(self.qy))
        return Step(self.t0, theta * self.h, self.y0, y_end, sx, sy)

    def velocity(self, theta: float) -> tuple[float, float]:
        qx, qy = self.qx, self.qy
        vx = qx[0] + theta * (2 * qx[1] + theta * (3 * qx[2] + theta * 4 * qx[3]))
        vy = qy[0] + theta * (2 * qy[1] + theta * (3 * qy[2] + theta * 4 * qy[3]))
        return (vx, vy)


def _stages(f, y, h, k1):
    """The seven Dormand-Prince stages starting from the known ``k1``."""
    ks = [k1]
    for i in range(1, 6):
        a = _A[i]
        sx = sy = 0.0
        for j in range(i):
            sx += a[j] * ks[j][0]
            sy += a[j] * ks[j][1]
        ks.append(f(y[0] + h * sx, y[1] + h * sy))
    bx = by = 0.0
    for j in range(6):
        bx += _B[j] * ks[j][0]
        by += _B[j] * ks[j][1]
    y_new = (y[0] + h * bx, y[1] + h * by)
    ks.append(f(*y_new))
    return ks, y_new


def _dense(ks) -> tuple[tuple, tuple]:
    qx = tuple(sum(ks[i][0] * _P[i][j] for i in range(7)) for j in range(4))
    qy = tuple(sum(ks[i][1] * _P[i][j] for i in range(7)) for j in range(4))
    return qx, qy


def single_step(f: Callable, y: tuple[float, float], h: float) -> tuple[float, float]:
    """Fifth-order Dormand-Prince step of size ``h`` without error control."""
    ks, y_new = _stages(f, y, h, f(*y))
    return y_new


def dopri_steps(f: Callable[[float, float], tuple[float, float]], t0: float,
                y0: tuple[float, float], t_end: float,
                opts: IntegratorOptions) -> Iterator[Step]:
    """Yield accepted steps from ``t0`` up to exactly ``t_end``.

    Raises :class:`StepUnderflow` when the step would drop below ``h_min``
    and :class:`MaxStepsExceeded` after ``max_steps`` accepted steps.
    """
    t = float(t0)
    y = (float(y0[0]), float(y0[1]))
    k1 = f(*y)
    h = min(opts.h_init, opts.h_max)
    rtol, atol = opts.rel_tol, opts.abs_tol
    n = 0
    while t < t_end:
        if n >= opts.max_steps:
            raise MaxStepsExceeded(f"max_steps={opts.max_steps} reached at t={t}")
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        try:
            ks, y_new = _stages(f, y, h, k1)
            ex_ = ey_ = 0.0
            for j in range(7):
                ex_ += _E[j] * ks[j][0]
                ey_ += _E[j] * ks[j][1]
            sx = atol + rtol * max(abs(y[0]), abs(y_new[0]))
            sy = atol + rtol * max(abs(y[1]), abs(y_new[1]))
            err = math.sqrt(0.5 * ((h * ex_ / sx) ** 2 + (h * ey_ / sy) ** 2))
            if not math.isfinite(err):
                raise OverflowError
        except (ex.DomainError, OverflowError, ZeroDivisionError):
            err = math.inf
        if err <= 1.0:
            qx, qy = _dense(ks)
            t_new = t_end if last else t + h
            yield Step(t, t_new - t, y, y_new, qx, qy)
            n += 1
            t, y, k1 = t_new, y_new, ks[6]
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = min(opts.h_max, max(opts.h_min, h * factor))
        else:
            factor = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            h_new = h * factor
            if h_new < opts.h_min:
                raise StepUnderflow(f"step size fell below h_min={opts.h_min} at t={t}")
            h = h_new
