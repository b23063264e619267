"""Boundary replacement schemes for walks that reach a Neumann side.

Each scheme rests on a local expansion ``u(b) = E[u(new)] + a g(b) + c f(q) + O(h^k)``
and randomises it: the walker moves to ``new``, ``a g(b) + c f(q)`` joins the
score and the clock advances by the scheme's time increment.

=========  ====================  ===================  ==============  ==========
scheme     moves to              g weight             f weight, at    time
=========  ====================  ===================  ==============  ==========
fd1        b + h n               2h                   none            0
diamond    b + h n (1/2),        h                    h^2/2, at b     h^2/2
           b +- h t (1/4 each)
oneside3   b + h n +- h t        2h                   h^2, at b + hn  h^2
kinetic    b + h t_c v           4h/pi                h^2, at b       h^2 t_c
=========  ====================  ===================  ==============  ==========

The f weight is the occupation time the source term stands for, and the time
increment matches it in expectation, so a walk with ``f = 1`` scores its
elapsed time. ``n`` is the inward normal, ``t`` the tangent, ``t_c ~ Exp(1)``
and ``v`` is uniform on the inward half circle. When the stencil (or, for the kinetic
scheme, the sampled point) leaves the closed square, ``h`` is halved until it
fits and the weights are recomputed with the reduced step. At a corner the
inward direction is the normalised diagonal, the diamond falls back to the
one-sided stencil and kinetic points are mirrored back into the square.
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numba
import numpy as np

from .geometry import Point2, _frame, _inside, _mirror

FD1, DIAMOND, ONESIDE3, KINETIC = 0, 1, 2, 3
SCHEMES = {"fd1": FD1, "diamond": DIAMOND, "oneside3": ONESIDE3, "kinetic": KINETIC}

_MAX_HALVINGS = 60


class SchemeOutcome(NamedTuple):
    new_point: Point2
    score_inc: float
    time_inc: float
    h_used: float


def scheme_id(name) -> int:
    if isinstance(name, (int, np.integer)) and int(name) in SCHEMES.values():
        return int(name)
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None


@numba.njit(cache=True)
def _local_frame(bx, by, side, hw):
    """Inward normal and tangent at ``b``; the diagonal at a corner."""
    if abs(bx) >= hw and abs(by) >= hw:
        s = 1.0 / math.sqrt(2.0)
        nx = -s if bx > 0 else s
        ny = -s if by > 0 else s
        return nx, ny, -ny, nx
    return _frame(side)


@numba.njit(cache=True)
def _apply_scheme(kind, bx, by, side, h, rng, hw, fixed_time):
    """Apply one scheme at boundary point ``(bx, by)``.

    Returns ``(new_x, new_y, g_weight, f_weight, f_x, f_y, time_inc, h_used)``.
    """
    nx, ny, tx, ty = _local_frame(bx, by, side, hw)
    if kind == DIAMOND and abs(bx) >= hw and abs(by) >= hw:
        kind = ONESIDE3  # a diamond stencil cannot slide along two sides at once
    if kind == FD1:
        for _ in range(_MAX_HALVINGS):
            px = bx + h * nx
            py = by + h * ny
            if _inside(px, py, hw):
                return px, py, 2.0 * h, 0.0, bx, by, 0.0, h
            h *= 0.5
    elif kind == DIAMOND:
        for _ in range(_MAX_HALVINGS):
            if (_inside(bx + h * nx, by + h * ny, hw)
                    and _inside(bx + h * tx, by + h * ty, hw)
                    and _inside(bx - h * tx, by - h * ty, hw)):
                u = rng.random()
                if u < 0.5:
                    px, py = bx + h * nx, by + h * ny
                elif u < 0.75:
                    px, py = bx + h * tx, by + h * ty
                else:
                    px, py = bx - h * tx, by - h * ty
                return px, py, h, 0.5 * h * h, bx, by, 0.5 * h * h, h
            h *= 0.5
    elif kind == ONESIDE3:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        for _ in range(_MAX_HALVINGS):
            cx = bx + h * nx
            cy = by + h * ny
            if _inside(cx + h * tx, cy + h * ty, hw) and _inside(cx - h * tx, cy - h * ty, hw):
                return (cx + sign * h * tx, cy + sign * h * ty, 2.0 * h, h * h, cx, cy,
                        h * h, h)
            h *= 0.5
    else:
        corner = abs(bx) >= hw and abs(by) >= hw
        tc = rng.exponential()
        theta = math.pi * (rng.random() - 0.5)
        vn = math.cos(theta)
        vt = math.sin(theta)
        for _ in range(_MAX_HALVINGS):
            px = bx + h * tc * (vn * nx + vt * tx)
            py = by + h * tc * (vn * ny + vt * ty)
            if corner:
                # half the diagonal's velocities point out of the quadrant
                px = _mirror(px, hw)
                py = _mirror(py, hw)
            if _inside(px, py, hw):
                dt = h * h if fixed_time else h * h * tc
                return px, py, 4.0 * h / math.pi, h * h, bx, by, dt, h
            h *= 0.5
    raise ValueError("no interior replacement point after repeated halving")


def apply_scheme(name, b, side: int, h: float, f: Callable, g: Callable,
                 rng: np.random.Generator | None = None, half_width: float = 1.0,
                 fixed_time: bool = False) -> SchemeOutcome:
    """Apply a boundary scheme at ``b`` with Python-level data ``f(x, y)``, ``g(x, y)``.

    Parameters
    ----------
    name : {"fd1", "diamond", "oneside3", "kinetic"}
    b : point on side ``side`` of the square.
    h : nominal step; halved until the replacement is inside.
    fixed_time : kinetic scheme only, advance the clock by ``h^2`` instead of
        ``h^2 t_c``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if not 0 <= side < 4:
        raise ValueError(f"side must be 0..3, got {side}")
    bx, by = float(b[0]), float(b[1])
    if max(abs(bx), abs(by)) > half_width * (1 + 1e-12):
        raise ValueError("boundary point outside the square")
    rng = rng if rng is not None else np.random.default_rng()
    px, py, a, c, fx, fy, dt, h_used = _apply_scheme(scheme_id(name), bx, by, int(side), float(h),
                                                      rng, float(half_width), bool(fixed_time))
    score = a * g(bx, by)
    if c != 0.0:
        score += c * f(fx, fy)
    return SchemeOutcome(Point2(px, py), float(score), float(dt), float(h_used))


def fd1(b, side, h, f, g, rng=None, half_width=1.0) -> SchemeOutcome:
    """Order-one normal difference: score ``2 h g(b)``, move ``h`` inward, no time."""
    return apply_scheme(FD1, b, side, h, f, g, rng, half_width)


def fd3_diamond(b, side, h, f, g, rng=None, half_width=1.0) -> SchemeOutcome:
    """Diamond stencil with the ghost value eliminated."""
    return apply_scheme(DIAMOND, b, side, h, f, g, rng, half_width)


def fd3_oneside(b, side, h, f, g, rng=None, half_width=1.0) -> SchemeOutcome:
    """One-sided third-order stencil centred one step inside the boundary."""
    return apply_scheme(ONESIDE3, b, side, h, f, g, rng, half_width)


def kinetic(b, side, h, f, g, rng=None, half_width=1.0, fixed_time=False) -> SchemeOutcome:
    """Transport re-injection along a random inward velocity."""
    return apply_scheme(KINETIC, b, side, h, f, g, rng, half_width, fixed_time)


__all__ = ["SchemeOutcome", "SCHEMES", "FD1", "DIAMOND", "ONESIDE3", "KINETIC", "scheme_id",
           "apply_scheme", "fd1", "fd3_diamond", "fd3_oneside", "kinetic"]
