"""Square domain primitives.

All walkers live on the closed square ``[-hw, hw]^2``. Sides are numbered
``RIGHT, TOP, LEFT, BOTTOM``; that order is also the tie-break priority when a
point is equidistant from two sides.

The Python-level functions accept a single point or an ``(n, 2)`` array. The
underscore-prefixed ``njit`` helpers are the scalar versions used inside the
compiled walkers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

RIGHT, TOP, LEFT, BOTTOM = 0, 1, 2, 3
SIDE_NAMES = ("right", "top", "left", "bottom")

NEUMANN, DIRICHLET = 0, 1

# inward unit normal and a unit tangent per side
INWARD = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
TANGENT = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])


class GeometryError(ValueError):
    """A point violates a containment precondition."""


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class SquareDomain:
    """The square ``[-half_width, half_width]^2`` with a boundary kind per side.

    ``kinds`` is indexed by side id (right, top, left, bottom).
    """

    half_width: float = 1.0
    kinds: tuple[int, int, int, int] = (NEUMANN, NEUMANN, NEUMANN, NEUMANN)

    def __post_init__(self):
        if len(self.kinds) != 4:
            raise ValueError("a square has exactly four sides")
        if any(k not in (NEUMANN, DIRICHLET) for k in self.kinds):
            raise ValueError(f"unknown boundary kind in {self.kinds}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @classmethod
    def pure_neumann(cls) -> "SquareDomain":
        return cls()

    @classmethod
    def mixed(cls) -> "SquareDomain":
        """Dirichlet on ``x = 1``, Neumann on the three other sides."""
        return cls(kinds=(DIRICHLET, NEUMANN, NEUMANN, NEUMANN))

    @property
    def has_dirichlet(self) -> bool:
        return DIRICHLET in self.kinds

    @property
    def kinds_array(self) -> np.ndarray:
        return np.asarray(self.kinds, dtype=np.int64)

    @property
    def area(self) -> float:
        return (2.0 * self.half_width) ** 2


def _as_points(p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 2:
        raise ValueError(f"expected points of shape (..., 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite coordinates")
    return arr, single


def side_distances(p, dom: SquareDomain) -> np.ndarray:
    """Signed distances to the four side lines, shape ``(n, 4)``; positive inside."""
    arr, _ = _as_points(p)
    hw = dom.half_width
    x, y = arr[:, 0], arr[:, 1]
    return np.stack([hw - x, hw - y, x + hw, y + hw], axis=1)


def contains(p, dom: SquareDomain):
    """Closed-square membership."""
    arr, single = _as_points(p)
    inside = np.all(side_distances(arr, dom) >= 0.0, axis=1)
    return bool(inside[0]) if single else inside


def distance_to_boundary(p, dom: SquareDomain):
    """Distance from a strictly interior point to the nearest side."""
    arr, single = _as_points(p)
    d = side_distances(arr, dom).min(axis=1)
    if np.any(d <= 0.0):
        raise GeometryError("distance_to_boundary needs strictly interior points")
    return float(d[0]) if single else d


def project_to_boundary(p, dom: SquareDomain):
    """Orthogonal projection on the nearest side.

    Returns ``(point, side)``. Ties go to the lowest side id, i.e. the priority
    right > top > left > bottom.
    """
    arr, single = _as_points(p)
    if not np.all(contains(np.atleast_2d(arr), dom)):
        raise GeometryError("project_to_boundary needs points inside the square")
    dist = side_distances(arr, dom)
    side = np.argmin(dist, axis=1)  # argmin returns the first minimum
    hw = dom.half_width
    out = arr.copy()
    out[side == RIGHT, 0] = hw
    out[side == TOP, 1] = hw
    out[side == LEFT, 0] = -hw
    out[side == BOTTOM, 1] = -hw
    if single:
        return Point2(float(out[0, 0]), float(out[0, 1])), int(side[0])
    return out, side


def symmetrize(p_out, dom: SquareDomain):
    """Mirror a proposed position back across every violated side.

    With identity diffusion the conormal is the normal, so the reflection is a
    coordinate mirror. Raises :class:`GeometryError` if a coordinate overshoots
    by more than ``2 * half_width`` (the mirror image would still be outside).
    """
    arr, single = _as_points(p_out)
    hw = dom.half_width
    out = np.where(arr > hw, 2.0 * hw - arr, arr)
    out = np.where(out < -hw, -2.0 * hw - out, out)
    if np.any(np.abs(out) > hw):
        raise GeometryError("overshoot too large for a single reflection")
    if single:
        return Point2(float(out[0, 0]), float(out[0, 1]))
    return out


# --- compiled scalar helpers -------------------------------------------------

@numba.njit(cache=True)
def _side_distance(x, y, side, hw):
    if side == RIGHT:
        return hw - x
    if side == TOP:
        return hw - y
    if side == LEFT:
        return x + hw
    return y + hw


@numba.njit(cache=True)
def _nearest_side(x, y, hw):
    best = 0
    dbest = hw - x
    for s in range(1, 4):
        d = _side_distance(x, y, s, hw)
        if d < dbest:
            dbest = d
            best = s
    return best, dbest


@numba.njit(cache=True)
def _project(x, y, side, hw):
    if side == RIGHT:
        return hw, min(max(y, -hw), hw)
    if side == TOP:
        return min(max(x, -hw), hw), hw
    if side == LEFT:
        return -hw, min(max(y, -hw), hw)
    return min(max(x, -hw), hw), -hw


@numba.njit(cache=True)
def _tangent_coord(x, y, side):
    if side == RIGHT or side == LEFT:
        return y
    return x


@numba.njit(cache=True)
def _frame(side):
    """Inward normal and tangent of a side: ``(nx, ny, tx, ty)``."""
    if side == RIGHT:
        return -1.0, 0.0, 0.0, 1.0
    if side == TOP:
        return 0.0, -1.0, 1.0, 0.0
    if side == LEFT:
        return 1.0, 0.0, 0.0, 1.0
    return 0.0, 1.0, 1.0, 0.0


@numba.njit(cache=True)
def _mirror(v, hw):
    if v > hw:
        v = 2.0 * hw - v
    elif v < -hw:
        v = -2.0 * hw - v
    return v


@numba.njit(cache=True)
def _inside(x, y, hw):
    return -hw <= x <= hw and -hw <= y <= hw
