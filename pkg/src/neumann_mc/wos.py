"""Walk on spheres with an epsilon absorption layer.

Inside a sphere of radius ``r`` the exit time and the source integral come
from a precomputed table for the unit disk: pairs ``(tau, interior point)`` of
Brownian paths started at the origin, rotated so that every path exits at
``(1, 0)``. A sphere step draws a pair and a uniform angle ``alpha``; the exit
is ``c + r R_alpha (1, 0)``, the elapsed time ``r^2 tau`` and the source is
scored by the one-random-point rule ``r^2 tau f(c + r R_alpha p)``.

Once the walker is within ``eps`` of a side it is projected on it. A Dirichlet
side ends the walk; a Neumann side hands over to a boundary scheme from
:mod:`neumann_mc.schemes`.

For the pure Neumann problem a clock runs to the horizon ``t0``. When the
next sphere would outlast the remaining budget ``T1``, a stored full
trajectory whose rescaled exit time exceeds ``T1`` is drawn instead (this is
the law of the path given that it survives past ``T1``) and the source is
integrated along it up to ``T1`` by the rectangle rule.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .geometry import DIRICHLET, GeometryError, Point2, _nearest_side, _project, _tangent_coord
from .problems import Coefficients, zero_dirichlet
from .schemes import FD1, _apply_scheme, scheme_id

MAGIC = b"WOSTBL01"
MAX_SPHERE_STEPS = 1_000_000
HORIZON, DIRICHLET_HIT = 0, 1

_HEADER = np.dtype([("magic", "S8"), ("n_pairs", "<u4"), ("q_paths", "<u4"),
                    ("path_len", "<u4"), ("delta_pre", "<f8")])


@dataclass(frozen=True)
class CircleTable:
    """Exit samples of the unit disk, standardised to exit at ``(1, 0)``.

    Attributes
    ----------
    tau : (n_pairs,) exit times.
    points : (n_pairs, 2) one position drawn uniformly among the pre-exit
        positions of each path.
    paths : (q_paths, path_len, 3) rows ``(time, x, y)``; the first
        ``path_len - 1`` rows are pre-exit positions subsampled uniformly in
        step index, the last row is ``(exit time, 1, 0)``.
    delta_pre : fine time step of the simulation.
    """

    tau: np.ndarray
    points: np.ndarray
    paths: np.ndarray
    delta_pre: float

    def __post_init__(self):
        if self.tau.shape[0] == 0:
            raise ValueError("empty circle table")

    @property
    def n_pairs(self) -> int:
        return self.tau.shape[0]

    @property
    def q_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def path_len(self) -> int:
        return self.paths.shape[1]

    def mean_exit_time(self) -> tuple[float, float]:
        """Table mean of ``tau`` and its standard error."""
        return float(self.tau.mean()), float(self.tau.std(ddof=1) / math.sqrt(self.n_pairs))

    def save(self, path) -> None:
        header = np.zeros((), dtype=_HEADER)
        header["magic"] = MAGIC
        header["n_pairs"] = self.n_pairs
        header["q_paths"] = self.q_paths
        header["path_len"] = self.path_len
        header["delta_pre"] = self.delta_pre
        pairs = np.column_stack([self.tau, self.points]).astype("<f8")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".part")
        with open(tmp, "wb") as fh:
            fh.write(header.tobytes())
            fh.write(pairs.tobytes())
            fh.write(np.ascontiguousarray(self.paths, dtype="<f8").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "CircleTable":
        with open(path, "rb") as fh:
            header = np.frombuffer(fh.read(_HEADER.itemsize), dtype=_HEADER)
            if header.size != 1 or header["magic"][0] != MAGIC:
                raise ValueError(f"{path} is not a circle table")
            n, q, length = (int(header[k][0]) for k in ("n_pairs", "q_paths", "path_len"))
            pairs = np.fromfile(fh, dtype="<f8", count=3 * n).reshape(n, 3)
            paths = np.fromfile(fh, dtype="<f8", count=3 * q * length).reshape(q, length, 3)
        if pairs.shape[0] != n or paths.shape[0] != q:
            raise ValueError(f"{path} is truncated")
        return cls(pairs[:, 0].copy(), pairs[:, 1:].copy(), paths, float(header["delta_pre"][0]))

    def path_times_sorted(self) -> tuple[np.ndarray, np.ndarray]:
        """Exit times of the stored paths in increasing order, with the permutation."""
        order = np.argsort(self.paths[:, -1, 0], kind="stable")
        return self.paths[order, -1, 0].copy(), order.astype(np.int64)


@numba.njit(cache=True)
def _circle_exit(x, y, nx, ny):
    """Direction of the point where the segment from (x, y) to (nx, ny) meets the unit circle."""
    dx = nx - x
    dy = ny - y
    a = dx * dx + dy * dy
    b = 2.0 * (x * dx + y * dy)
    c = x * x + y * y - 1.0
    disc = max(b * b - 4.0 * a * c, 0.0)
    s = (-b + math.sqrt(disc)) / (2.0 * a) if a > 0.0 else 0.0
    ex = x + s * dx
    ey = y + s * dy
    r = math.hypot(ex, ey)
    return ex / r, ey / r


@numba.njit(cache=True)
def _walk_disk(rng, x, y, bx, by, m, sd, delta, inner2):
    """Advance a unit-disk walk until it exits or the position buffer is full.

    Returns ``(exited, x, y, m, ex, ey)`` with ``(ex, ey)`` the exit direction.
    """
    cap = bx.shape[0]
    while m < cap:
        bx[m] = x
        by[m] = y
        m += 1
        nx = x + sd * rng.standard_normal()
        ny = y + sd * rng.standard_normal()
        rn2 = nx * nx + ny * ny
        if rn2 >= 1.0:
            ex, ey = _circle_exit(x, y, nx, ny)
            return True, x, y, m, ex, ey
        if rn2 > inner2 and x * x + y * y > inner2:
            d1 = 1.0 - math.sqrt(x * x + y * y)
            d2 = 1.0 - math.sqrt(rn2)
            if rng.random() < math.exp(-2.0 * d1 * d2 / delta):
                fr = d1 / (d1 + d2)
                mx = x + fr * (nx - x)
                my = y + fr * (ny - y)
                r = math.hypot(mx, my)
                return True, x, y, m, mx / r, my / r
        x = nx
        y = ny
    return False, x, y, m, 0.0, 0.0


@numba.njit(cache=True)
def _precompute(n_pairs, q_paths, path_len, delta, rng, direct):
    taus = np.empty(n_pairs)
    pts = np.empty((n_pairs, 2))
    paths = np.empty((q_paths, path_len, 3))
    integrals = np.zeros((n_pairs if direct else 0, 6))
    bx = np.empty(1 << 15)
    by = np.empty(1 << 15)
    sd = math.sqrt(delta)
    # the bridge test only runs when both endpoints are within 6 sqrt(delta) of the circle
    inner2 = max(1.0 - 6.0 * sd, 0.0) ** 2
    for i in range(n_pairs):
        x = 0.0
        y = 0.0
        m = 0
        while True:
            exited, x, y, m, ex, ey = _walk_disk(rng, x, y, bx, by, m, sd, delta, inner2)
            if exited:
                break
            nb = np.empty(2 * bx.shape[0])
            nb[:m] = bx[:m]
            bx = nb
            nb = np.empty(2 * by.shape[0])
            nb[:m] = by[:m]
            by = nb
        taus[i] = m * delta
        if direct:
            for k in range(m):
                integrals[i, 0] += delta
                integrals[i, 1] += delta * bx[k]
                integrals[i, 2] += delta * by[k]
                integrals[i, 3] += delta * bx[k] * bx[k]
                integrals[i, 4] += delta * bx[k] * by[k]
                integrals[i, 5] += delta * by[k] * by[k]
        # rotate by -theta so the exit lands on (1, 0)
        c = ex
        s = -ey
        k = rng.integers(0, m)
        pts[i, 0] = c * bx[k] - s * by[k]
        pts[i, 1] = s * bx[k] + c * by[k]
        if i < q_paths:
            inner = path_len - 1
            for j in range(inner):
                idx = (j * m) // inner
                paths[i, j, 0] = idx * delta
                paths[i, j, 1] = c * bx[idx] - s * by[idx]
                paths[i, j, 2] = s * bx[idx] + c * by[idx]
            paths[i, inner, 0] = m * delta
            paths[i, inner, 1] = 1.0
            paths[i, inner, 2] = 0.0
    return taus, pts, paths, integrals


def precompute_circle_table(delta_pre: float = 1e-4, n_pairs: int = 1_000_000,
                            q_paths: int = 100_000, rng: np.random.Generator | None = None,
                            path_len: int = 101, direct: bool = False):
    """Simulate exits of the unit disk with a fine Euler walk and the bridge test.

    Returns a :class:`CircleTable`. With ``direct=True`` also returns the
    rectangle-rule integrals ``delta_pre * sum m(X_k)`` of the monomials
    ``m = 1, x, y, x^2, xy, y^2`` along each unrotated path, shape
    ``(n_pairs, 6)``; any quadratic source can be integrated exactly from them,
    which gives an independent check of the one-random-point estimator.
    """
    if not delta_pre > 0:
        raise ValueError("delta_pre must be positive")
    if n_pairs < 1 or q_paths < 0 or q_paths > n_pairs or path_len < 2:
        raise ValueError("need n_pairs >= 1, 0 <= q_paths <= n_pairs and path_len >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    taus, pts, paths, integrals = _precompute(int(n_pairs), int(q_paths), int(path_len),
                                              float(delta_pre), rng, bool(direct))
    table = CircleTable(taus, pts, paths, float(delta_pre))
    return (table, integrals) if direct else table


def load_or_build_table(path, delta_pre=1e-4, n_pairs=1_000_000, q_paths=100_000, seed=12345,
                        path_len=101) -> CircleTable:
    """Load the table cached at ``path``, building and saving it on first use."""
    path = Path(path)
    if path.exists():
        table = CircleTable.load(path)
        if table.n_pairs >= n_pairs and table.q_paths >= q_paths:
            return table
    table = precompute_circle_table(delta_pre, n_pairs, q_paths, np.random.default_rng(seed),
                                    path_len)
    table.save(path)
    return table


def sample_sphere_step(center, radius: float, table: CircleTable, rng: np.random.Generator):
    """One sphere step: ``(exit point, exit time, one random interior point)``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    k = rng.integers(table.n_pairs)
    alpha = 2.0 * math.pi * rng.random()
    c, s = math.cos(alpha), math.sin(alpha)
    px, py = table.points[k]
    cx, cy = float(center[0]), float(center[1])
    exit_ = Point2(cx + radius * c, cy + radius * s)
    u = Point2(cx + radius * (c * px - s * py), cy + radius * (s * px + c * py))
    return exit_, radius * radius * float(table.tau[k]), u


def source_score_one_point(tau: float, u_point, f) -> float:
    """``tau * f(u)``: one-sample estimate of the source integral over the sphere."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return tau * f(u_point[0], u_point[1])


@dataclass(frozen=True)
class WosConfig:
    eps: float = 1e-6
    h: float = 0.1
    t0: float | None = None
    scheme: str = "oneside3"
    seed: int = 0
    kinetic_fixed_time: bool = False

    def __post_init__(self):
        if not (self.eps > 0 and self.h > 0):
            raise ValueError("eps and h must be positive")
        if self.t0 is not None and not self.t0 > 0:
            raise ValueError("t0 must be positive")
        scheme_id(self.scheme)


@numba.njit(cache=True)
def _add_interior(mom, w, x, y, tx, ty):
    tx[0] = 1.0
    ty[0] = 1.0
    if tx.shape[0] > 1:
        tx[1] = x
        ty[1] = y
    for k in range(2, tx.shape[0]):
        tx[k] = 2.0 * x * tx[k - 1] - tx[k - 2]
        ty[k] = 2.0 * y * ty[k - 1] - ty[k - 2]
    for a in range(tx.shape[0]):
        wa = w * tx[a]
        for b in range(ty.shape[0]):
            mom[a, b] += wa * ty[b]


@numba.njit(cache=True)
def _add_boundary(bmom, s, w, t, tt):
    tt[0] = 1.0
    if tt.shape[0] > 1:
        tt[1] = t
    for k in range(2, tt.shape[0]):
        tt[k] = 2.0 * t * tt[k - 1] - tt[k - 2]
    for a in range(tt.shape[0]):
        bmom[s, a] += w * tt[a]


@numba.njit(cache=True)
def _truncated_score(scores, i, w, x, y, r, ca, sa, qx, qy, source, params, mom, tx, ty, degree):
    ux = x + r * (ca * qx - sa * qy)
    uy = y + r * (sa * qx + ca * qy)
    for j in range(params.shape[0]):
        scores[i, j] += w * source(ux, uy, params[j])
    if degree >= 0:
        _add_interior(mom, w, ux, uy, tx, ty)


@numba.njit(cache=True)
def _wos_kernel(x0, y0, n, kinds, hw, eps, h, scheme, fixed_time, t0, finite,
                source, neumann, dirichlet, params, rng,
                tab_tau, tab_pts, paths, path_tau, path_order, degree, control, use_control):
    n_sets = params.shape[0]
    scores = np.zeros((n, n_sets))
    elapsed = np.zeros(n)
    cause = np.zeros(n, dtype=np.int8)
    spheres = np.zeros(n, dtype=np.int64)
    deg1 = degree + 1 if degree >= 0 else 1
    mom = np.zeros((deg1, deg1))
    bmom = np.zeros((4, deg1))
    tx = np.empty(deg1)
    ty = np.empty(deg1)
    n_pairs = tab_tau.shape[0]
    q = paths.shape[0]
    plen = paths.shape[1]
    for i in range(n):
        x = x0
        y = y0
        t = 0.0
        steps = 0
        while True:
            side, d = _nearest_side(x, y, hw)
            if d <= eps:
                px, py = _project(x, y, side, hw)
                if kinds[side] == 1:
                    for j in range(n_sets):
                        scores[i, j] += dirichlet(px, py, params[j])
                    cause[i] = 1
                    break
                nx, ny, a, c, fx, fy, dt, hu = _apply_scheme(scheme, px, py, side, h, rng, hw,
                                                             fixed_time)
                frac = 1.0
                if finite and t + dt >= t0:
                    # the scheme's own time straddles the horizon: keep the
                    # share of its expected score that falls before t0
                    frac = (t0 - t) / dt if dt > 0.0 else 1.0
                for j in range(n_sets):
                    inc = a * neumann(px, py, side, params[j])
                    if c != 0.0:
                        inc += c * source(fx, fy, params[j])
                    scores[i, j] += frac * inc
                if degree >= 0:
                    _add_boundary(bmom, side, frac * a, _tangent_coord(px, py, side), tx)
                    if c != 0.0:
                        _add_interior(mom, frac * c, fx, fy, tx, ty)
                if finite and t + dt >= t0:
                    t = t0
                    break
                t += dt
                x = nx
                y = ny
                continue

            steps += 1
            if steps > MAX_SPHERE_STEPS:
                raise ValueError("walk on spheres exceeded the sphere-step cap")
            r = d
            k = rng.integers(0, n_pairs)
            alpha = 2.0 * math.pi * rng.random()
            ca = math.cos(alpha)
            sa = math.sin(alpha)
            tau = r * r * tab_tau[k]
            if finite and t + tau >= t0:
                t1 = t0 - t
                lim = t1 / (r * r)
                lo = np.searchsorted(path_tau, lim, side="right")
                if lo < q:
                    pi = path_order[lo + rng.integers(0, q - lo)]
                else:
                    pi = path_order[q - 1]
                inner = plen - 1
                last = inner - 1
                for m in range(inner):
                    ts = paths[pi, m, 0]
                    if ts >= lim:
                        break
                    last = m
                    te = min(paths[pi, m + 1, 0], lim)
                    w = r * r * (te - ts)
                    if w > 0.0:
                        _truncated_score(scores, i, w, x, y, r, ca, sa, paths[pi, m, 1],
                                         paths[pi, m, 2], source, params, mom, tx, ty, degree)
                spare = lim - paths[pi, inner, 0]
                if spare > 0.0:
                    # no stored path survives that long: hold the last position
                    _truncated_score(scores, i, r * r * spare, x, y, r, ca, sa,
                                     paths[pi, last, 1], paths[pi, last, 2], source, params,
                                     mom, tx, ty, degree)
                t = t0
                break
            qx = tab_pts[k, 0]
            qy = tab_pts[k, 1]
            ux = x + r * (ca * qx - sa * qy)
            uy = y + r * (sa * qx + ca * qy)
            for j in range(n_sets):
                scores[i, j] += tau * source(ux, uy, params[j])
                if use_control:
                    scores[i, j] -= 0.5 * (control(x + r * ca, y + r * sa, params[j])
                                           - control(x - r * ca, y - r * sa, params[j]))
            if degree >= 0:
                _add_interior(mom, tau, ux, uy, tx, ty)
            x = x + r * ca
            y = y + r * sa
            t += tau
        elapsed[i] = t
        spheres[i] = steps
    return scores, elapsed, cause, spheres, mom, bmom


@dataclass
class WosOutcome:
    """Per-trajectory results; ``score`` has one column per parameter set."""

    score: np.ndarray
    elapsed: np.ndarray
    cause: np.ndarray
    spheres: np.ndarray

    def __len__(self):
        return self.score.shape[0]


def _run(start, coeffs: Coefficients, cfg: WosConfig, table: CircleTable, rng, n, finite,
         degree=-1):
    dom = coeffs.domain
    start = np.asarray(start, dtype=float)
    if not (abs(start[0]) <= dom.half_width and abs(start[1]) <= dom.half_width):
        raise GeometryError(f"start {tuple(start)} outside the square")
    kind = scheme_id(cfg.scheme)
    if finite:
        if cfg.t0 is None:
            raise ValueError("a finite-horizon walk needs t0")
        if kind == FD1:
            raise ValueError("fd1 has no time increment and cannot drive a finite-horizon walk")
        if table.q_paths == 0:
            raise ValueError("a finite-horizon walk needs stored trajectories")
        path_tau, order = _sorted_cache(table)
    else:
        path_tau, order = np.zeros(0), np.zeros(0, dtype=np.int64)
    paths = table.paths if finite else np.zeros((0, 2, 3))
    return _wos_kernel(float(start[0]), float(start[1]), int(n), dom.kinds_array, dom.half_width,
                       cfg.eps, cfg.h, kind, cfg.kinetic_fixed_time,
                       float(cfg.t0) if finite else 0.0, finite,
                       coeffs.source, coeffs.neumann, coeffs.dirichlet, coeffs.params, rng,
                       table.tau, table.points, paths, path_tau, order, int(degree),
                       coeffs.control or zero_dirichlet, coeffs.control is not None)


_SORTED: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _sorted_cache(table: CircleTable):
    key = id(table.paths)
    if key not in _SORTED:
        _SORTED.clear()
        _SORTED[key] = table.path_times_sorted()
    return _SORTED[key]


def run_wos_mixed(start, coeffs: Coefficients, cfg: WosConfig, table: CircleTable,
                  rng: np.random.Generator, n: int = 1) -> WosOutcome:
    """``n`` walks absorbed on the Dirichlet side, no time budget."""
    if not coeffs.domain.has_dirichlet:
        raise ValueError("run_wos_mixed needs a Dirichlet side")
    score, elapsed, cause, spheres, _, _ = _run(start, coeffs, cfg, table, rng, n, False)
    return WosOutcome(score, elapsed, cause, spheres)


def run_wos_neumann(start, coeffs: Coefficients, cfg: WosConfig, table: CircleTable,
                    rng: np.random.Generator, n: int = 1) -> WosOutcome:
    """``n`` finite-horizon walks of the pure Neumann problem."""
    if coeffs.domain.has_dirichlet:
        raise ValueError("run_wos_neumann needs an all-Neumann domain")
    score, elapsed, cause, spheres, _, _ = _run(start, coeffs, cfg, table, rng, n, True)
    return WosOutcome(score, elapsed, cause, spheres)


def wos_trace(start, coeffs: Coefficients, cfg: WosConfig, table: CircleTable, rng, n: int,
              degree: int):
    """Scores plus the Chebyshev event moments used by the spectral assembly."""
    finite = not coeffs.domain.has_dirichlet
    score, _, _, _, mom, bmom = _run(start, coeffs, cfg, table, rng, n, finite, degree)
    return score, mom, bmom


@dataclass(frozen=True)
class WosSampler:
    """Picklable ``(rng, n) -> scores`` callable for the Monte Carlo driver."""

    start: tuple[float, float]
    coeffs: Coefficients
    cfg: WosConfig
    table: CircleTable

    def __call__(self, rng, n):
        finite = not self.coeffs.domain.has_dirichlet
        score, *_ = _run(self.start, self.coeffs, self.cfg, self.table, rng, n, finite)
        return score


__all__ = ["CircleTable", "WosConfig", "WosOutcome", "WosSampler", "precompute_circle_table",
           "load_or_build_table", "sample_sphere_step", "source_score_one_point",
           "run_wos_mixed", "run_wos_neumann", "wos_trace", "MAX_SPHERE_STEPS", "DIRICHLET"]
