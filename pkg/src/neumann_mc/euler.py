"""Reflected Euler scheme with kernel-smoothed local time.

One trajectory runs ``T0 / delta`` steps. Each step scores the source by the
rectangle rule, ``delta * f(X_k)``, and the Neumann data through the boundary
layer, ``delta * g(π X_k) * K_xi(X_k, π X_k)``, then proposes the Euler
increment and mirrors it back across any violated Neumann side. Dirichlet
sides stop the walk, either by a direct crossing or by the Brownian-bridge
crossing test ``exp(-2 d1 d2 / delta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .geometry import (DIRICHLET, NEUMANN, GeometryError, Point2, SquareDomain, contains,
                       symmetrize, _inside, _mirror, _project, _side_distance, _tangent_coord)
from .problems import Coefficients, zero_dirichlet, zero_neumann

HORIZON, DIRICHLET_HIT = 0, 1

KERNELS = {"half_normal": 0, "printed": 1, "normal": 2}

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gaussian_kernel(p, q, xi: float, variant: str = "printed") -> float:
    """Boundary-layer kernel ``K_xi(p, q)``.

    ``"printed"`` is the two-dimensional form ``exp(-|p-q|^2 / xi^2) / (2π xi^2)``.
    ``"half_normal"`` is ``sqrt(2/π)/xi * exp(-|p-q|^2 / (2 xi^2))``, whose
    integral over the inward half-line is one, the normalisation local time
    needs. ``"normal"`` is the N(0, xi^2) density.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    r2 = float(np.sum((np.asarray(p, float) - np.asarray(q, float)) ** 2))
    if variant == "printed":
        return math.exp(-r2 / xi**2) / (2.0 * math.pi * xi**2)
    if variant == "half_normal":
        return _SQRT_2_OVER_PI / xi * math.exp(-0.5 * r2 / xi**2)
    if variant == "normal":
        return _INV_SQRT_2PI / xi * math.exp(-0.5 * r2 / xi**2)
    raise ValueError(f"unknown kernel variant {variant!r}")


@dataclass(frozen=True)
class EulerConfig:
    delta: float
    xi: float
    t0: float
    seed: int = 0
    kernel: str = "half_normal"

    def __post_init__(self):
        if not (self.delta > 0 and self.xi > 0 and self.t0 > 0):
            raise ValueError("delta, xi and t0 must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        steps = self.t0 / self.delta
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError("t0 must be an integer multiple of delta")

    @property
    def n_steps(self) -> int:
        return int(round(self.t0 / self.delta))


@dataclass
class WalkOutcome:
    """Per-trajectory results: ``score`` has one column per parameter set."""

    score: np.ndarray
    elapsed: np.ndarray
    cause: np.ndarray

    def __len__(self):
        return self.score.shape[0]


@numba.njit(cache=True)
def _kernel_cutoff(variant):
    """Distance, in units of xi, beyond which the kernel underflows to zero."""
    return 27.3 if variant == 1 else 38.6


@numba.njit(cache=True)
def _kernel_weight(d, xi, variant):
    z = d / xi
    if variant == 0:
        if z > 38.6:
            return 0.0
        return 0.7978845608028654 / xi * math.exp(-0.5 * z * z)
    if variant == 1:
        if z > 27.3:
            return 0.0
        return math.exp(-z * z) / (2.0 * math.pi * xi * xi)
    if z > 38.6:
        return 0.0
    return 0.3989422804014327 / xi * math.exp(-0.5 * z * z)


@numba.njit(cache=True)
def _cheb_fill(t, out):
    out[0] = 1.0
    if out.shape[0] > 1:
        out[1] = t
    for k in range(2, out.shape[0]):
        out[k] = 2.0 * t * out[k - 1] - out[k - 2]


@numba.njit(cache=True)
def _euler_kernel(x0, y0, n, n_steps, delta, xi, variant, kinds, hw,
                  source, neumann, dirichlet, drift, params, rng,
                  degree, checkpoints, local_time, control, use_control):
    n_sets = params.shape[0]
    scores = np.zeros((n, n_sets))
    elapsed = np.zeros(n)
    cause = np.zeros(n, dtype=np.int8)
    n_ck = checkpoints.shape[0]
    ck = np.zeros((n, n_ck, n_sets))
    deg1 = degree + 1 if degree >= 0 else 1
    mom = np.zeros((deg1, deg1))
    bmom = np.zeros((4, deg1))
    tx = np.empty(deg1)
    ty = np.empty(deg1)
    tt = np.empty(deg1)
    sd = math.sqrt(delta)
    window = 6.0 * sd
    cut = _kernel_cutoff(variant) * xi
    near = hw - cut
    has_dir = False
    for s in range(4):
        if kinds[s] == 1:
            has_dir = True

    for i in range(n):
        x = x0
        y = y0
        done = False
        if has_dir:
            for s in range(4):
                if kinds[s] == 1 and _side_distance(x, y, s, hw) <= 0.0:
                    px, py = _project(x, y, s, hw)
                    for j in range(n_sets):
                        scores[i, j] += dirichlet(px, py, params[j])
                    cause[i] = 1
                    done = True
                    break
            if done:
                for c in range(n_ck):
                    ck[i, c, :] = scores[i, :]
                continue
        c = 0
        for k in range(n_steps):
            for j in range(n_sets):
                scores[i, j] += delta * source(x, y, params[j])
            if degree >= 0:
                _cheb_fill(x, tx)
                _cheb_fill(y, ty)
                for a in range(deg1):
                    wa = delta * tx[a]
                    for b in range(deg1):
                        mom[a, b] += wa * ty[b]
            for s in range(4):
                if not local_time or kinds[s] != 0 or (abs(x) < near and abs(y) < near):
                    continue
                d = _side_distance(x, y, s, hw)
                if d >= cut:
                    continue
                w = delta * _kernel_weight(d, xi, variant)
                if w > 0.0:
                    px, py = _project(x, y, s, hw)
                    for j in range(n_sets):
                        scores[i, j] += w * neumann(px, py, s, params[j])
                    if degree >= 0:
                        _cheb_fill(_tangent_coord(px, py, s), tt)
                        for a in range(deg1):
                            bmom[s, a] += w * tt[a]
            while c < n_ck and checkpoints[c] == k + 1:
                ck[i, c, :] = scores[i, :]
                c += 1

            bx, by = drift(x, y, params[0])
            zx = sd * rng.standard_normal()
            zy = sd * rng.standard_normal()
            nx = x + bx * delta + zx
            ny = y + by * delta + zy
            if use_control:
                # antithetic pair of the reflected move: mean zero for any control
                ax = _mirror(x + bx * delta + zx, hw)
                ay = _mirror(y + by * delta + zy, hw)
                rx = _mirror(x + bx * delta - zx, hw)
                ry = _mirror(y + by * delta - zy, hw)
                for j in range(n_sets):
                    scores[i, j] -= 0.5 * (control(ax, ay, params[j]) - control(rx, ry, params[j]))

            if has_dir:
                for s in range(4):
                    if kinds[s] != 1:
                        continue
                    dn = _side_distance(nx, ny, s, hw)
                    if dn < 0.0:
                        do = _side_distance(x, y, s, hw)
                        frac = do / (do - dn)
                        px, py = _project(x + frac * (nx - x), y + frac * (ny - y), s, hw)
                        for j in range(n_sets):
                            scores[i, j] += dirichlet(px, py, params[j])
                        done = True
                        break
            if not done:
                nx = _mirror(nx, hw)
                ny = _mirror(ny, hw)
                if not _inside(nx, ny, hw):
                    raise ValueError("Euler increment overshoots the square")
                if has_dir:
                    for s in range(4):
                        if kinds[s] != 1:
                            continue
                        d1 = _side_distance(x, y, s, hw)
                        d2 = _side_distance(nx, ny, s, hw)
                        if d1 < window and d2 < window:
                            if rng.random() < math.exp(-2.0 * d1 * d2 / delta):
                                frac = d1 / (d1 + d2) if d1 + d2 > 0.0 else 0.0
                                px, py = _project(x + frac * (nx - x), y + frac * (ny - y), s, hw)
                                for j in range(n_sets):
                                    scores[i, j] += dirichlet(px, py, params[j])
                                done = True
                                break
            x = nx
            y = ny
            if done:
                elapsed[i] = (k + 1) * delta
                cause[i] = 1
                while c < n_ck:
                    ck[i, c, :] = scores[i, :]
                    c += 1
                break
        if not done:
            elapsed[i] = n_steps * delta
    return scores, elapsed, cause, ck, mom, bmom


@numba.njit(cache=True)
def _euler_path(x0, y0, q, delta, hw, drift, p, rng):
    out = np.empty((q, 2))
    sd = math.sqrt(delta)
    x = x0
    y = y0
    for k in range(q):
        bx, by = drift(x, y, p)
        x = _mirror(x + bx * delta + sd * rng.standard_normal(), hw)
        y = _mirror(y + by * delta + sd * rng.standard_normal(), hw)
        if not _inside(x, y, hw):
            raise ValueError("Euler increment overshoots the square")
        out[k, 0] = x
        out[k, 1] = y
    return out


def reflected_path(coeffs: Coefficients, delta: float, q: int, rng, start=(0.0, 0.0)) -> np.ndarray:
    """The ``q`` post-step positions of one reflected Euler path."""
    return _euler_path(float(start[0]), float(start[1]), int(q), float(delta),
                       coeffs.domain.half_width, coeffs.drift, coeffs.params[0], rng)


def _run(start, coeffs: Coefficients, cfg: EulerConfig, rng, n, degree=-1, checkpoints=None):
    start = np.asarray(start, dtype=float)
    dom = coeffs.domain
    if not (abs(start[0]) <= dom.half_width and abs(start[1]) <= dom.half_width):
        raise GeometryError(f"start {tuple(start)} outside the square")
    ck = np.zeros(0, dtype=np.int64) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    return _euler_kernel(float(start[0]), float(start[1]), int(n), cfg.n_steps, cfg.delta, cfg.xi,
                         KERNELS[cfg.kernel], dom.kinds_array, dom.half_width,
                         coeffs.source, coeffs.neumann, coeffs.dirichlet, coeffs.drift,
                         coeffs.params, rng, int(degree), ck,
                         coeffs.neumann is not zero_neumann or degree >= 0,
                         coeffs.control or zero_dirichlet, coeffs.control is not None)


def run_neumann(start, coeffs: Coefficients, cfg: EulerConfig, rng: np.random.Generator,
                n: int = 1) -> WalkOutcome:
    """``n`` finite-horizon trajectories of the pure Neumann problem."""
    if coeffs.domain.has_dirichlet:
        raise ValueError("run_neumann needs an all-Neumann domain")
    score, elapsed, cause, *_ = _run(start, coeffs, cfg, rng, n)
    return WalkOutcome(score, elapsed, cause)


def run_mixed(start, coeffs: Coefficients, cfg: EulerConfig, rng: np.random.Generator,
              n: int = 1) -> WalkOutcome:
    """``n`` trajectories stopped on the Dirichlet side or at ``cfg.t0``."""
    if not coeffs.domain.has_dirichlet:
        raise ValueError("run_mixed needs at least one Dirichlet side")
    score, elapsed, cause, *_ = _run(start, coeffs, cfg, rng, n)
    return WalkOutcome(score, elapsed, cause)


def euler_trace(start, coeffs: Coefficients, cfg: EulerConfig, rng, n: int, degree: int):
    """Run ``n`` trajectories and return ``(scores, interior, boundary)``.

    ``interior[a, b]`` is the sum over trajectories and steps of
    ``delta * T_a(x) T_b(y)``; ``boundary[s, a]`` the sum of the local-time
    weights times ``T_a`` of the tangential coordinate on side ``s``. These are
    the moments the spectral assembly contracts against.
    """
    score, _, _, _, mom, bmom = _run(start, coeffs, cfg, rng, n, degree=degree)
    return score, mom, bmom


def euler_checkpoints(start, coeffs: Coefficients, cfg: EulerConfig, rng, n: int, times):
    """Scores accumulated up to each time in ``times``: shape ``(n, len(times), n_sets)``."""
    steps = np.rint(np.asarray(times, float) / cfg.delta).astype(np.int64)
    if np.any(steps < 1) or np.any(steps > cfg.n_steps) or np.any(np.diff(steps) < 0):
        raise ValueError("checkpoint times must be increasing and within (0, t0]")
    *_, ck, _, _ = _run(start, coeffs, cfg, rng, n, checkpoints=steps)
    return ck


@dataclass(frozen=True)
class EulerSampler:
    """Picklable ``(rng, n) -> scores`` callable for the Monte Carlo driver."""

    start: tuple[float, float]
    coeffs: Coefficients
    cfg: EulerConfig

    def __call__(self, rng, n):
        score, *_ = _run(self.start, self.coeffs, self.cfg, rng, n)
        return score


def euler_step(p, delta: float, dom: SquareDomain | None = None, drift=(0.0, 0.0),
               increment=None, rng: np.random.Generator | None = None) -> Point2:
    """One reflected Euler step from ``p``.

    ``increment`` is the Brownian increment ``W_{(k+1)δ} - W_{kδ}``; when omitted
    it is drawn as ``sqrt(delta) * N(0, I)`` from ``rng``.
    """
    dom = dom or SquareDomain()
    if increment is None:
        if rng is None:
            raise ValueError("need an increment or an rng")
        increment = math.sqrt(delta) * rng.standard_normal(2)
    x = p[0] + drift[0] * delta + increment[0]
    y = p[1] + drift[1] * delta + increment[1]
    if contains((x, y), dom):
        return Point2(float(x), float(y))
    return symmetrize((x, y), dom)


def compatibility_residual(coeffs: Coefficients, dom: SquareDomain | None = None,
                           density=None, nodes: int = 32, row: int = 0) -> float:
    """``∫ f p + ∫ g p`` by tensor Gauss-Legendre quadrature.

    ``density(x, y)`` defaults to the uniform law ``1 / |D|``.
    """
    dom = dom or coeffs.domain
    hw = dom.half_width
    if density is None:
        def density(x, y):
            return np.full(np.shape(x), 1.0 / dom.area)
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = t * hw
    w = w * hw
    p = coeffs.params[row]
    interior = 0.0
    for xi, wx in zip(t, w):
        fx = np.array([coeffs.source(xi, yj, p) for yj in t])
        interior += wx * np.sum(w * fx * density(np.full_like(t, xi), t))
    boundary = 0.0
    sides = {0: (np.full_like(t, hw), t), 1: (t, np.full_like(t, hw)),
             2: (np.full_like(t, -hw), t), 3: (t, np.full_like(t, -hw))}
    for s, (xs, ys) in sides.items():
        if dom.kinds[s] != NEUMANN:
            continue
        gs = np.array([coeffs.neumann(a, b, s, p) for a, b in zip(xs, ys)])
        boundary += np.sum(w * gs * density(xs, ys))
    return float(interior + boundary)


__all__ = ["EulerConfig", "WalkOutcome", "EulerSampler", "gaussian_kernel", "euler_step",
           "run_neumann", "run_mixed", "euler_trace", "euler_checkpoints",
           "compatibility_residual", "reflected_path", "HORIZON", "DIRICHLET_HIT", "DIRICHLET", "KERNELS"]
