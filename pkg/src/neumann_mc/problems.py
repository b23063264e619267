"""Problem data for the walkers and the four builtin test problems.

Sign conventions
----------------
The operator is ``L = 1/2 Δ + b·∇`` and every problem is written as

    L u = -f            in the square,
    1/2 ∂u/∂n = g       on Neumann sides, n the OUTWARD normal,
    u = g2              on Dirichlet sides,

so that ``u(x) = E_x[∫ f(X_s) ds + ∫ g(X_s) dV_s + g2(X_τ)]`` with ``V`` the
boundary local time, and the boundary schemes add ``+2hg``-type scores. With
these signs the compatibility condition reads ``∫ f p + ∫ g p = 0``.

Every builtin problem derives ``f``, ``g`` and ``g2`` from its closed-form
solution, so the exact answer is known by construction.

Field functions are ``numba.njit`` callables taking a parameter row ``p``:
``source(x, y, p)``, ``neumann(x, y, side, p)``, ``dirichlet(x, y, p)`` and
``drift(x, y, p) -> (bx, by)``. A :class:`Coefficients` carries a 2-D
``params`` array, one row per parameter set; the walkers score every row along
the same trajectory.

An optional ``control(x, y, p)`` is a guess of the solution. When present the
walkers subtract ``(v(X + d) - v(X - d)) / 2`` for every free move ``d``
(a Brownian increment or a sphere exit). The move is symmetric and independent
of the past, so the term has mean zero and the expectation is unchanged; with
``v`` close to ``u`` it cancels most of the martingale noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .geometry import BOTTOM, LEFT, RIGHT, TOP, SquareDomain


@dataclass(frozen=True)
class Coefficients:
    source: Callable
    neumann: Callable
    dirichlet: Callable
    drift: Callable
    params: np.ndarray
    domain: SquareDomain = field(default_factory=SquareDomain)
    # Chebyshev 2-D coefficient arrays of (bx, by) when the drift is
    # polynomial; the spectral solver needs them to apply L analytically.
    drift_poly: tuple[np.ndarray, np.ndarray] | None = None
    control: Callable | None = None

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        object.__setattr__(self, "params", np.ascontiguousarray(params))

    @property
    def n_sets(self) -> int:
        return self.params.shape[0]

    def with_params(self, params) -> "Coefficients":
        return Coefficients(self.source, self.neumann, self.dirichlet, self.drift,
                            params, self.domain, self.drift_poly, self.control)

    def with_control(self, control: Callable | None) -> "Coefficients":
        """Copy with a control-variate function ``v(x, y, p)`` (``None`` removes it)."""
        return Coefficients(self.source, self.neumann, self.dirichlet, self.drift,
                            self.params, self.domain, self.drift_poly, control)


@dataclass(frozen=True)
class Problem:
    """Coefficients plus the reference solution of a builtin test problem."""

    name: str
    coeffs: Coefficients
    exact: Callable  # exact(x, y, row) -> ndarray, zero-mean version for pure Neumann
    description: str = ""
    control: Callable | None = None  # njit solution up to a constant, for control variates

    def exact_sets(self, x, y) -> np.ndarray:
        """Exact solution for every parameter row, shape ``(n_sets, *x.shape)``."""
        return np.stack([self.exact(x, y, row) for row in self.coeffs.params])


# --- generic fields ----------------------------------------------------------

@numba.njit(cache=True)
def zero_source(x, y, p):
    return 0.0


@numba.njit(cache=True)
def zero_neumann(x, y, side, p):
    return 0.0


@numba.njit(cache=True)
def zero_dirichlet(x, y, p):
    return 0.0


@numba.njit(cache=True)
def zero_drift(x, y, p):
    return 0.0, 0.0


# constant data: p = (f value, g value, g2 value)
@numba.njit(cache=True)
def const_source(x, y, p):
    return p[0]


@numba.njit(cache=True)
def const_neumann(x, y, side, p):
    return p[1]


@numba.njit(cache=True)
def const_dirichlet(x, y, p):
    return p[2]


# --- u = exp(a (x + y)); p = (a, bx, by) -------------------------------------

@numba.njit(cache=True)
def exp_source(x, y, p):
    a = p[0]
    bx = p[1] if p.shape[0] > 1 else 0.0
    by = p[2] if p.shape[0] > 2 else 0.0
    return -a * (a + bx * x + by * y) * np.exp(a * (x + y))


@numba.njit(cache=True)
def exp_neumann(x, y, side, p):
    a = p[0]
    half = 0.5 * a * np.exp(a * (x + y))
    if side == RIGHT or side == TOP:
        return half
    return -half


@numba.njit(cache=True)
def exp_dirichlet(x, y, p):
    return np.exp(p[0] * (x + y))


@numba.njit(cache=True)
def linear_drift(x, y, p):
    return p[1] * x, p[2] * y


# --- u = (x^2-1)^2 (y^2-1)^2 - 64/225 ----------------------------------------

@numba.njit(cache=True)
def poly_source(x, y, p):
    qx = (x * x - 1.0) ** 2
    qy = (y * y - 1.0) ** 2
    return -2.0 * (3.0 * x * x - 1.0) * qy - 2.0 * (3.0 * y * y - 1.0) * qx


@numba.njit(cache=True)
def poly_solution(x, y, p):
    return (x * x - 1.0) ** 2 * (y * y - 1.0) ** 2


# --- builtin problems ----------------------------------------------------------

def exp_mean_uniform(a: float) -> float:
    """Mean of ``exp(a (x + y))`` over the uniform law on the square."""
    if a == 0.0:
        return 1.0
    return (np.exp(a) - np.exp(-a)) ** 2 / (4.0 * a * a)


def _gauss_ratio(a: float, beta: float, nodes: int = 64) -> float:
    t, w = np.polynomial.legendre.leggauss(nodes)
    dens = np.exp(beta * t * t)
    return float(np.sum(w * dens * np.exp(a * t)) / np.sum(w * dens))


def convection_density(bx: float, by: float):
    """Normalised invariant density of ``1/2 Δ + bx x ∂x + by y ∂y`` with reflection."""
    t, w = np.polynomial.legendre.leggauss(64)
    zx = np.sum(w * np.exp(bx * t * t))
    zy = np.sum(w * np.exp(by * t * t))

    def density(x, y):
        return np.exp(bx * np.asarray(x) ** 2 + by * np.asarray(y) ** 2) / (zx * zy)

    return density


def mixed_problem(alphas=(1 / 3, 2 / 3, 1.0)) -> Problem:
    """Poisson problem, Neumann on three sides, Dirichlet on ``x = 1``."""
    coeffs = Coefficients(exp_source, exp_neumann, exp_dirichlet, zero_drift,
                          np.array([[a] for a in alphas], dtype=float),
                          SquareDomain.mixed())

    def exact(x, y, row):
        return np.exp(row[0] * (np.asarray(x) + np.asarray(y)))

    return Problem("mixed", coeffs, exact,
                   "u = exp(a(x+y)); Dirichlet on x = 1, Neumann elsewhere", exp_dirichlet)


def neumann_poly_problem() -> Problem:
    """Homogeneous Neumann problem with a polynomial solution."""
    coeffs = Coefficients(poly_source, zero_neumann, zero_dirichlet, zero_drift,
                          np.zeros((1, 1)), SquareDomain.pure_neumann())

    def exact(x, y, row):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x * x - 1.0) ** 2 * (y * y - 1.0) ** 2 - 64.0 / 225.0

    return Problem("neumann_poly", coeffs, exact,
                   "u = (x^2-1)^2 (y^2-1)^2 - 64/225, homogeneous Neumann", poly_solution)


def neumann_exp_problem(alphas=(1 / 3, 2 / 3, 1.0)) -> Problem:
    """Pure Neumann Poisson problem with solution ``exp(a(x+y))`` up to a constant."""
    coeffs = Coefficients(exp_source, exp_neumann, exp_dirichlet, zero_drift,
                          np.array([[a] for a in alphas], dtype=float),
                          SquareDomain.pure_neumann())

    def exact(x, y, row):
        a = row[0]
        return np.exp(a * (np.asarray(x) + np.asarray(y))) - exp_mean_uniform(a)

    return Problem("neumann_exp", coeffs, exact,
                   "u = exp(a(x+y)) - mean, pure Neumann", exp_dirichlet)


def convection_problem(alpha=0.3, beta_x=0.2, beta_y=0.1) -> Problem:
    """Pure Neumann problem for ``1/2 Δ + bx x ∂x + by y ∂y``.

    The reference solution is centred against the invariant density
    ``∝ exp(bx x^2 + by y^2)``.
    """
    drift_x = np.zeros((2, 1))
    drift_x[1, 0] = beta_x
    drift_y = np.zeros((1, 2))
    drift_y[0, 1] = beta_y
    coeffs = Coefficients(exp_source, exp_neumann, exp_dirichlet, linear_drift,
                          np.array([[alpha, beta_x, beta_y]]),
                          SquareDomain.pure_neumann(), (drift_x, drift_y))

    def exact(x, y, row):
        a, bx, by = row
        shift = _gauss_ratio(a, bx) * _gauss_ratio(a, by)
        return np.exp(a * (np.asarray(x) + np.asarray(y))) - shift

    return Problem("convection", coeffs, exact,
                   "u = exp(a(x+y)) - p-mean, drift (bx x, by y)", exp_dirichlet)


def constant_problem(f=0.0, g=0.0, g2=0.0, domain: SquareDomain | None = None) -> Coefficients:
    """Constant data; handy for plumbing checks."""
    return Coefficients(const_source, const_neumann, const_dirichlet, zero_drift,
                        np.array([[f, g, g2]], dtype=float),
                        domain or SquareDomain.pure_neumann())


BUILTIN = {
    "mixed": mixed_problem,
    "neumann_poly": neumann_poly_problem,
    "neumann_exp": neumann_exp_problem,
    "convection": convection_problem,
}


def builtin_problem(name: str, alpha=None, beta_x: float = 0.2, beta_y: float = 0.1) -> Problem:
    """Look up a builtin test problem by id.

    ``alpha`` may be a scalar or a sequence (several parameter rows scored on
    the same trajectories). Ignored for ``neumann_poly``.
    """
    if name not in BUILTIN:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(BUILTIN)}")
    if name == "neumann_poly":
        return neumann_poly_problem()
    if name == "convection":
        return convection_problem(0.3 if alpha is None else float(alpha), beta_x, beta_y)
    if alpha is None:
        return BUILTIN[name]()
    alphas = np.atleast_1d(np.asarray(alpha, dtype=float))
    return BUILTIN[name](tuple(alphas))


__all__ = [
    "Coefficients", "Problem", "builtin_problem", "mixed_problem", "neumann_poly_problem",
    "neumann_exp_problem", "convection_problem", "constant_problem", "convection_density",
    "exp_mean_uniform", "BOTTOM", "LEFT", "RIGHT", "TOP",
]
