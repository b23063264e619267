"""Stochastic spectral solver for the pure Neumann problem.

The solution is sought as ``P u = sum_k u_k Psi_k`` over a tensor Lagrange
basis on the Chebyshev grid ``z_n = cos((2n + 1) pi / (2N + 2))``. One basis
function is removed and the others are centred so that every ``Psi_k``
integrates to zero against the invariant law, which pins down the free
additive constant.

Walks started at each retained node ``x_i`` provide, on the same
trajectories, an estimate ``d_i`` of ``u(x_i)`` and the same functional
applied to every ``Psi_k``. With the walker's own sign conventions (see
:mod:`neumann_mc.problems`) the data of ``Psi_k`` are

    source  F_k = -L Psi_k,        Neumann  G_k = 1/2 dPsi_k/dn (outward normal),

and the system reads ``C u = d`` with ``C_ik = A_ik - Psi_k(x_i) + [i = k]``,
where ``A_ik`` is the walk functional of ``(F_k, G_k)`` at node ``i``.

Since every ``Psi_k`` is a polynomial, ``A_ik`` is a linear combination of
Chebyshev moments of the walk events (interior points weighted by their time
weight, boundary points weighted by their local-time weight), so the walks
only need to record those moments.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numba
import numpy as np
from numpy.polynomial import chebyshev as cheb

from .euler import EulerConfig, euler_trace
from .estimators import ParticleCloud
from .geometry import BOTTOM, LEFT, RIGHT, TOP
from .parallel import child_seed
from .problems import Coefficients
from .wos import CircleTable, WosConfig, wos_trace


class SingularSystemError(np.linalg.LinAlgError):
    """The spectral matrix is numerically singular."""

    def __init__(self, kappa: float):
        super().__init__(f"spectral matrix is singular (condition number {kappa:.3g})")
        self.kappa = kappa


# --- one-dimensional Lagrange basis ------------------------------------------

def cheb_nodes(n: int) -> np.ndarray:
    """``z_k = cos((2k + 1) pi / (2n + 2))`` for ``k = 0..n``."""
    k = np.arange(n + 1)
    return np.cos((2 * k + 1) * np.pi / (2 * n + 2))


def cheb_integrals(deg: int) -> np.ndarray:
    """``∫_{-1}^{1} T_j`` for ``j = 0..deg``: ``2 / (1 - j^2)`` for even ``j``, else 0."""
    j = np.arange(deg + 1)
    out = np.zeros(deg + 1)
    even = j % 2 == 0
    out[even] = 2.0 / (1.0 - j[even] ** 2)
    return out


def lagrange_coefficients(n: int) -> np.ndarray:
    """Chebyshev coefficients of the Lagrange polynomials at :func:`cheb_nodes`.

    Row ``k`` holds ``l_k``. The nodes are the roots of ``T_{n+1}``, so the
    discrete orthogonality of ``T_0..T_n`` on them gives the coefficients in
    closed form: ``c_j = 2 T_j(z_k) / (n + 1)``, halved for ``j = 0``.
    """
    z = cheb_nodes(n)
    j = np.arange(n + 1)
    coef = 2.0 / (n + 1) * np.cos(np.outer(np.arccos(z), j))
    coef[:, 0] *= 0.5
    return coef


def barycentric_weights(n: int) -> np.ndarray:
    k = np.arange(n + 1)
    return (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * n + 2))


def lagrange_eval(n: int, x) -> np.ndarray:
    """All Lagrange polynomials at ``x``; shape ``(*x.shape, n + 1)``.

    Uses the barycentric formula, with exact cardinality at the nodes.
    """
    z = cheb_nodes(n)
    w = barycentric_weights(n)
    x = np.asarray(x, dtype=float)
    diff = x[..., None] - z
    hit = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w / diff
        out = terms / terms.sum(axis=-1, keepdims=True)
    rows = hit.any(axis=-1)
    out[rows] = hit[rows].astype(float)
    return out


@dataclass(frozen=True)
class TchebBasis:
    """Tensor Lagrange basis of degree ``n`` (even) on the Chebyshev grid."""

    n: int
    nodes: np.ndarray
    coef: np.ndarray      # (n+1, n+1): row k = Chebyshev coefficients of l_k
    weights: np.ndarray   # (n+1, n+1): ∫∫ l_a(x) l_b(y) dx dy

    @property
    def size(self) -> int:
        return self.n + 1

    def grid(self) -> np.ndarray:
        """``(n+1, n+1, 2)`` grid; entry ``[a, b]`` is ``(z_a, z_b)``."""
        xx, yy = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return np.stack([xx, yy], axis=-1)

    def tensor_coef(self, a: int, b: int) -> np.ndarray:
        """2-D Chebyshev coefficients of ``l_a(x) l_b(y)``."""
        return np.outer(self.coef[a], self.coef[b])

    def phi_values(self, x, y) -> np.ndarray:
        """``l_a(x) l_b(y)`` for all ``(a, b)``; shape ``(*x.shape, n+1, n+1)``."""
        lx = lagrange_eval(self.n, x)
        ly = lagrange_eval(self.n, y)
        return lx[..., :, None] * ly[..., None, :]


def build_basis(n_even: int) -> TchebBasis:
    if n_even < 2 or n_even % 2:
        raise ValueError("the basis degree must be even and at least 2")
    coef = lagrange_coefficients(n_even)
    integrals = coef @ cheb_integrals(n_even)
    return TchebBasis(n_even, cheb_nodes(n_even), coef, np.outer(integrals, integrals))


# --- centring -----------------------------------------------------------------

@dataclass(frozen=True)
class CenteredBasis:
    """Basis with one function removed and the rest centred.

    ``Psi_{a,b} = l_a l_b - ratio[a, b] l_{i0} l_{j0}`` with
    ``ratio = moment / moment[removed]`` and ``moment[a, b]`` the integral
    (exact mode) or the particle average (approximate mode) of ``l_a l_b``
    against the invariant law.
    """

    base: TchebBasis
    removed: tuple[int, int]
    moments: np.ndarray
    mode: str
    cloud: ParticleCloud | None = None

    @property
    def ratio(self) -> np.ndarray:
        return self.moments / self.moments[self.removed]

    @property
    def retained(self) -> list[tuple[int, int]]:
        size = self.base.size
        return [(a, b) for a in range(size) for b in range(size) if (a, b) != self.removed]

    @property
    def size(self) -> int:
        return self.base.size ** 2 - 1

    def nodes(self) -> np.ndarray:
        """Retained grid nodes, ``(K, 2)``, in the order of :attr:`retained`."""
        z = self.base.nodes
        return np.array([(z[a], z[b]) for a, b in self.retained])

    def psi_coef(self, k: int) -> np.ndarray:
        a, b = self.retained[k]
        i0, j0 = self.removed
        return self.base.tensor_coef(a, b) - self.ratio[a, b] * self.base.tensor_coef(i0, j0)

    def psi_values(self, x, y) -> np.ndarray:
        """All ``Psi_k`` at the given points; shape ``(*x.shape, K)``."""
        phi = self.base.phi_values(x, y)
        i0, j0 = self.removed
        psi = phi - self.ratio * phi[..., i0, j0][..., None, None]
        keep = np.ones((self.base.size, self.base.size), bool)
        keep[self.removed] = False
        return psi[..., keep]

    def psi_integrals(self, density_moments: np.ndarray) -> np.ndarray:
        """``∫ Psi_k p`` given the exact moments ``∫ l_a l_b p`` of a density."""
        i0, j0 = self.removed
        full = density_moments - self.ratio * density_moments[i0, j0]
        keep = np.ones_like(full, bool)
        keep[self.removed] = False
        return full[keep]


def center_exact(basis: TchebBasis) -> CenteredBasis:
    """Centre against the uniform law on the square, removing the middle node."""
    mid = basis.n // 2
    return CenteredBasis(basis, (mid, mid), basis.weights / 4.0, "exact")


def center_approx(basis: TchebBasis, cloud: ParticleCloud, weights=None) -> CenteredBasis:
    """Centre against the empirical law of a particle cloud.

    The removed function maximises the absolute particle average; the middle
    node wins ties. ``weights`` (summing to one) replaces the uniform particle
    weights, e.g. to feed quadrature nodes.
    """
    pts = cloud.points
    phi = basis.phi_values(pts[:, 0], pts[:, 1])
    if weights is None:
        moments = phi.mean(axis=0)
    else:
        moments = np.tensordot(np.asarray(weights, float), phi, axes=(0, 0))
    mags = np.abs(moments)
    top = mags.max()
    if not top > 0:
        raise ValueError("degenerate cloud: every particle average vanishes")
    mid = basis.n // 2
    if mags[mid, mid] >= top * (1.0 - 1e-12):
        removed = (mid, mid)
    else:
        removed = tuple(int(v) for v in np.unravel_index(np.argmax(mags), mags.shape))
    return CenteredBasis(basis, removed, moments, "approximate", cloud)


def ideal_matrix(centered: CenteredBasis, psi_integrals: np.ndarray) -> np.ndarray:
    """Limit of the spectral matrix when each walk estimate is exact.

    Walks return the solution with zero mean against the true invariant law,
    so ``A_ik -> Psi_k(x_i) - ∫ Psi_k p`` and ``C -> I - 1 c^T`` with
    ``c_k = ∫ Psi_k p``. Its spectrum is ``1`` (multiplicity ``K - 1``) and
    ``1 - sum_k c_k``.
    """
    c = np.asarray(psi_integrals, float)
    return np.eye(c.size) - np.outer(np.ones(c.size), c)


def lambda_n(psi_integrals) -> float:
    """The one non-unit eigenvalue of :func:`ideal_matrix`."""
    return 1.0 - float(np.sum(psi_integrals))


# --- operator data of the basis functions ------------------------------------

def _pad(c: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    out[:c.shape[0], :c.shape[1]] = c[:shape[0], :shape[1]]
    return out


def cheb2d_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of two 2-D Chebyshev series."""
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i, j in zip(*np.nonzero(a)):
        ex = np.zeros(i + 1)
        ex[i] = 1.0
        ey = np.zeros(j + 1)
        ey[j] = 1.0
        rows = np.apply_along_axis(cheb.chebmul, 0, b, ex)
        full = np.apply_along_axis(cheb.chebmul, 1, rows, ey)
        out[:full.shape[0], :full.shape[1]] += a[i, j] * full
    return out


def generator_coef(c: np.ndarray, drift_poly=None) -> np.ndarray:
    """Chebyshev coefficients of ``L psi = 1/2 Δ psi + b · ∇ psi``."""
    shape = c.shape
    lap = _pad(cheb.chebder(c, 2, axis=0), shape) + _pad(cheb.chebder(c, 2, axis=1), shape)
    out = 0.5 * lap
    if drift_poly is not None:
        bx, by = drift_poly
        dx = cheb.chebder(c, 1, axis=0)
        dy = cheb.chebder(c, 1, axis=1)
        terms = [cheb2d_mul(bx, dx), cheb2d_mul(by, dy)]
        size = max(shape[0], *(t.shape[0] for t in terms)), max(shape[1], *(t.shape[1] for t in terms))
        out = _pad(out, size)
        for t in terms:
            out += _pad(t, size)
    return out


def conormal_coef(c: np.ndarray) -> np.ndarray:
    """Half outward normal derivative on each side as 1-D series in the tangent.

    Row ``s`` is the series in ``y`` (right, left) or ``x`` (top, bottom).
    """
    deg = max(c.shape)
    dx = cheb.chebder(c, 1, axis=0)
    dy = cheb.chebder(c, 1, axis=1)
    alt_x = (-1.0) ** np.arange(dx.shape[0])
    alt_y = (-1.0) ** np.arange(dy.shape[1])
    out = np.zeros((4, deg))
    out[RIGHT, :dx.shape[1]] = 0.5 * dx.sum(axis=0)
    out[LEFT, :dx.shape[1]] = -0.5 * (alt_x @ dx)
    out[TOP, :dy.shape[0]] = 0.5 * dy.sum(axis=1)
    out[BOTTOM, :dy.shape[0]] = -0.5 * (dy @ alt_y)
    return out


def trace_degree(n: int, drift_poly=None) -> int:
    """Moment degree that covers ``L Psi`` and ``dPsi/dn`` for basis degree ``n``."""
    if drift_poly is None:
        return n
    extra = max(max(b.shape) - 1 for b in drift_poly)
    return n + max(extra - 1, 0)


def basis_data(centered: CenteredBasis, drift_poly=None):
    """``F`` (K, d, d) source series ``-L Psi_k`` and ``G`` (K, 4, d) boundary series."""
    d = trace_degree(centered.base.n, drift_poly) + 1
    F = np.zeros((centered.size, d, d))
    G = np.zeros((centered.size, 4, d))
    for k in range(centered.size):
        c = centered.psi_coef(k)
        F[k] = -_pad(generator_coef(c, drift_poly), (d, d))
        g = conormal_coef(c)
        G[k, :, :g.shape[1]] = g[:, :d]
    return F, G


# --- walk traces --------------------------------------------------------------

@dataclass(frozen=True)
class NodeTrace:
    """Averaged walk data at one node.

    ``interior[a, b]`` is the per-trajectory mean of ``sum w T_a(x) T_b(y)``
    over interior events, ``boundary[s, a]`` that of ``sum w T_a(t)`` over
    boundary events on side ``s``. ``score`` is the mean Feynman-Kac score of
    the problem data and ``score_se`` its standard error.
    """

    node: tuple[float, float]
    n: int
    score: np.ndarray
    score_se: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray


def _trace_from(node, scores, mom, bmom):
    n = scores.shape[0]
    se = scores.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(scores.shape[1])
    return NodeTrace(tuple(map(float, node)), n, scores.mean(axis=0), se, mom / n, bmom / n)


def collect_traces(basis: CenteredBasis | TchebBasis, coeffs: Coefficients, m: int, seed=0,
                   cfg: EulerConfig | WosConfig | None = None,
                   table: CircleTable | None = None) -> dict[tuple[int, int], NodeTrace]:
    """Run ``m`` walks from grid nodes and keep their moments.

    A :class:`CenteredBasis` traces its retained nodes, a bare
    :class:`TchebBasis` the whole grid, so one run can serve several
    centrings. The result maps grid indices ``(a, b)`` to traces; node
    ``(a, b)`` always draws from ``child_seed(seed, a (n+1) + b)``.

    ``cfg`` selects the walker: an :class:`EulerConfig` (the default, with
    ``delta = xi = 0.001`` and ``t0 = 10``) or a :class:`WosConfig`, which
    needs a circle ``table``.
    """
    cfg = cfg or EulerConfig(0.001, 0.001, 10.0)
    if isinstance(cfg, WosConfig) and table is None:
        raise ValueError("walk-on-spheres traces need a circle table")
    if isinstance(basis, CenteredBasis):
        base, indices = basis.base, basis.retained
    else:
        base = basis
        indices = [(a, b) for a in range(base.size) for b in range(base.size)]
    degree = trace_degree(base.n, coeffs.drift_poly)
    out = {}
    for a, b in indices:
        node = (base.nodes[a], base.nodes[b])
        rng = np.random.default_rng(child_seed(seed, a * base.size + b))
        if isinstance(cfg, EulerConfig):
            scores, mom, bmom = euler_trace(node, coeffs, cfg, rng, m, degree)
        else:
            scores, mom, bmom = wos_trace(node, coeffs, cfg, table, rng, m, degree)
        out[(a, b)] = _trace_from(node, scores, mom, bmom)
    return out


def _select(centered: CenteredBasis, traces) -> list[NodeTrace]:
    if isinstance(traces, dict):
        missing = [ij for ij in centered.retained if ij not in traces]
        if missing:
            raise ValueError(f"no trace for grid nodes {missing}")
        return [traces[ij] for ij in centered.retained]
    traces = list(traces)
    if len(traces) != centered.size:
        raise ValueError(f"need one trace per retained node ({centered.size})")
    return traces


# --- assembly and solve ---------------------------------------------------------

@dataclass(frozen=True)
class SpectralSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    solution: np.ndarray
    kappa: float
    centered: CenteredBasis

    def grid_values(self) -> np.ndarray:
        """``P u`` at every grid node, ``(n+1, n+1)``, the removed one included."""
        g = self.centered.base.grid()
        return evaluate(self.centered, self.solution, g[..., 0], g[..., 1])


def walk_functional(centered: CenteredBasis, traces, drift_poly=None):
    """``A_ik``: the walk estimate at node ``i`` for the data of ``Psi_k``."""
    traces = _select(centered, traces)
    F, G = basis_data(centered, drift_poly)
    d = F.shape[1]
    mom = np.stack([_pad(t.interior, (d, d)) for t in traces])
    bmom = np.stack([np.pad(t.boundary, ((0, 0), (0, max(d - t.boundary.shape[1], 0))))[:, :d]
                     for t in traces])
    return np.einsum("iab,kab->ik", mom, F) + np.einsum("isa,ksa->ik", bmom, G)


def assemble(centered: CenteredBasis, traces, drift_poly=None, row: int = 0) -> SpectralSystem:
    """Build ``C u = d`` from the traces, solve it and report ``kappa``.

    ``traces`` is the mapping from :func:`collect_traces` or a list in the
    order of ``centered.retained``. ``row`` picks the parameter set whose
    scores form ``d``.
    """
    traces = _select(centered, traces)
    nodes = centered.nodes()
    psi_at_nodes = centered.psi_values(nodes[:, 0], nodes[:, 1])
    a = walk_functional(centered, traces, drift_poly)
    matrix = a - psi_at_nodes + np.eye(centered.size)
    rhs = np.array([t.score[row] for t in traces])
    kappa = float(np.linalg.cond(matrix, 2))
    if not np.isfinite(kappa) or kappa > 1e14:
        raise SingularSystemError(kappa)
    try:
        solution = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError(kappa) from None
    return SpectralSystem(matrix, rhs, solution, kappa, centered)


def evaluate(centered: CenteredBasis, nodal, x, y) -> np.ndarray:
    """``sum_k u_k Psi_k`` at the given points."""
    return centered.psi_values(x, y) @ np.asarray(nodal, float)


@dataclass(frozen=True)
class ErrMetrics:
    """Grid errors of a spectral solution.

    ``err1`` compares with the exact zero-mean solution. ``err2`` compares
    with the exact solution shifted to zero mean over the cloud, which is the
    constant the approximate centring actually selects. ``err2_printed`` adds
    ``sum u(X_l) / (4 Q)`` instead of subtracting the cloud mean.
    """

    err1: float
    err2: float | None = None
    err2_printed: float | None = None


def err_metrics(system_or_centered, nodal=None, exact: Callable | None = None,
                cloud: ParticleCloud | None = None) -> ErrMetrics:
    """Max-over-grid errors ``err1`` and, with a cloud, ``err2``."""
    if isinstance(system_or_centered, SpectralSystem):
        centered = system_or_centered.centered
        nodal = system_or_centered.solution if nodal is None else nodal
    else:
        centered = system_or_centered
    if exact is None or nodal is None:
        raise ValueError("need nodal values and the exact solution")
    g = centered.base.grid()
    approx = evaluate(centered, nodal, g[..., 0], g[..., 1])
    truth = exact(g[..., 0], g[..., 1])
    err1 = float(np.max(np.abs(truth - approx)))
    if cloud is None:
        return ErrMetrics(err1)
    values = exact(cloud.points[:, 0], cloud.points[:, 1])
    err2 = float(np.max(np.abs(truth - values.mean() - approx)))
    printed = float(np.max(np.abs(truth - approx + values.sum() / (4.0 * len(cloud)))))
    return ErrMetrics(err1, err2, printed)


# --- basis functions as walker data -------------------------------------------

@numba.njit(cache=True)
def _cheb2d(x, y, c):
    d0, d1 = c.shape
    tx = np.empty(d0)
    ty = np.empty(d1)
    tx[0] = 1.0
    ty[0] = 1.0
    if d0 > 1:
        tx[1] = x
    if d1 > 1:
        ty[1] = y
    for k in range(2, d0):
        tx[k] = 2.0 * x * tx[k - 1] - tx[k - 2]
    for k in range(2, d1):
        ty[k] = 2.0 * y * ty[k - 1] - ty[k - 2]
    s = 0.0
    for a in range(d0):
        for b in range(d1):
            s += c[a, b] * tx[a] * ty[b]
    return s


@numba.njit(cache=True)
def psi_source(x, y, p):
    d = int(p[0])
    return _cheb2d(x, y, p[1:1 + d * d].reshape((d, d)))


@numba.njit(cache=True)
def psi_neumann(x, y, side, p):
    d = int(p[0])
    off = 1 + d * d + side * d
    t = y if side == 0 or side == 2 else x
    s = 0.0
    tk1 = 1.0
    tk = t
    for k in range(d):
        if k == 0:
            v = 1.0
        elif k == 1:
            v = t
        else:
            v = 2.0 * t * tk - tk1
            tk1 = tk
            tk = v
        s += p[off + k] * v
    return s


def psi_problem(centered: CenteredBasis, coeffs: Coefficients,
                indices: Sequence[int] | None = None) -> Coefficients:
    """Walker data ``(-L Psi_k, 1/2 dPsi_k/dn)`` for the chosen basis functions.

    One parameter row per function, so a single batch of walks scores all of
    them. The walks' means then estimate ``Psi_k(x_i) - ∫ Psi_k p``, which is
    the direct check of the walk functional used in the assembly.
    """
    F, G = basis_data(centered, coeffs.drift_poly)
    indices = range(centered.size) if indices is None else indices
    d = F.shape[1]
    rows = [np.concatenate([[d], F[k].ravel(), G[k].ravel()]) for k in indices]
    return Coefficients(psi_source, psi_neumann, coeffs.dirichlet, coeffs.drift, np.array(rows),
                        coeffs.domain, coeffs.drift_poly)


__all__ = ["TchebBasis", "CenteredBasis", "SpectralSystem", "NodeTrace", "ErrMetrics",
           "SingularSystemError", "build_basis", "center_exact", "center_approx", "cheb_nodes",
           "lagrange_coefficients", "lagrange_eval", "collect_traces", "walk_functional",
           "assemble", "evaluate", "err_metrics", "ideal_matrix", "lambda_n", "psi_problem",
           "generator_coef", "conormal_coef", "trace_degree"]
