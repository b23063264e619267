import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumann_mc.estimators import monte_carlo
from neumann_mc.euler import (DIRICHLET_HIT, HORIZON, EulerConfig, EulerSampler,
                              compatibility_residual, euler_checkpoints, euler_step, euler_trace,
                              gaussian_kernel, reflected_path, run_mixed, run_neumann)
from neumann_mc.geometry import GeometryError, SquareDomain
from neumann_mc.problems import (builtin_problem, constant_problem, convection_problem,
                                 neumann_exp_problem, poly_solution)

from oracles import euler_expected_score, gauss_legendre_2d


# --- kernel --------------------------------------------------------------------

def test_printed_kernel_examples():
    assert gaussian_kernel((0, 0), (0, 0), 0.01) == pytest.approx(1591.549, rel=1e-6)
    k0 = gaussian_kernel((0, 0), (0, 0), 0.01)
    assert gaussian_kernel((0.01, 0), (0, 0), 0.01) == pytest.approx(k0 / math.e)
    assert gaussian_kernel((0, 0), (0, 0), 0.02) == pytest.approx(k0 / 4)


@pytest.mark.parametrize("xi", [0.1, 0.01, 0.001])
def test_half_normal_kernel_has_unit_mass_on_half_line(xi):
    d, w = np.polynomial.legendre.leggauss(80)
    d = 0.5 * (d + 1) * 12 * xi
    w = 0.5 * w * 12 * xi
    mass = sum(wi * gaussian_kernel((di, 0), (0, 0), xi, "half_normal") for di, wi in zip(d, w))
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_printed_kernel_half_line_mass_is_not_one():
    # 1 / (4 sqrt(pi) xi): the printed normalisation does not integrate to one
    xi = 0.01
    d, w = np.polynomial.legendre.leggauss(80)
    d = 0.5 * (d + 1) * 10 * xi
    w = 0.5 * w * 10 * xi
    mass = sum(wi * gaussian_kernel((di, 0), (0, 0), xi) for di, wi in zip(d, w))
    assert mass == pytest.approx(1.0 / (4.0 * math.sqrt(math.pi) * xi), rel=1e-8)


def test_kernel_rejects_bad_xi():
    with pytest.raises(ValueError):
        gaussian_kernel((0, 0), (0, 0), 0.0)
    with pytest.raises(ValueError):
        gaussian_kernel((0, 0), (0, 0), 0.1, "box")


# --- config and single steps -----------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        EulerConfig(0.0, 0.01, 1.0)
    with pytest.raises(ValueError):
        EulerConfig(0.3, 0.01, 1.0)  # t0 not a multiple of delta
    with pytest.raises(ValueError):
        EulerConfig(0.01, 0.01, 1.0, kernel="box")
    assert EulerConfig(0.01, 0.01, 10.0).n_steps == 1000


def test_euler_step_examples():
    assert euler_step((0.2, 0.3), 0.01, increment=(0.0, 0.0)) == pytest.approx((0.2, 0.3))
    assert euler_step((0.0, 0.0), 0.01, drift=(1.0, 0.0), increment=(0, 0)) == pytest.approx((0.01, 0))
    assert euler_step((0.999, 0.0), 0.01, increment=(0.05, 0.0)) == pytest.approx((0.951, 0.0))


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_euler_step_stays_inside(x, y, dx, dy):
    p = euler_step((x, y), 0.01, increment=(dx, dy))
    assert abs(p.x) <= 1 and abs(p.y) <= 1


@pytest.mark.parametrize("drift", [False, True])
def test_reflected_path_contained(drift, rng):
    coeffs = convection_problem(0.3, 2.0, 2.0).coeffs if drift else constant_problem()
    pts = reflected_path(coeffs, 0.05, 20_000, rng)
    assert pts.shape == (20_000, 2)
    assert np.all(np.abs(pts) <= 1.0)


# --- trajectories ---------------------------------------------------------------------

def test_zero_data_scores_zero(rng):
    out = run_neumann((0.3, 0.1), constant_problem(), EulerConfig(0.01, 0.01, 1.0), rng, 50)
    assert np.all(out.score == 0.0)


@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 2**32 - 1))
def test_unit_source_scores_horizon_exactly(x, y, seed):
    cfg = EulerConfig(0.01, 0.01, 10.0)
    out = run_neumann((x, y), constant_problem(f=1.0), cfg, np.random.default_rng(seed), 3)
    assert np.allclose(out.score, 10.0, rtol=0, atol=1e-9)
    assert np.all(out.elapsed == pytest.approx(10.0))
    assert np.all(out.cause == HORIZON)


def test_start_outside_rejected(rng):
    with pytest.raises(GeometryError):
        run_neumann((1.5, 0.0), constant_problem(), EulerConfig(0.01, 0.01, 1.0), rng)


def test_domain_kind_checks(rng):
    cfg = EulerConfig(0.01, 0.01, 1.0)
    with pytest.raises(ValueError):
        run_mixed((0, 0), constant_problem(), cfg, rng)
    with pytest.raises(ValueError):
        run_neumann((0, 0), constant_problem(domain=SquareDomain.mixed()), cfg, rng)


def test_mixed_start_on_dirichlet_side(rng):
    coeffs = constant_problem(f=1.0, g=1.0, g2=2.5, domain=SquareDomain.mixed())
    out = run_mixed((1.0, 0.5), coeffs, EulerConfig(0.01, 0.01, 1.0), rng, 5)
    assert np.all(out.score == 2.5)
    assert np.all(out.elapsed == 0.0)
    assert np.all(out.cause == DIRICHLET_HIT)


def test_mixed_unit_dirichlet_data(rng):
    coeffs = constant_problem(g2=1.0, domain=SquareDomain.mixed())
    cfg = EulerConfig(0.01, 0.01, 5.0)
    out = run_mixed((0.5, 0.0), coeffs, cfg, rng, 400)
    hit = out.cause == DIRICHLET_HIT
    assert hit.mean() > 0.9
    assert np.all(out.score[hit] == 1.0)
    assert np.all(out.score[~hit] == 0.0)
    assert np.all(out.elapsed <= cfg.t0 + cfg.delta)


def test_local_time_against_closed_form():
    # f = -2, g = 1 on every side: u = x^2 + y^2 - 2/3
    coeffs = constant_problem(f=-2.0, g=1.0)
    cfg = EulerConfig(0.002, 0.002, 6.0)
    s = monte_carlo(EulerSampler((0.5, 0.5), coeffs, cfg), 4000, seed=3)
    exact = 0.5 - 2.0 / 3.0
    assert abs(s.mean[0] - exact) < 5 * s.std_error[0] + 0.02


@pytest.mark.parametrize("start", [(0.8, 0.0), (-0.8, 0.0)])
def test_mixed_problem_estimate_close(start):
    # far from the Dirichlet side the exit time has a long tail: the cap must
    # not truncate it
    prob = builtin_problem("mixed", 1 / 3)
    s = monte_carlo(EulerSampler(start, prob.coeffs, EulerConfig(0.01, 0.01, 200.0)),
                    4000, seed=1)
    assert abs(s.mean[0] - prob.exact_sets(*start)[0]) < 4 * s.std_error[0] + 0.01


def test_short_cap_truncates_mixed_walks(rng):
    prob = builtin_problem("mixed", 1 / 3)
    out = run_mixed((-0.8, 0.0), prob.coeffs, EulerConfig(0.01, 0.01, 2.0), rng, 2000)
    assert np.mean(out.cause == HORIZON) > 0.2


def test_checkpoints_match_full_run():
    prob = neumann_exp_problem((1 / 3,))
    cfg = EulerConfig(0.01, 0.01, 2.0)
    ck = euler_checkpoints((0.1, 0.2), prob.coeffs, cfg, np.random.default_rng(5), 30, [1.0, 2.0])
    full = run_neumann((0.1, 0.2), prob.coeffs, cfg, np.random.default_rng(5), 30)
    assert ck.shape == (30, 2, 1)
    assert np.allclose(ck[:, 1, 0], full.score[:, 0])


def test_trace_moments_reproduce_scores():
    # score of the exp problem = contraction of its own Chebyshev data with the moments
    prob = neumann_exp_problem((0.5,))
    cfg = EulerConfig(0.01, 0.01, 1.0)
    scores, mom, bmom = euler_trace((0.0, 0.0), prob.coeffs, cfg, np.random.default_rng(8), 50, 0)
    assert mom.shape == (1, 1) and bmom.shape == (4, 1)
    # degree 0: interior moment counts the elapsed time
    assert mom[0, 0] == pytest.approx(50 * 1.0)


def test_compatibility_residual_examples():
    assert compatibility_residual(constant_problem()) == 0.0
    assert compatibility_residual(constant_problem(f=1.0)) == pytest.approx(1.0)
    for a in (1 / 3, 2 / 3, 1.0):
        assert abs(compatibility_residual(neumann_exp_problem((a,)).coeffs)) < 1e-10


def test_compatibility_residual_matches_independent_quadrature():
    a = 2 / 3
    prob = neumann_exp_problem((a,))
    interior = gauss_legendre_2d(lambda x, y: -a * a * np.exp(a * (x + y))) / 4
    t, w = np.polynomial.legendre.leggauss(40)
    # outward derivative: +a e on right/top, -a e on left/bottom, halved
    side = lambda c: np.sum(w * 0.5 * a * np.exp(a * (c + t)))  # noqa: E731
    boundary = (side(1.0) * 2 - side(-1.0) * 2) / 4
    assert interior + boundary == pytest.approx(0.0, abs=1e-12)
    assert compatibility_residual(prob.coeffs) == pytest.approx(interior + boundary, abs=1e-10)


# --- exact discrete expectation and control variates -----------------------------

@pytest.mark.parametrize("control", [False, True])
@pytest.mark.parametrize("start", [(0.0, 0.0), (0.7, -0.4)])
def test_mean_score_matches_fold_law_expectation(start, control):
    # coarse steps make the discretisation bias large enough to resolve
    prob = builtin_problem("neumann_exp", 1.0)
    coeffs = prob.coeffs.with_control(prob.control) if control else prob.coeffs
    s = monte_carlo(EulerSampler(start, coeffs, EulerConfig(0.1, 0.1, 2.0)), 200_000, seed=3)
    expected = euler_expected_score(*start, 1.0, 0.1, 0.1, 2.0)
    assert abs(s.mean[0] - expected) < 4 * s.std_error[0]
    assert abs(expected - prob.exact(*start, prob.coeffs.params[0])) > 5 * s.std_error[0]


def test_control_variate_reduces_variance_only():
    prob = builtin_problem("neumann_exp", (1 / 3, 1.0))
    cfg = EulerConfig(0.01, 0.01, 2.0)
    plain = monte_carlo(EulerSampler((0.3, 0.5), prob.coeffs, cfg), 20_000, seed=4)
    cv = monte_carlo(EulerSampler((0.3, 0.5), prob.coeffs.with_control(prob.control), cfg),
                     20_000, seed=4)
    se = np.hypot(plain.std_error, cv.std_error)
    assert np.all(np.abs(plain.mean - cv.mean) < 4 * se)
    assert np.all(cv.variance < 0.5 * plain.variance)


def test_control_on_zero_data_has_zero_mean(rng):
    coeffs = constant_problem().with_control(poly_solution)
    out = run_neumann((0.2, 0.1), coeffs, EulerConfig(0.01, 0.01, 1.0), rng, 20_000)
    se = out.score[:, 0].std(ddof=1) / math.sqrt(len(out))
    assert se > 0
    assert abs(out.score[:, 0].mean()) < 4 * se
