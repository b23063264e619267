import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumann_mc.geometry import BOTTOM, INWARD, LEFT, RIGHT, TANGENT, TOP
from neumann_mc.schemes import apply_scheme, fd1, fd3_diamond, fd3_oneside, kinetic, scheme_id

from oracles import loglog_slope, stencil_expectation

zero = lambda x, y: 0.0  # noqa: E731
one = lambda x, y: 1.0  # noqa: E731


def test_fd1_examples(rng):
    out = fd1((1.0, 0.2), RIGHT, 0.1, zero, zero, rng)
    assert out.score_inc == 0.0 and out.time_inc == 0.0
    assert out.new_point == pytest.approx((0.9, 0.2))
    assert fd1((1.0, 0.2), RIGHT, 0.1, zero, one, rng).score_inc == pytest.approx(0.2)


def test_diamond_score_and_frequencies(rng):
    f2 = lambda x, y: 2.0  # noqa: E731
    out = fd3_diamond((1.0, 0.0), RIGHT, 0.1, f2, one, rng)
    # h g + h^2 f / 2 (the ghost-point elimination gives h g, see the module table)
    assert out.score_inc == pytest.approx(0.1 + 0.01)
    assert out.time_inc == pytest.approx(0.005)
    counts = {"in": 0, "up": 0, "down": 0}
    for _ in range(100_000):
        p = fd3_diamond((1.0, 0.0), RIGHT, 0.1, zero, zero, rng).new_point
        key = "in" if p.x < 0.95 else ("up" if p.y > 0 else "down")
        counts[key] += 1
    freq = np.array([counts["in"], counts["up"], counts["down"]]) / 100_000
    assert np.allclose(freq, [0.5, 0.25, 0.25], atol=0.01)


def test_oneside_example(rng):
    f = lambda x, y: 3.0 if abs(x - 0.9) < 1e-12 else 0.0  # noqa: E731
    out = fd3_oneside((1.0, 0.0), RIGHT, 0.1, f, one, rng)
    assert out.score_inc == pytest.approx(0.23)
    assert out.time_inc == pytest.approx(0.01)
    assert out.new_point.x == pytest.approx(0.9)
    assert abs(out.new_point.y) == pytest.approx(0.1)


def test_kinetic_examples(rng):
    g = lambda x, y: math.pi / 4  # noqa: E731
    out = kinetic((1.0, 0.0), RIGHT, 0.1, zero, g, rng)
    assert out.score_inc == pytest.approx(0.1)
    times = [kinetic((0.0, -1.0), BOTTOM, 0.1, zero, zero, rng).time_inc for _ in range(20_000)]
    assert np.mean(times) == pytest.approx(0.01, abs=3 * 0.01 / math.sqrt(20_000) * 1.5)
    fixed = kinetic((0.0, -1.0), BOTTOM, 0.1, zero, zero, rng, fixed_time=True)
    assert fixed.time_inc == pytest.approx(fixed.h_used ** 2)


def test_halving_near_corner(rng):
    out = fd3_oneside((1.0, 0.97), RIGHT, 0.1, zero, one, rng)
    assert out.h_used == pytest.approx(0.025)
    assert out.score_inc == pytest.approx(2 * 0.025)
    out = fd3_diamond((1.0, 0.97), RIGHT, 0.1, zero, one, rng)
    assert out.h_used <= 0.03


@pytest.mark.parametrize("name", ["fd1", "diamond", "oneside3", "kinetic"])
def test_corner_uses_diagonal(name, rng):
    for _ in range(200):
        out = apply_scheme(name, (1.0, 1.0), RIGHT, 0.1, zero, zero, rng)
        p = out.new_point
        assert abs(p.x) <= 1.0 and abs(p.y) <= 1.0
        assert (p.x, p.y) != (1.0, 1.0)
    if name == "fd1":
        assert p.x == pytest.approx(1 - 0.1 / math.sqrt(2)) and p.x == p.y


@given(st.sampled_from(["fd1", "diamond", "oneside3", "kinetic"]), st.integers(0, 3),
       st.floats(-1.0, 1.0), st.floats(1e-3, 0.5), st.integers(0, 2**31))
def test_replacement_inside(name, side, t, h, seed):
    b = -INWARD[side] + t * TANGENT[side]
    out = apply_scheme(name, b, side, h, one, one, np.random.default_rng(seed))
    assert max(abs(out.new_point.x), abs(out.new_point.y)) <= 1.0
    if name in ("fd1", "oneside3") and abs(t) < 1.0:
        # the new point is at distance h_used from the wall that was hit
        assert float(np.dot(out.new_point - b, INWARD[side])) == pytest.approx(out.h_used)
    assert out.time_inc >= 0.0
    assert 0 < out.h_used <= h


def test_argument_checks(rng):
    with pytest.raises(ValueError):
        fd1((1.0, 0.0), RIGHT, 0.0, zero, zero, rng)
    with pytest.raises(ValueError):
        fd1((1.0, 0.0), 7, 0.1, zero, zero, rng)
    with pytest.raises(ValueError):
        scheme_id("fd2")


# --- consistency on smooth test functions ------------------------------------------

HS = np.array([0.2, 0.1, 0.05])


def _errors(name, u, grad, lap, b, side):
    n, t = INWARD[side], TANGENT[side]
    outward = -n
    g = lambda x, y: 0.5 * float(np.dot(grad(x, y), outward))  # noqa: E731
    f = lambda x, y: -0.5 * lap(x, y)  # noqa: E731
    return np.array([abs(stencil_expectation(name, u, b, n, t, h, f, g) - u(*b)) for h in HS])


HARMONIC = (lambda x, y: math.exp(x) * math.cos(y),
            lambda x, y: np.array([math.exp(x) * math.cos(y), -math.exp(x) * math.sin(y)]),
            lambda x, y: 0.0)
SMOOTH = (lambda x, y: math.exp(0.7 * (x + y)),
          lambda x, y: 0.7 * math.exp(0.7 * (x + y)) * np.ones(2),
          lambda x, y: 2 * 0.49 * math.exp(0.7 * (x + y)))


@pytest.mark.parametrize("name", ["oneside3", "diamond", "kinetic"])
@pytest.mark.parametrize("fn", [HARMONIC, SMOOTH], ids=["harmonic", "exp"])
@pytest.mark.parametrize("b, side", [((1.0, 0.3), RIGHT), ((-0.2, -1.0), BOTTOM),
                                     ((-1.0, 0.1), LEFT), ((0.4, 1.0), TOP)])
def test_third_order_local_consistency(name, fn, b, side):
    errs = _errors(name, *fn, b, side)
    assert loglog_slope(HS, errs) >= 2.5


def test_linear_function_reproduced_exactly():
    u = lambda x, y: x  # noqa: E731
    for name in ("fd1", "diamond", "oneside3", "kinetic"):
        errs = _errors(name, u, lambda x, y: np.array([1.0, 0.0]), lambda x, y: 0.0,
                       (1.0, 0.2), RIGHT)
        assert np.all(errs < 1e-12)


def test_fd1_first_order_per_unit_local_time():
    # each application advances the local time by O(h), so the global effect of
    # the local O(h^2) defect is O(h)
    u = lambda x, y: x * x  # noqa: E731
    errs = _errors("fd1", u, lambda x, y: np.array([2 * x, 0.0]), lambda x, y: 2.0,
                   (1.0, 0.2), RIGHT)
    assert loglog_slope(HS, errs) == pytest.approx(2.0, abs=0.05)
    assert loglog_slope(HS, errs / HS) == pytest.approx(1.0, abs=0.05)
