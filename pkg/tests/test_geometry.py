import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neumann_mc.geometry import (BOTTOM, RIGHT, TOP, GeometryError, Point2, SquareDomain,
                                 contains, distance_to_boundary, project_to_boundary, symmetrize)

DOM = SquareDomain()
inside = st.floats(-1.0, 1.0, allow_nan=False)
strict = st.floats(-0.999, 0.999, allow_nan=False)


@pytest.mark.parametrize("p, d", [((0, 0), 1.0), ((0.8, 0), 0.2), ((0.3, -0.9), 0.1)])
def test_distance_examples(p, d):
    assert distance_to_boundary(p, DOM) == pytest.approx(d)


def test_distance_rejects_boundary_and_outside():
    with pytest.raises(GeometryError):
        distance_to_boundary((1.0, 0.0), DOM)
    with pytest.raises(GeometryError):
        distance_to_boundary((1.2, 0.0), DOM)


@pytest.mark.parametrize("p, q, side", [((0.8, 0), (1, 0), RIGHT), ((0, 0.95), (0, 1), TOP),
                                        ((0.9, 0.9), (1, 0.9), RIGHT),
                                        ((0.1, -0.97), (0.1, -1), BOTTOM)])
def test_projection_examples(p, q, side):
    got, s = project_to_boundary(p, DOM)
    assert s == side
    assert got == pytest.approx(q)


@pytest.mark.parametrize("p, q", [((1.1, 0), (0.9, 0)), ((-1.05, 1.02), (-0.95, 0.98)),
                                  ((0.5, -1.3), (0.5, -0.7))])
def test_symmetrize_examples(p, q):
    assert symmetrize(p, DOM) == pytest.approx(q)


def test_symmetrize_overshoot_raises():
    with pytest.raises(GeometryError):
        symmetrize((5.5, 0.0), DOM)


def test_non_finite_rejected():
    with pytest.raises(GeometryError):
        contains((np.nan, 0.0), DOM)


def test_closed_square_contains_boundary():
    assert contains((1.0, -1.0), DOM)
    assert not contains((1.0 + 1e-12, 0.0), DOM)


def test_vectorised_forms_agree():
    pts = np.array([[0.8, 0.0], [0.0, 0.95], [-0.3, 0.2]])
    proj, sides = project_to_boundary(pts, DOM)
    for p, q, s in zip(pts, proj, sides):
        q1, s1 = project_to_boundary(p, DOM)
        assert s1 == s and np.allclose(q1, q)
    assert np.allclose(distance_to_boundary(pts, DOM), [0.2, 0.05, 0.7])


@given(strict, strict)
def test_projection_distance_matches(x, y):
    q, side = project_to_boundary((x, y), DOM)
    assert max(abs(q.x), abs(q.y)) == pytest.approx(1.0)
    assert np.hypot(q.x - x, q.y - y) == pytest.approx(distance_to_boundary((x, y), DOM))


@given(inside, st.floats(1e-6, 0.99))
def test_symmetrize_involution_single_side(y, over):
    out = Point2(1.0 + over, y)
    back = symmetrize(out, DOM)
    assert contains(back, DOM)
    # reflecting the image across the same side recovers the proposal
    assert 2.0 - back.x == pytest.approx(out.x)
    assert back.y == y


@given(st.floats(-2.9, 2.9), st.floats(-2.9, 2.9))
def test_symmetrize_lands_inside(x, y):
    assert contains(symmetrize((x, y), DOM), DOM)


def test_domain_validation():
    with pytest.raises(ValueError):
        SquareDomain(kinds=(0, 0, 0))
    with pytest.raises(ValueError):
        SquareDomain(half_width=0.0)
    assert SquareDomain.mixed().has_dirichlet
    assert SquareDomain().area == 4.0
