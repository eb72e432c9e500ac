import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Polygon as ShapelyPolygon

from elastoshape.errors import DomainError, GeometryError, SizeError
from elastoshape.geometry import (KOCH_DIMENSION, Polygon, char_fn_distance, check_eps_cone,
                                  check_lower_regularity, check_uniform_domain,
                                  check_upper_regularity, hausdorff_distance, koch_prefractal,
                                  polyline_ball_length, polyline_measure, sample_polyline)
from elastoshape.mesh import grid_mesh_in_region, unit_square_mesh

SQUARE = Polygon.box(0, 0, 1, 1)
BIG = Polygon.box(-1, -1, 7, 7)


def square_boundary(step):
    return sample_polyline(np.array([[0, 0], [1, 0], [1, 1], [0, 1]]), step, closed=True)


def dyadic_segment(k=10):
    # nodes at multiples of 2^-k, so distances to dyadic radii are exact
    return polyline_measure(np.column_stack([np.arange(2 ** k + 1) / 2 ** k, np.zeros(2 ** k + 1)]))


# --- polygon ---------------------------------------------------------------------

def test_polygon_orientation_normalized():
    p = Polygon([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert p.area == pytest.approx(1.0)
    assert Polygon([(0, 0), (1, 0), (1, 1), (0, 0)]).vertices.shape == (3, 2)


@pytest.mark.parametrize("verts", [[(0, 0), (1, 1)], [(0, 0), (1, 0), (2, 0)]])
def test_polygon_degenerate(verts):
    with pytest.raises(GeometryError):
        Polygon(verts)


def test_polygon_simplicity():
    assert SQUARE.is_simple()
    assert not Polygon([(0, 0), (4, 0), (4, 2), (1, -1), (0, 2)]).is_simple()


# --- hausdorff -------------------------------------------------------------------

def test_hausdorff_single_points():
    assert hausdorff_distance([(0, 0)], [(3, 4)]) == pytest.approx(5.0)


def test_hausdorff_identity():
    a = square_boundary(0.05)
    assert hausdorff_distance(a, a) == 0.0


def test_hausdorff_shifted_square():
    # brute-force oracle over all sample pairs (step 0.01): 0.1
    a = square_boundary(0.01)
    assert hausdorff_distance(a, a + [0.1, 0.0]) == pytest.approx(0.1, abs=1e-12)


def test_hausdorff_empty():
    with pytest.raises(DomainError):
        hausdorff_distance(np.zeros((0, 2)), [(0, 0)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_hausdorff_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.random((rng.integers(1, 12), 2)) for _ in range(3))
    dab, dba = hausdorff_distance(a, b), hausdorff_distance(b, a)
    assert dab == pytest.approx(dba)
    assert dab <= hausdorff_distance(a, c) + hausdorff_distance(c, b) + 1e-12
    assert hausdorff_distance(a, a) == 0.0


# --- characteristic functions ----------------------------------------------------

def test_char_fn_identity():
    assert char_fn_distance(SQUARE, SQUARE, BIG) == 0.0


def test_char_fn_disjoint():
    far = Polygon.box(5, 5, 6, 6)
    assert char_fn_distance(SQUARE, far, BIG) == pytest.approx(2.0, abs=1e-9)


def test_char_fn_shifted_against_clipping_oracle():
    q = Polygon.box(0.5, 0, 1.5, 1)
    exact = ShapelyPolygon(SQUARE.vertices).symmetric_difference(ShapelyPolygon(q.vertices)).area
    assert exact == pytest.approx(1.0)
    assert char_fn_distance(SQUARE, q, BIG) == pytest.approx(exact, abs=0.02)


def test_char_fn_symmetric_random_triangles():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = Polygon(rng.random((3, 2)) * 4 + 1)
        q = Polygon(rng.random((3, 2)) * 4 + 1)
        d = char_fn_distance(p, q, BIG, resolution=400)
        assert d == char_fn_distance(q, p, BIG, resolution=400)
        exact = ShapelyPolygon(p.vertices).symmetric_difference(ShapelyPolygon(q.vertices)).area
        assert d == pytest.approx(exact, abs=0.1)


def test_char_fn_not_contained():
    with pytest.raises(DomainError):
        char_fn_distance(SQUARE, Polygon.box(0, 0, 9, 9), BIG)


# --- epsilon cone ----------------------------------------------------------------

def _cone_points(y, xi, eps, n=12):
    r = np.linspace(eps / n, eps * (1 - 1e-9), n)
    a = np.linspace(-eps, eps, n)
    R, A = np.meshgrid(r, a)
    c, s = xi
    loc = np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()])
    return y + loc @ np.array([[c, s], [-s, c]])


def test_cone_unit_square_passes():
    rep = check_eps_cone(SQUARE, 0.1)
    assert rep.passed and rep.witness is None
    assert rep.sampling["boundary_step"] == pytest.approx(0.005)


def test_cone_unit_square_brute_force_direction():
    # independent oracle: the diagonal toward the centre works for every sample
    eps = 0.1
    pts = square_boundary(0.01)
    sp = ShapelyPolygon(SQUARE.vertices)
    from shapely import contains_xy
    for x in pts[::7]:
        xi = (np.array([0.5, 0.5]) - x) / np.linalg.norm(np.array([0.5, 0.5]) - x)
        near = pts[np.linalg.norm(pts - x, axis=1) < eps]
        for y in near:
            z = _cone_points(y, xi, eps)
            assert contains_xy(sp, z[:, 0], z[:, 1]).all()


def test_cone_fails_for_large_eps():
    rep = check_eps_cone(SQUARE, 10.0)
    assert not rep.passed
    assert rep.witness is not None


def _tangent_disks(n=96):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    # two unit disks touching at the origin, traversed as one closed curve
    right = np.column_stack([1 - np.cos(t), np.sin(t)])
    left = np.column_stack([-1 + np.cos(t), -np.sin(t)])
    return np.vstack([right, left])


def test_cone_tangent_disks_fails_near_cusp():
    p = Polygon(_tangent_disks())
    rep = check_eps_cone(p, 0.1)
    assert not rep.passed
    x = np.array(rep.witness[0])
    assert np.linalg.norm(x) < 0.2


def test_cone_monotone_in_eps():
    tri = Polygon([(0, 0), (1, 0), (0.3, 0.8)])
    results = [check_eps_cone(tri, e).passed for e in (0.02, 0.05, 0.1, 0.2, 0.4)]
    for big, small in zip(results[1:], results[:-1]):
        assert not big or small


def test_cone_requires_positive_eps():
    with pytest.raises(DomainError):
        check_eps_cone(SQUARE, 0.0)


# --- uniform domains -------------------------------------------------------------

def test_uniform_square_passes():
    rep = check_uniform_domain(unit_square_mesh(8), 0.5)
    assert rep.passed
    assert rep.eps_star >= 0.5


def test_uniform_eps_above_one_fails():
    rep = check_uniform_domain(unit_square_mesh(6), 1.5)
    assert not rep.passed
    assert rep.worst_pair is not None


def dumbbell(neck):
    def inside(c):
        x, y = c[:, 0], c[:, 1]
        lobes = (np.abs(y) < 0.5) & ((x < 0.5) | (x > 1.0))
        return lobes | ((np.abs(y) < neck / 2) & (x >= 0.5) & (x <= 1.0))
    return grid_mesh_in_region(inside, (0, -0.5, 1.5, 0.5), 0.05)


def test_uniform_dumbbell_fails():
    m = dumbbell(0.1)
    m.validate()
    rep = check_uniform_domain(m, 1.0)
    assert not rep.passed
    # the neck forces the admissible epsilon far below that of the square
    assert rep.eps_star < 0.5 * check_uniform_domain(unit_square_mesh(10), 0.1).eps_star


def test_uniform_disconnected():
    def inside(c):
        return (c[:, 0] < 0.4) | (c[:, 0] > 0.6)
    m = grid_mesh_in_region(inside, (0, 0, 1, 1), 0.1)
    with pytest.raises(DomainError):
        check_uniform_domain(m, 0.1)


# --- regularity ------------------------------------------------------------------

RADII = np.array([2.0 ** -k for k in range(0, 8)])


def test_upper_segment_d1_passes():
    assert check_upper_regularity(dyadic_segment(), 1.0, 2.0, RADII).passed


def test_upper_segment_d15_fails_small_r():
    rep = check_upper_regularity(dyadic_segment(), 1.5, 2.0, RADII)
    assert not rep.passed
    assert rep.worst_witness[1] == RADII.min()


def test_upper_nonpositive_constant():
    with pytest.raises(DomainError):
        check_upper_regularity(dyadic_segment(), 1.0, 0.0, RADII)


def test_upper_bad_exponent():
    with pytest.raises(DomainError):
        check_upper_regularity(dyadic_segment(), 2.5, 1.0, RADII)


def test_lower_segment_s1_passes():
    assert check_lower_regularity(dyadic_segment(), 1.0, 1.0, RADII).passed


def test_lower_segment_s05_fails():
    rep = check_lower_regularity(dyadic_segment(), 0.5, 1.0, RADII)
    assert not rep.passed
    assert rep.worst_witness[1] == RADII.min()


def test_regularity_monotone_in_constant():
    mu = dyadic_segment(8)
    ups = [check_upper_regularity(mu, 1.0, c, RADII).passed for c in (0.5, 1.0, 2.0, 4.0)]
    assert ups == sorted(ups)
    lows = [check_lower_regularity(mu, 1.0, c, RADII).passed for c in (0.25, 0.5, 1.0, 2.0)]
    assert lows == sorted(lows, reverse=True)


def koch_radii(level):
    return np.array([2.0 ** -k for k in range(12) if 2.0 ** -k >= 3.0 ** -level])


def brute_ratio(mu, radii, d, closed):
    # oracle: explicit loops over every support point and radius
    pts, w = mu.points, mu.weights
    best = []
    for x in pts:
        dist = np.sqrt(((pts - x) ** 2).sum(axis=1))
        for r in radii:
            mass = w[dist <= r].sum() if closed else w[dist < r].sum()
            best.append(mass / r ** d)
    return max(best), min(best)


def test_koch_upper_regularity_level4():
    pts, mu = koch_prefractal(level=4)
    radii = koch_radii(4)
    hi, _ = brute_ratio(mu, radii, KOCH_DIMENSION, closed=False)
    rep = check_upper_regularity(mu, KOCH_DIMENSION, 5.0, radii)
    assert rep.passed
    assert rep.worst_witness[2] == pytest.approx(hi)
    assert not check_upper_regularity(mu, 1.5, 5.0, radii).passed


@pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
def test_koch_upper_constant_level_independent(level):
    _, mu = koch_prefractal(level=level)
    assert check_upper_regularity(mu, KOCH_DIMENSION, 5.0, koch_radii(level)).passed


def test_koch_lower_regularity_level4():
    _, mu = koch_prefractal(level=4)
    radii = koch_radii(4)
    _, lo = brute_ratio(mu, radii, KOCH_DIMENSION, closed=True)
    rep = check_lower_regularity(mu, KOCH_DIMENSION, 0.5, radii)
    assert rep.passed
    assert rep.worst_witness[2] == pytest.approx(lo)


# --- koch ------------------------------------------------------------------------

def test_koch_level0():
    pts, mu = koch_prefractal(level=0)
    assert len(pts) == 2 and mu.total == 1.0


def test_koch_level1_generator():
    pts, mu = koch_prefractal(level=1)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    np.testing.assert_allclose(seg, 1 / 3)
    np.testing.assert_allclose(mu.weights, [1 / 8, 1 / 4, 1 / 4, 1 / 4, 1 / 8])
    assert pts[2, 1] > 0


def test_koch_level3_vs_level4_hausdorff():
    # brute-force oracle on curves sampled at 0.002 gives 0.01074 < 3^-3
    a = sample_polyline(koch_prefractal(level=3)[0], 0.002)
    b = sample_polyline(koch_prefractal(level=4)[0], 0.002)
    d = hausdorff_distance(a, b)
    assert d == pytest.approx(0.010736, abs=2e-4)
    assert d < 3.0 ** -3


@pytest.mark.parametrize("level", range(0, 7))
def test_koch_total_mass(level):
    pts, mu = koch_prefractal(level=level)
    assert len(pts) == 4 ** level + 1
    assert mu.total == pytest.approx(1.0, abs=1e-14)


def test_koch_size_guard():
    with pytest.raises(SizeError):
        koch_prefractal(level=9)


def test_polyline_ball_length():
    line = np.array([[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(polyline_ball_length(line, [(0.5, 0.0), (0.0, 0.0), (0.5, 0.3)], 0.2),
                               [0.4, 0.2, 0.0])
    assert polyline_ball_length(line, [(0.5, 0.1)], 0.2)[0] == pytest.approx(2 * math.sqrt(0.03))


def test_points_in_polygon_matches_shapely():
    from shapely import contains_xy
    from elastoshape.geometry import points_in_polygon
    rng = np.random.default_rng(0)
    koch = np.vstack([koch_prefractal(level=4)[0], [[1, -0.3], [0, -0.3]]])
    for verts in (_tangent_disks(), koch, SQUARE.vertices):
        pts = rng.random((20000, 2)) * 4 - 2
        ours = points_in_polygon(pts, verts)
        np.testing.assert_array_equal(ours, contains_xy(ShapelyPolygon(verts), pts[:, 0], pts[:, 1]))
