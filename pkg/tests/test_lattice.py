"""Lattice geometry: metric, balls, boundaries, chains."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack.lattice import (
    CHAIN_LENGTH_CAP,
    ball_count,
    build_ball_chain,
    graph_distance,
    inner_boundary_of,
    l1_path,
    make_ball,
    neighbors,
    outer_boundary_of,
    same_parity,
    volume_audit,
)

points = lambda d: st.tuples(*([st.integers(-20, 20)] * d))  # noqa: E731


@given(st.integers(1, 3).flatmap(lambda d: st.tuples(points(d), points(d), points(d))))
def test_graph_distance_is_a_metric(triple):
    x, y, z = triple
    assert graph_distance(x, y) == graph_distance(y, x)
    assert graph_distance(x, y) >= 0
    assert (graph_distance(x, y) == 0) == (x == y)
    assert graph_distance(x, z) <= graph_distance(x, y) + graph_distance(y, z)


@given(st.integers(1, 3).flatmap(points))
def test_neighbors_are_unit_distance(x):
    nbrs = neighbors(x)
    assert len(nbrs) == 2 * len(x)
    assert len(set(nbrs)) == 2 * len(x)
    for y in nbrs:
        assert graph_distance(x, y) == 1


@given(st.integers(0, 9), st.integers(1, 3).flatmap(lambda d: st.tuples(points(d), points(d))))
def test_parity_flips_across_one_step(n, pair):
    x, y = pair
    assert same_parity(n, x, y) == ((n + graph_distance(x, y)) % 2 == 0)
    for z in neighbors(y):
        assert same_parity(n, x, z) != same_parity(n, x, y)
    assert same_parity(n + 1, x, y) != same_parity(n, x, y)


def test_ball_volumes_match_known_counts():
    # 1-d balls are intervals; 2-d diamond count is 2R^2 + 2R + 1.
    assert len(make_ball((0,), 5)) == 11
    assert len(make_ball((0, 0), 8)) == 2 * 64 + 2 * 8 + 1 == 145
    # 3-d, R=2: shells of size 1, 6, 18.
    assert len(make_ball((0, 0, 0), 2)) == 25


@given(st.integers(1, 3), st.integers(0, 6))
@settings(max_examples=30)
def test_ball_count_matches_enumeration(d, R):
    assert ball_count(d, R) == len(make_ball((0,) * d, R))


def test_ball_structure_and_index():
    B = make_ball((1, -2), 3)
    assert B.dimension == 2
    assert B.center == (1, -2)
    for p in B.interior:
        assert graph_distance(p, B.center) <= 3
        assert p in B
        assert B.interior[B.index_of(p)] == p
    assert list(B.interior) == sorted(B.interior)
    for q in B.outer_boundary:
        assert graph_distance(q, B.center) == 4
        assert q not in B
        assert any(graph_distance(q, p) == 1 for p in B.interior)
    for q in B.inner_boundary:
        assert graph_distance(q, B.center) == 3


def test_boundary_operators_agree_with_ball():
    B = make_ball((0, 0), 2)
    assert tuple(outer_boundary_of(B.interior)) == B.outer_boundary
    assert tuple(inner_boundary_of(B.interior)) == B.inner_boundary


@given(st.integers(1, 3).flatmap(lambda d: st.tuples(points(d), points(d))))
def test_l1_path_is_a_geodesic(pair):
    a, b = pair
    path = l1_path(a, b)
    assert path[0] == a and path[-1] == b
    assert len(path) == graph_distance(a, b) + 1
    for u, v in zip(path, path[1:]):
        assert graph_distance(u, v) == 1


def test_ball_chain_invariants():
    R = 48
    chain = build_ball_chain((0, 0), R, (-R // 2, 0), (R // 2, 0))
    spacing = R // 8
    assert chain.small_radius == spacing
    assert chain.n_balls <= CHAIN_LENGTH_CAP
    assert graph_distance((-R // 2, 0), chain.centers[0]) <= spacing
    assert graph_distance((R // 2, 0), chain.centers[-1]) <= spacing
    for w, c1, c2 in zip(chain.overlap_points, chain.centers, chain.centers[1:]):
        assert graph_distance(w, c1) <= spacing
        assert graph_distance(w, c2) <= spacing
    for c in chain.centers:
        assert graph_distance(c, (0, 0)) + R // 2 <= R


def test_ball_chain_rejects_small_radii_and_far_endpoints():
    with pytest.raises(ValueError):
        build_ball_chain((0, 0), 32, (0, 0), (1, 0))
    with pytest.raises(ValueError):
        build_ball_chain((0, 0), 48, (0, 0), (47, 0))


def test_volume_audit_passes():
    report = volume_audit(2, 12)
    assert report.passed
