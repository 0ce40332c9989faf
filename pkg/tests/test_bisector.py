from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbtmesh import bisector
from cbtmesh.bisector import (
    M0,
    M1,
    bisector_vertices,
    children,
    depth_of,
    make_root_id,
    max_depth,
    nb_decode_tri,
    parent,
    path_matrix,
    root_halfedge,
    root_rank,
)
from cbtmesh.halfedge import from_polygons


def test_make_root_id_examples():
    assert make_root_id(12, 7) == 23
    assert depth_of(23, root_rank(12)) == 0
    assert make_root_id(4, 0) == 4
    assert make_root_id(60, 59) == 123
    assert root_halfedge(123, root_rank(60)) == 59


def test_make_root_id_range():
    with pytest.raises(ValueError):
        make_root_id(12, 12)
    with pytest.raises(ValueError):
        make_root_id(12, -1)


def test_children_paper_case():
    assert children(14) == (28, 29)


def test_children_overflow_at_bit63():
    top = 1 << 63
    with pytest.raises(OverflowError):
        children(top)
    a, b = children(top - 1)
    assert b == (1 << 64) - 1


@settings(max_examples=200, deadline=None)
@given(st.integers(1, (1 << 62)))
def test_parent_of_children_roundtrip(j):
    a, b = children(j)
    assert parent(a) == j and parent(b) == j


def test_depth_limit_bound():
    assert max_depth(60) == 57  # 63 - ceil(log2 60)
    assert max_depth(4) == 61
    assert max_depth(3) == 61


@settings(max_examples=300, deadline=None)
@given(h=st.integers(0, 59), d=st.integers(0, 57), data=st.data())
def test_depth_root_recovery_roundtrip(h, d, data):
    rank = root_rank(60)
    root = make_root_id(60, h)
    path = data.draw(st.integers(0, (1 << d) - 1)) if d else 0
    bid = (root << d) | path
    assert depth_of(bid, rank) == d
    assert root_halfedge(bid, rank) == h
    assert (root << d) <= bid < ((root + 1) << d)


def _right_triangle_mesh():
    return from_polygons(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0, 1, 2]]
    )


def test_root_id_decodes_to_root_triangle():
    m = _right_triangle_mesh()
    tri = bisector_vertices(m, make_root_id(3, 0))
    assert np.allclose(tri, m.root_bisector_vertices(0))


def test_first_child_matrix_rows():
    # unit right triangle v0=(0,0), v1=(1,0), v2=(0,1): first child is
    # (v0, v2, midpoint(v0, v1))
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    child = M0 @ verts
    assert np.allclose(child, [[0, 0, 0], [0, 1, 0], [0.5, 0, 0]])
    child1 = M1 @ verts
    assert np.allclose(child1, [[0, 1, 0], [1, 0, 0], [0.5, 0, 0]])


def test_determinants_exact_rational():
    def det3(m):
        m = [[Fraction(x) for x in row] for row in m]
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )

    assert det3(M0) == Fraction(-1, 2)
    assert det3(M1) == Fraction(-1, 2)


def recursive_bisect(verts, bid, rank):
    """Independent oracle: explicit midpoint bisection along the path."""
    d = depth_of(bid, rank)
    bits = [(bid >> k) & 1 for k in range(d - 1, -1, -1)] if d else []
    tri = np.asarray(verts, dtype=np.float64)
    for b in bits:
        v0, v1, v2 = tri
        m = (v0 + v1) / 2.0
        tri = np.array([v0, v2, m]) if b == 0 else np.array([v2, v1, m])
    return tri


@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_matrix_decode_matches_recursive_oracle(data):
    coords = data.draw(
        st.lists(
            st.floats(-10, 10, allow_nan=False, allow_infinity=False),
            min_size=9,
            max_size=9,
        )
    )
    verts = np.array(coords).reshape(3, 3)
    rank = 2
    root = 4  # single root at rank 2
    for d in range(0, 7):
        for path in range(1 << d):
            bid = (root << d) | path
            m = path_matrix(bid, rank)
            got = m @ verts
            want = recursive_bisect(verts, bid, rank)
            assert np.max(np.abs(got - want)) <= 1e-12


def test_sibling_children_share_split_edge():
    rng = np.random.default_rng(5)
    verts = rng.normal(size=(3, 3))
    rank = 2
    for d in range(0, 5):
        for path in range(1 << d):
            bid = (4 << d) | path
            tri = path_matrix(bid, rank) @ verts
            c0 = path_matrix(bid * 2, rank) @ verts
            c1 = path_matrix(bid * 2 + 1, rank) @ verts
            mid = (tri[0] + tri[1]) / 2.0
            assert np.allclose(c0[2], mid, atol=1e-13)
            assert np.allclose(c1[2], mid, atol=1e-13)
            assert np.allclose(c0[1], tri[2], atol=1e-13)
            assert np.allclose(c1[0], tri[2], atol=1e-13)


def _area(tri):
    return 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))


def test_child_area_is_half_parent():
    rng = np.random.default_rng(9)
    verts = rng.normal(size=(3, 3))
    verts[:, 2] = 0.0  # planar
    rank = 2
    for d in range(0, 6):
        for path in range(0, 1 << d, 3):
            bid = (4 << d) | path
            pa = _area(path_matrix(bid, rank) @ verts)
            for c in children(bid):
                ca = _area(path_matrix(c, rank) @ verts)
                assert abs(ca - pa / 2.0) <= 1e-12 * max(1.0, pa)


def test_compiled_decode_matches_python(dodeca_mesh):
    m = dodeca_mesh
    rank = root_rank(m.n_halfedges)
    rng = np.random.default_rng(2)
    out = np.empty((3, 3), dtype=np.float64)
    for _ in range(200):
        h = int(rng.integers(0, 60))
        d = int(rng.integers(0, 20))
        path = int(rng.integers(0, 1 << d)) if d else 0
        bid = (make_root_id(60, h) << d) | path
        nb_decode_tri(np.uint64(bid), rank, m.next, m.vert, m.positions, out)
        want = bisector_vertices(m, bid)
        assert np.max(np.abs(out - want)) <= 1e-9 * max(1.0, np.abs(want).max())
