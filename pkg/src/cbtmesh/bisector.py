"""Bisector identity encoding and subdivision-matrix vertex decoding.

A bisector is a triangle produced by recursively bisecting a root
triangle along its (v0, v1) edge.  Its 64-bit heap index encodes the
full split path: the root bisector of halfedge ``h`` has index
``2**R + h`` with ``R = ceil(log2 H)``, and the children of index ``j``
are ``2j`` and ``2j + 1``.  Depth and root halfedge are recovered from
the index alone, which is what lets the pool store one integer per
bisector instead of cached vertices.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Splitting matrices: rows of M @ [v0; v1; v2] are the child's vertices.
# Child 0 keeps v0, child 1 keeps v1, and both gain midpoint(v0, v1).
M0 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0]])
M1 = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]])


def root_rank(n_halfedges: int) -> int:
    """R = ceil(log2 H); root ids start at 2**R."""
    if n_halfedges < 1:
        raise ValueError("halfedge count must be >= 1")
    return max(1, (n_halfedges - 1).bit_length())


def max_depth(n_halfedges: int) -> int:
    """Deepest subdivision level representable in a 64-bit index."""
    return 63 - root_rank(n_halfedges)


def make_root_id(n_halfedges: int, h: int) -> int:
    if not 0 <= h < n_halfedges:
        raise ValueError(f"halfedge {h} out of range [0, {n_halfedges})")
    return (1 << root_rank(n_halfedges)) + h


def depth_of(bid: int, rank: int) -> int:
    """Subdivision level of index ``bid`` under root rank ``rank``."""
    d = bid.bit_length() - 1 - rank
    assert d >= 0, f"id {bid} below root rank {rank}"
    return d


def root_halfedge(bid: int, rank: int) -> int:
    return (bid >> depth_of(bid, rank)) - (1 << rank)


def children(bid: int) -> tuple[int, int]:
    """Heap children (2j, 2j+1); rejects indices that would overflow."""
    if bid >> 63:
        raise OverflowError(f"children of {bid} exceed the 64-bit index range")
    return 2 * bid, 2 * bid + 1


def parent(bid: int) -> int:
    return bid >> 1


def path_matrix(bid: int, rank: int) -> np.ndarray:
    """Accumulated subdivision matrix for the split path of ``bid``."""
    d = depth_of(bid, rank)
    m = np.eye(3)
    h = bid
    root = bid >> d
    while h != root:
        m = m @ (M1 if h & 1 else M0)
        h >>= 1
    return m


def bisector_vertices(mesh, bid: int) -> np.ndarray:
    """Decode the (3, 3) vertex rows of a bisector, double precision.

    Walks the index bits from the deepest split upward, accumulating the
    product of splitting matrices, then applies it to the root bisector
    vertices of the recovered halfedge.
    """
    rank = root_rank(mesh.n_halfedges)
    h = root_halfedge(bid, rank)
    assert 0 <= h < mesh.n_halfedges, f"id {bid} maps outside the mesh"
    return path_matrix(bid, rank) @ mesh.root_bisector_vertices(h)


# -- compiled decoding for the pipeline and batch checks ---------------


@njit(nogil=True, cache=True)
def nb_depth_of(bid, rank):
    d = -1 - rank
    while bid:
        bid >>= np.uint64(1)
        d += 1
    return d


@njit(nogil=True, cache=True)
def nb_decode_tri(bid, rank, he_next, he_vert, positions, out):
    """Decode one bisector into out[3, 3] (rows v0, v1, v2), float64."""
    d = nb_depth_of(bid, rank)
    root = bid >> np.uint64(d)

    # subdivision matrix, deepest split bit first
    m00 = 1.0
    m01 = 0.0
    m02 = 0.0
    m10 = 0.0
    m11 = 1.0
    m12 = 0.0
    m20 = 0.0
    m21 = 0.0
    m22 = 1.0
    h = bid
    while h != root:
        if h & np.uint64(1):
            # M @ M1: columns mix as (0.5*c0+... ) per M1 layout
            a0 = 0.5 * m02
            a1 = m01 + 0.5 * m02
            a2 = m00
            b0 = 0.5 * m12
            b1 = m11 + 0.5 * m12
            b2 = m10
            c0 = 0.5 * m22
            c1 = m21 + 0.5 * m22
            c2 = m20
        else:
            a0 = m00 + 0.5 * m02
            a1 = 0.5 * m02
            a2 = m01
            b0 = m10 + 0.5 * m12
            b1 = 0.5 * m12
            b2 = m11
            c0 = m20 + 0.5 * m22
            c1 = 0.5 * m22
            c2 = m21
        m00 = a0
        m01 = a1
        m02 = a2
        m10 = b0
        m11 = b1
        m12 = b2
        m20 = c0
        m21 = c1
        m22 = c2
        h >>= np.uint64(1)

    he = np.int64(root - (np.uint64(1) << np.uint64(rank)))

    # root bisector vertices: v0, v1, and the face vertex mean
    nxt = he_next[he]
    r0x = positions[he_vert[he], 0]
    r0y = positions[he_vert[he], 1]
    r0z = positions[he_vert[he], 2]
    r1x = positions[he_vert[nxt], 0]
    r1y = positions[he_vert[nxt], 1]
    r1z = positions[he_vert[nxt], 2]
    sx = r0x
    sy = r0y
    sz = r0z
    n = 1
    w = nxt
    while w != he:
        sx += positions[he_vert[w], 0]
        sy += positions[he_vert[w], 1]
        sz += positions[he_vert[w], 2]
        n += 1
        w = he_next[w]
    r2x = sx / n
    r2y = sy / n
    r2z = sz / n

    out[0, 0] = m00 * r0x + m01 * r1x + m02 * r2x
    out[0, 1] = m00 * r0y + m01 * r1y + m02 * r2y
    out[0, 2] = m00 * r0z + m01 * r1z + m02 * r2z
    out[1, 0] = m10 * r0x + m11 * r1x + m12 * r2x
    out[1, 1] = m10 * r0y + m11 * r1y + m12 * r2y
    out[1, 2] = m10 * r0z + m11 * r1z + m12 * r2z
    out[2, 0] = m20 * r0x + m21 * r1x + m22 * r2x
    out[2, 1] = m20 * r0y + m21 * r1y + m22 * r2y
    out[2, 2] = m20 * r0z + m21 * r1z + m22 * r2z


@njit(nogil=True, cache=True)
def nb_decode_tris(ids, rank, he_next, he_vert, positions, out, start, end):
    for i in range(start, end):
        nb_decode_tri(ids[i], rank, he_next, he_vert, positions, out[i])


@njit(nogil=True, cache=True)
def nb_decode_tri_f32(bid, rank, he_next, he_vert, positions32, out32):
    """Single-precision decode path for the precision-degeneracy study.

    Same algorithm as nb_decode_tri but every matrix entry, accumulation
    and vertex stays in float32, mirroring a 32-bit GPU pipeline.
    """
    half = np.float32(0.5)
    d = nb_depth_of(bid, rank)
    root = bid >> np.uint64(d)

    m00 = np.float32(1.0)
    m01 = np.float32(0.0)
    m02 = np.float32(0.0)
    m10 = np.float32(0.0)
    m11 = np.float32(1.0)
    m12 = np.float32(0.0)
    m20 = np.float32(0.0)
    m21 = np.float32(0.0)
    m22 = np.float32(1.0)
    h = bid
    while h != root:
        if h & np.uint64(1):
            a0 = half * m02
            a1 = m01 + half * m02
            a2 = m00
            b0 = half * m12
            b1 = m11 + half * m12
            b2 = m10
            c0 = half * m22
            c1 = m21 + half * m22
            c2 = m20
        else:
            a0 = m00 + half * m02
            a1 = half * m02
            a2 = m01
            b0 = m10 + half * m12
            b1 = half * m12
            b2 = m11
            c0 = m20 + half * m22
            c1 = half * m22
            c2 = m21
        m00 = a0
        m01 = a1
        m02 = a2
        m10 = b0
        m11 = b1
        m12 = b2
        m20 = c0
        m21 = c1
        m22 = c2
        h >>= np.uint64(1)

    he = np.int64(root - (np.uint64(1) << np.uint64(rank)))
    nxt = he_next[he]
    r0x = positions32[he_vert[he], 0]
    r0y = positions32[he_vert[he], 1]
    r0z = positions32[he_vert[he], 2]
    r1x = positions32[he_vert[nxt], 0]
    r1y = positions32[he_vert[nxt], 1]
    r1z = positions32[he_vert[nxt], 2]
    sx = r0x
    sy = r0y
    sz = r0z
    n = np.float32(1.0)
    w = nxt
    while w != he:
        sx += positions32[he_vert[w], 0]
        sy += positions32[he_vert[w], 1]
        sz += positions32[he_vert[w], 2]
        n += np.float32(1.0)
        w = he_next[w]
    r2x = sx / n
    r2y = sy / n
    r2z = sz / n

    out32[0, 0] = m00 * r0x + m01 * r1x + m02 * r2x
    out32[0, 1] = m00 * r0y + m01 * r1y + m02 * r2y
    out32[0, 2] = m00 * r0z + m01 * r1z + m02 * r2z
    out32[1, 0] = m10 * r0x + m11 * r1x + m12 * r2x
    out32[1, 1] = m10 * r0y + m11 * r1y + m12 * r2y
    out32[1, 2] = m10 * r0z + m11 * r1z + m12 * r2z
    out32[2, 0] = m20 * r0x + m21 * r1x + m22 * r2x
    out32[2, 1] = m20 * r0y + m21 * r1y + m22 * r2y
    out32[2, 2] = m20 * r0z + m21 * r1z + m22 * r2z
