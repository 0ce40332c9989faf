import math

import numpy as np
import pytest

from cbtmesh import bisector, halfedge, sequential
from cbtmesh.pipeline import KeepAll, ParallelEngine


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile/load every jitted kernel once so timings stay honest."""
    st = sequential.initialize(halfedge.single_triangle(), 5)
    with ParallelEngine(threads=2) as eng:
        eng.update(st, KeepAll())
        eng.update(st, lambda bid: 1 if bid == 4 else 0)
        eng.update(st, lambda bid: 2)


@pytest.fixture
def triangle_mesh():
    return halfedge.single_triangle()


@pytest.fixture
def quad_mesh():
    return halfedge.single_quad()


@pytest.fixture
def grid_mesh():
    return halfedge.quad_grid(2, 2)


@pytest.fixture(scope="session")
def dodeca_mesh():
    return halfedge.dodecahedron()


def pentagon_cluster() -> halfedge.HalfedgeMesh:
    """Triangle + quad + pentagon sharing edges; 12 halfedges total.

    Face order fixes the halfedge numbering: triangle (h0..h2), quad
    (h3..h6), pentagon (h7..h11).  The pentagon runs P0..P4 so that
    twin(h7) = h1 across edge (P0, P1), twin(h8) = h3 across (P1, P2),
    and h11 spanning (P4, P0) stays on the boundary.
    """
    penta = [
        [math.cos(a), math.sin(a), 0.0]
        for a in (math.pi / 2 + 2 * math.pi * k / 5 for k in range(5))
    ]
    p0, p1, p2, p3, p4 = (np.array(p) for p in penta)
    x = p0 + p1 - (p2 + p4) / 2  # across edge (P0, P1), outside the pentagon
    y = p1 + (p1 - p0)
    z = p2 + (p2 - p3)
    positions = [list(p) for p in (p0, p1, p2, p3, p4, x, y, z)]
    faces = [
        [5, 1, 0],        # triangle: h0 = X->P1, h1 = P1->P0, h2 = P0->X
        [2, 1, 6, 7],     # quad: h3 = P2->P1, h4 = P1->Y, h5 = Y->Z, h6 = Z->P2
        [0, 1, 2, 3, 4],  # pentagon: h7 = P0->P1 ... h11 = P4->P0
    ]
    return halfedge.from_polygons(positions, faces)


@pytest.fixture(scope="session")
def fig_mesh():
    return pentagon_cluster()


def fig_id(fig_index: int, depth: int, rank: int = 4) -> int:
    """Map a figure-local bisector label to the pooled heap id.

    Figure labels omit the 2**rank root offset; a label j at depth d
    corresponds to heap id j + 2**rank * 2**d.
    """
    return fig_index + (1 << rank) * (1 << depth)


def make_verdicts(st, seed: int, epoch: int, split_p: float, merge_p: float):
    """Deterministic verdict map whose reservations always fit the pool.

    Pure data keyed by bisector id, shared verbatim by the sequential
    oracle and the parallel engine, with both split (3d + 4 each) and
    merge (2 each) reservations budgeted against the free slot count so
    no out-of-memory rejection can occur.
    """
    rng = np.random.default_rng((seed * 1009 + epoch) & 0xFFFFFFFF)
    ids = sorted(st.live_ids())
    u = rng.random(len(ids))
    verdicts = {bid: 0 for bid in ids}
    want_split, want_merge = [], []
    for bid, xv in zip(ids, u):
        d = bisector.depth_of(bid, st.rank)
        if xv < split_p and d < st.max_depth - 1:
            want_split.append((bid, d))
        elif xv > 1 - merge_p and d >= 1:
            want_merge.append(bid)
    budget = st.capacity - st.count()
    for bid in want_merge:
        if budget >= 2:
            budget -= 2
            verdicts[bid] = 2
    for bid, d in want_split:
        need = 3 * d + 4
        if budget >= need:
            budget -= need
            verdicts[bid] = 1
    return verdicts


def pressure_profile(st):
    """Split/merge probabilities keeping occupancy around 30-45%."""
    occ = st.count() / st.capacity
    split_p = 0.3 if occ < 0.32 else 0.0
    merge_p = 0.35 if occ < 0.42 else 0.8
    return split_p, merge_p
