"""Memory-pool triangulation state shared by both update engines.

The pool holds one fixed-size bisector record per slot: a 64-bit index,
three 32-bit neighbor pointers (slot indices, -1 for null), a command
word, and four reserved-slot integers for pending allocations.  Slot
occupancy is tracked by the CBT bitfield; a 2^D pointer buffer caches
the ranked live/free queries during parallel updates.
"""

from __future__ import annotations

import numpy as np

from . import bisector
from .cbt import Cbt

# Command word layout.  Bits 0-2 request edge splits (bisection edge,
# next edge, prev edge); bits 3-5 describe a merge request.
SPLIT_T = 1
SPLIT_N = 2
SPLIT_P = 4
SPLIT_MASK = 7
MERGE_REQ = 8
MERGE_QUAD = 16
MERGE_OWNER = 32


class CapacityError(RuntimeError):
    """Pool cannot hold the requested configuration."""


class TriangulationState:
    def __init__(self, mesh, depth: int):
        H = mesh.n_halfedges
        rank = bisector.root_rank(H)
        if depth < rank:
            raise CapacityError(
                f"cbt depth {depth} too small for H={H}: need D >= {rank}"
            )
        self.mesh = mesh
        self.depth = depth
        self.rank = rank
        self.max_depth = bisector.max_depth(H)
        cap = 1 << depth
        self.capacity = cap
        self.ids = np.zeros(cap, dtype=np.uint64)
        self.nexts = np.full(cap, -1, dtype=np.int32)
        self.prevs = np.full(cap, -1, dtype=np.int32)
        self.twins = np.full(cap, -1, dtype=np.int32)
        self.commands = np.zeros(cap, dtype=np.uint32)
        self.reserved = np.full((cap, 4), -1, dtype=np.int32)
        self.cbt = Cbt(depth)
        self.counter = np.zeros(1, dtype=np.int64)
        self.cache_live = np.full(cap, -1, dtype=np.int32)
        self.cache_free = np.full(cap, -1, dtype=np.int32)

    # -- queries --------------------------------------------------------

    def live_slots(self) -> np.ndarray:
        return np.flatnonzero(self.cbt.leaves).astype(np.int32)

    def live_ids(self) -> set[int]:
        return {int(self.ids[s]) for s in self.live_slots()}

    def count(self) -> int:
        return self.cbt.count()

    def slot_of(self, bid: int) -> int:
        for s in self.live_slots():
            if int(self.ids[s]) == bid:
                return int(s)
        raise KeyError(f"bisector id {bid} is not live")

    def depth_of_slot(self, slot: int) -> int:
        return bisector.depth_of(int(self.ids[slot]), self.rank)

    def neighbor_id_map(self) -> dict[int, tuple[int, int, int]]:
        """Live structure expressed over ids: id -> (next, prev, twin) ids.

        Slot placement is scheduler-dependent in the parallel engine, so
        equivalence is always judged on this map, never on raw slots.
        """
        out = {}
        for s in self.live_slots():
            def _id(p):
                return int(self.ids[p]) if p >= 0 else -1

            out[int(self.ids[s])] = (
                _id(int(self.nexts[s])),
                _id(int(self.prevs[s])),
                _id(int(self.twins[s])),
            )
        return out

    def decode_slot(self, slot: int) -> np.ndarray:
        return bisector.bisector_vertices(self.mesh, int(self.ids[slot]))

    def triangles(self) -> list[tuple[int, np.ndarray]]:
        """All live (id, decoded vertices) pairs, pool order."""
        return [
            (int(self.ids[s]), self.decode_slot(int(s))) for s in self.live_slots()
        ]

    def decode_live(self) -> tuple[np.ndarray, np.ndarray]:
        """(ids, (n,3,3) vertex array) for all live slots, batch-decoded."""
        slots = self.live_slots()
        ids = self.ids[slots]
        out = np.empty((len(slots), 3, 3), dtype=np.float64)
        mesh = self.mesh
        bisector.nb_decode_tris(
            ids, self.rank, mesh.next, mesh.vert, mesh.positions, out, 0, len(slots)
        )
        return ids, out

    def memory_bytes(self) -> int:
        """Footprint of the core pool/CBT/pointer-buffer arrays."""
        return (
            self.ids.nbytes
            + self.nexts.nbytes
            + self.prevs.nbytes
            + self.twins.nbytes
            + self.commands.nbytes
            + self.reserved.nbytes
            + self.cbt.nodes.nbytes
            + self.counter.nbytes
            + self.cache_live.nbytes
            + self.cache_free.nbytes
        )

    def clone(self) -> "TriangulationState":
        other = TriangulationState(self.mesh, self.depth)
        for name in ("ids", "nexts", "prevs", "twins", "commands",
                     "reserved", "counter", "cache_live", "cache_free"):
            getattr(other, name)[...] = getattr(self, name)
        other.cbt.nodes[...] = self.cbt.nodes
        return other


def initialize(mesh, depth: int) -> TriangulationState:
    """Seed the pool with one root bisector per halfedge.

    Roots occupy slots [0, H); their neighbor pointers are copied from
    the halfedge operator arrays, so slot indices coincide with halfedge
    indices at this point.
    """
    st = TriangulationState(mesh, depth)
    H = mesh.n_halfedges
    base = np.uint64(1 << st.rank)
    for h in range(H):
        st.ids[h] = base + np.uint64(h)
        st.nexts[h] = mesh.next[h]
        st.prevs[h] = mesh.prev[h]
        st.twins[h] = mesh.twin[h]
        st.cbt.set_bit(h, 1)
    st.cbt.sum_reduce()
    return st


# -- structural validation ---------------------------------------------

# A pointer from b to x is always answered by exactly one pointer from x
# back to b, but the answering operator rotates as refinement proceeds:
# the next neighbor answers via prev or twin, the prev neighbor via next
# or twin, and the twin neighbor via any operator.
_BACK_ROLES = {"next": ("prev", "twin"), "prev": ("next", "twin"),
               "twin": ("next", "prev", "twin")}


def pointer_violations(state: TriangulationState) -> list[str]:
    """Pointer-reciprocity and id-sanity violations over the live pool."""
    out = []
    live = set(int(s) for s in state.live_slots())
    arrays = {"next": state.nexts, "prev": state.prevs, "twin": state.twins}
    for s in live:
        bid = int(state.ids[s])
        if bid < (1 << state.rank):
            out.append(f"slot {s}: id {bid} below root range")
            continue
        d = bisector.depth_of(bid, state.rank)
        h = bisector.root_halfedge(bid, state.rank)
        if not 0 <= h < state.mesh.n_halfedges:
            out.append(f"slot {s}: id {bid} maps to invalid halfedge {h}")
        if d > state.max_depth:
            out.append(f"slot {s}: id {bid} exceeds depth limit {state.max_depth}")
        for role, arr in arrays.items():
            p = int(arr[s])
            if p == -1:
                continue
            if not 0 <= p < state.capacity or p not in live:
                out.append(f"slot {s} ({role}): dangling pointer to slot {p}")
                continue
            back = [r for r in _BACK_ROLES[role] if int(arrays[r][p]) == s]
            if not back:
                out.append(
                    f"slot {s} ({role}) -> {p}: no reciprocal pointer "
                    f"(neighbor id {int(state.ids[p])})"
                )
            nd = bisector.depth_of(int(state.ids[p]), state.rank)
            if abs(nd - d) > 1:
                out.append(
                    f"slot {s} ({role}) -> {p}: depth gap {d} vs {nd}"
                )
    return out


_QSCALE = 1e9


def _qpoint(p) -> tuple[int, int, int]:
    return (round(p[0] * _QSCALE), round(p[1] * _QSCALE), round(p[2] * _QSCALE))


def _boundary_segments(mesh) -> list[tuple[np.ndarray, np.ndarray]]:
    segs = []
    for h in np.flatnonzero(mesh.twin == -1):
        a = mesh.positions[mesh.vert[h]]
        b = mesh.positions[mesh.vert[mesh.next[h]]]
        segs.append((a, b))
    return segs


def _on_segment(p, a, b) -> bool:
    u = b - a
    w = p - a
    lu = float(np.linalg.norm(u))
    cr = float(np.linalg.norm(np.cross(u, w)))
    if cr > 1e-9 * lu * max(lu, float(np.linalg.norm(w))) + 1e-12:
        return False
    t = float(u @ w) / (lu * lu)
    return -1e-9 <= t <= 1 + 1e-9


def conformity_violations(state: TriangulationState) -> list[str]:
    """T-junction check by edge pairing over the decoded triangulation.

    Every edge, keyed by its quantized endpoint pair, must be shared by
    exactly two live triangles; edges owned by a single triangle must
    lie on a boundary segment of the input mesh.
    """
    ids, tris = state.decode_live()
    edges: dict[tuple, list[int]] = {}
    for k in range(len(ids)):
        t = tris[k]
        for i, j in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((_qpoint(t[i]), _qpoint(t[j]))))
            edges.setdefault(key, []).append(int(ids[k]))
    out = []
    segs = _boundary_segments(state.mesh)
    for key, owners in edges.items():
        if len(owners) == 2:
            continue
        if len(owners) > 2:
            out.append(f"edge {key} shared by {len(owners)} triangles {owners}")
            continue
        a = np.array(key[0], dtype=np.float64) / _QSCALE
        b = np.array(key[1], dtype=np.float64) / _QSCALE
        if not any(
            _on_segment(a, s0, s1) and _on_segment(b, s0, s1) for s0, s1 in segs
        ):
            out.append(
                f"interior edge {key} owned by single triangle {owners[0]} "
                "(T-junction)"
            )
    return out


# Expected vertex correspondence across each adjacency role pair:
# (my_role, neighbor_role) -> [(my_vertex, neighbor_vertex), ...].
# These pin down the orientation conventions that the parallel pipeline's
# piece-resolution tables rely on.
_ADJ_CORRESPONDENCE = {
    ("twin", "twin"): [(0, 1), (1, 0)],
    ("next", "prev"): [(1, 0), (2, 2)],
    ("prev", "next"): [(2, 2), (0, 1)],
    ("next", "twin"): [(1, 0), (2, 1)],
    ("prev", "twin"): [(2, 0), (0, 1)],
    ("twin", "next"): [(0, 1), (1, 2)],
    ("twin", "prev"): [(0, 2), (1, 0)],
}


def adjacency_geometry_violations(state: TriangulationState) -> list[str]:
    """Check decoded shared-edge spans and orientation across pointers.

    Each pointer adjacency must connect geometrically coincident edges
    with the vertex correspondence of _ADJ_CORRESPONDENCE.  Used by the
    test suite to pin the pipeline's composition tables.
    """
    out = []
    live = [int(s) for s in state.live_slots()]
    decoded = {s: state.decode_slot(s) for s in live}
    arrays = {"next": state.nexts, "prev": state.prevs, "twin": state.twins}
    for s in live:
        for role, arr in arrays.items():
            p = int(arr[s])
            if p == -1:
                continue
            back = [r for r in _BACK_ROLES[role] if int(arrays[r][p]) == s]
            if len(back) != 1:
                out.append(f"slot {s} ({role}) -> {p}: back roles {back}")
                continue
            pair = (role, back[0])
            corr = _ADJ_CORRESPONDENCE.get(pair)
            if corr is None:
                out.append(f"slot {s} ({role}) -> {p}: illegal role pair {pair}")
                continue
            for mine, theirs in corr:
                if _qpoint(decoded[s][mine]) != _qpoint(decoded[p][theirs]):
                    out.append(
                        f"slot {s} ({role}) -> {p}: vertex {mine} != "
                        f"neighbor vertex {theirs} under role pair {pair}"
                    )
    return out
