"""Single-threaded reference engine: conforming refinement and
conservative decimation with literal pointer maintenance.

This is the correctness oracle for the parallel pipeline, so it favors
assertion density over speed: one split or merge at a time, eager
sum-reduction, and every neighbor rewrite spelled out.
"""

from __future__ import annotations

import numpy as np

from . import bisector
from .state import CapacityError, TriangulationState, initialize  # noqa: F401

__all__ = [
    "initialize",
    "refine",
    "decimate",
    "triangles",
    "merge_configuration",
    "apply_verdicts",
    "CapacityError",
]


def _assert_live(state, slot):
    assert state.cbt.get_bit(slot) == 1, f"slot {slot} is not live"


def _alloc(state, n):
    """Claim n free slots in ascending slot order (deterministic)."""
    free = np.flatnonzero(state.cbt.leaves == 0)
    if len(free) < n:
        raise CapacityError(f"need {n} free slots, have {len(free)}")
    slots = [int(x) for x in free[:n]]
    for s in slots:
        state.cbt.set_bit(s, 1)
    return slots


def _free(state, *slots):
    for s in slots:
        state.cbt.set_bit(s, 0)


def _redirect(state, target, old_slot, new_slot, allowed):
    """Rewrite target's operator that references old_slot to new_slot.

    `allowed` lists the operators that may hold the back reference; the
    next neighbor answers via prev-or-twin, the prev neighbor via
    next-or-twin (the pointer-refinement branch structure).
    """
    if target == -1:
        return
    arrays = {"next": state.nexts, "prev": state.prevs, "twin": state.twins}
    for role in allowed:
        if int(arrays[role][target]) == old_slot:
            arrays[role][target] = new_slot
            return
    raise AssertionError(
        f"slot {target} holds no {allowed} reference back to slot {old_slot}"
    )


def _split_pair(state, s, k):
    """Split the equal-depth pair (s, k = twin(s)) into four children."""
    j = int(state.ids[s])
    kj = int(state.ids[k])
    np_, pp_ = int(state.nexts[s]), int(state.prevs[s])
    nk_, pk_ = int(state.nexts[k]), int(state.prevs[k])
    assert np_ != k and pp_ != k and nk_ != s and pk_ != s, (
        "pair split with doubled adjacency is not supported"
    )
    a0, a1, b0, b1 = _alloc(state, 4)

    # children of s (ids 2j, 2j+1) and of k (ids 2k, 2k+1)
    state.ids[a0] = 2 * j
    state.nexts[a0] = a1
    state.prevs[a0] = b1
    state.twins[a0] = pp_
    state.ids[a1] = 2 * j + 1
    state.nexts[a1] = b0
    state.prevs[a1] = a0
    state.twins[a1] = np_
    state.ids[b0] = 2 * kj
    state.nexts[b0] = b1
    state.prevs[b0] = a1
    state.twins[b0] = pk_
    state.ids[b1] = 2 * kj + 1
    state.nexts[b1] = a0
    state.prevs[b1] = b0
    state.twins[b1] = nk_

    # surrounding pointer rewrites for both consumed parents
    _redirect(state, np_, s, a1, ("prev", "twin"))
    _redirect(state, pp_, s, a0, ("next", "twin"))
    _redirect(state, nk_, k, b1, ("prev", "twin"))
    _redirect(state, pk_, k, b0, ("next", "twin"))

    _free(state, s, k)


def _split_boundary(state, s):
    """Split a bisector whose bisection edge lies on the mesh boundary."""
    j = int(state.ids[s])
    np_, pp_ = int(state.nexts[s]), int(state.prevs[s])
    a0, a1 = _alloc(state, 2)
    state.ids[a0] = 2 * j
    state.nexts[a0] = a1
    state.prevs[a0] = -1
    state.twins[a0] = pp_
    state.ids[a1] = 2 * j + 1
    state.nexts[a1] = -1
    state.prevs[a1] = a0
    state.twins[a1] = np_
    _redirect(state, np_, s, a1, ("prev", "twin"))
    _redirect(state, pp_, s, a0, ("next", "twin"))
    _free(state, s)


def _chain(state, slot):
    """Compatibility chain from slot: the refinement frames, deepest first."""
    chain = [slot]
    cur = slot
    guard = 0
    while True:
        t = int(state.twins[cur])
        if t == -1 or int(state.twins[t]) == cur:
            break
        d_cur = state.depth_of_slot(cur)
        d_t = state.depth_of_slot(t)
        assert d_t == d_cur - 1, (
            f"twin depth must decrease along the chain: {d_cur} -> {d_t}"
        )
        chain.append(t)
        cur = t
        guard += 1
        assert guard <= state.max_depth + 1, "compatibility chain did not terminate"
    return chain


def _chain_capacity(state, chain):
    """Peak free slots required to execute the chain atomically."""
    need = 0
    peak = 0
    for i, slot in enumerate(reversed(chain)):
        boundary = i == 0 and int(state.twins[slot]) == -1
        alloc, freed = (2, 1) if boundary else (4, 2)
        peak = max(peak, need + alloc)
        need += alloc - freed
    return peak


def refine(state: TriangulationState, slot: int) -> None:
    """Adaptive refinement: split slot, propagating through its chain.

    The chain is walked first to pre-check capacity so the whole
    operation is atomic: either every split lands or none does.
    """
    _assert_live(state, slot)
    if state.depth_of_slot(slot) >= state.max_depth:
        raise OverflowError("bisector already at the subdivision depth limit")
    chain = _chain(state, slot)
    free = state.capacity - state.count()
    needed = _chain_capacity(state, chain)
    if needed > free:
        raise CapacityError(f"refine needs {needed} free slots, have {free}")
    _refine_rec(state, slot)
    state.cbt.sum_reduce()


def _refine_rec(state, slot):
    t = int(state.twins[slot])
    if t == -1:
        _split_boundary(state, slot)
        return
    if int(state.twins[t]) != slot:
        _refine_rec(state, t)
        t = int(state.twins[slot])  # rewritten to the fresh equal-depth child
        assert int(state.twins[t]) == slot, "chain did not equalize the pair"
    _split_pair(state, slot, t)


def merge_configuration(state: TriangulationState, slot: int):
    """Decimation configuration of slot per the conservative rules.

    Returns ('boundary', [j1, j2]) or ('quad', [j1, j2, j3, j4]) slot
    lists, or None when the bisector is not mergeable.  The parity bit
    of the index selects which of prev/next is the sibling.
    """
    j1 = int(state.ids[slot])
    if bisector.depth_of(j1, state.rank) < 1:
        return None  # roots never merge
    bit = j1 & 1
    j2 = int(state.prevs[slot]) if bit else int(state.nexts[slot])
    j3 = int(state.nexts[slot]) if bit else int(state.prevs[slot])
    if j2 == -1 or int(state.ids[j2]) >> 1 != j1 >> 1:
        return None
    if j3 == -1:
        return ("boundary", [slot, j2])
    id3 = int(state.ids[j3])
    if id3.bit_length() != j1.bit_length():
        return None  # different subdivision depth
    j4 = int(state.nexts[j3]) if bit else int(state.prevs[j3])
    if j4 == -1 or int(state.ids[j4]) >> 1 != id3 >> 1:
        return None
    return ("quad", [slot, j2, j3, j4])


def _pair_even_odd(state, a, b):
    return (a, b) if int(state.ids[a]) % 2 == 0 else (b, a)


def _merge_pair_into(state, e, o, parent_slot, twin_slot):
    """Collapse sibling pair (even e, odd o) into parent_slot."""
    pid = int(state.ids[e]) >> 1
    n_ext = int(state.twins[o])
    q_ext = int(state.twins[e])
    state.ids[parent_slot] = pid
    state.nexts[parent_slot] = n_ext
    state.prevs[parent_slot] = q_ext
    state.twins[parent_slot] = twin_slot
    _redirect(state, n_ext, o, parent_slot, ("prev", "twin"))
    _redirect(state, q_ext, e, parent_slot, ("next", "twin"))


def decimate(state: TriangulationState, slot: int) -> None:
    """Conservative decimation; no-op when the configuration is invalid."""
    _assert_live(state, slot)
    config = merge_configuration(state, slot)
    if config is None:
        return
    kind, members = config
    if kind == "boundary":
        e, o = _pair_even_odd(state, *members)
        (p,) = _alloc(state, 1)
        _merge_pair_into(state, e, o, p, -1)
        _free(state, e, o)
    else:
        e1, o1 = _pair_even_odd(state, members[0], members[1])
        e2, o2 = _pair_even_odd(state, members[2], members[3])
        # parent of the pair holding the smallest index gets the first slot
        if min(int(state.ids[e2]), int(state.ids[o2])) < min(
            int(state.ids[e1]), int(state.ids[o1])
        ):
            (e1, o1), (e2, o2) = (e2, o2), (e1, o1)
        pa, pb = _alloc(state, 2)
        _merge_pair_into(state, e1, o1, pa, pb)
        _merge_pair_into(state, e2, o2, pb, pa)
        _free(state, e1, o1, e2, o2)
    state.cbt.sum_reduce()


def triangles(state: TriangulationState):
    """Decode every live bisector; one (id, vertices) entry per slot."""
    return state.triangles()


def apply_verdicts(state: TriangulationState, verdicts: dict[int, int]) -> None:
    """Reference semantics of one incremental update.

    `verdicts` maps live bisector ids to 0 (keep), 1 (split), 2 (merge).
    Splits are applied first in ascending id order (split order is
    confluent); then each merge fires only if its whole configuration
    survived the splits and unanimously requested a merge.
    """
    def slots_by_id():
        return {int(state.ids[s]): int(s) for s in state.live_slots()}

    for bid in sorted(b for b, v in verdicts.items() if v == 1):
        lookup = slots_by_id()
        if bid in lookup and state.depth_of_slot(lookup[bid]) < state.max_depth:
            refine(state, lookup[bid])

    merge_ids = {b for b, v in verdicts.items() if v == 2}
    for bid in sorted(merge_ids):
        lookup = slots_by_id()
        if bid not in lookup:
            continue  # consumed by a split chain (split wins over merge)
        config = merge_configuration(state, lookup[bid])
        if config is None:
            continue
        if all(int(state.ids[m]) in merge_ids for m in config[1]):
            decimate(state, lookup[bid])
