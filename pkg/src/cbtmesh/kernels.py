"""Compiled stage kernels for the nine-stage incremental update.

Every kernel processes a contiguous task range [start, end) and is safe
to run from multiple Python threads: the GIL is released, plain writes
are slot-disjoint by construction, and the only shared read-modify-write
operations go through the two atomic facilities (counter add/subtract,
command-word OR).  Stage barriers are provided by the caller.

The split composition tables below extend the pairwise refinement rules
to the two- and three-edge splits that arise when a bisector sits on the
compatibility chain of one or two foreign splits.  Child records are laid
out in the reserved-slot array in ascending child-id order:

    mask 0b001 (bisection edge only):        [2j, 2j+1]
    mask 0b011 (bisection + next edge):      [2j, 4j+2, 4j+3]
    mask 0b101 (bisection + prev edge):      [4j, 4j+1, 2j+1]
    mask 0b111 (all three edges):            [4j, 4j+1, 4j+2, 4j+3]
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._atomics import atomic_add, atomic_or, atomic_sub
from .bisector import nb_depth_of
from .cbt import nb_one_to_bit_id, nb_zero_to_bit_id
from .state import MERGE_OWNER, MERGE_QUAD, MERGE_REQ, SPLIT_MASK, SPLIT_T

U1 = np.uint64(1)
U2 = np.uint64(2)

U32_T = np.uint32(SPLIT_T)
U32_N = np.uint32(2)
U32_P = np.uint32(4)
U32_MERGE = np.uint32(MERGE_REQ)
U32_QUAD = np.uint32(MERGE_QUAD)
U32_OWNER = np.uint32(MERGE_OWNER)

# Edge roles of a bisector (the side a pointer crosses) and subsegment
# selectors in the owning bisector's vertex frame.
EDGE_TWIN = 0
EDGE_NEXT = 1
EDGE_PREV = 2
WHOLE = 0
V0H = 1
V1H = 2
V2H = 3

# PIECE_IDX[split_mask, edge, half] -> reserved-slot index of the child
# owning that (sub)segment of the split bisector's edge, or -1.
PIECE_IDX = np.full((8, 3, 4), -1, dtype=np.int8)
PIECE_IDX[1, EDGE_TWIN, V0H] = 0
PIECE_IDX[1, EDGE_TWIN, V1H] = 1
PIECE_IDX[1, EDGE_NEXT, WHOLE] = 1
PIECE_IDX[1, EDGE_PREV, WHOLE] = 0
PIECE_IDX[3, EDGE_TWIN, V0H] = 0
PIECE_IDX[3, EDGE_TWIN, V1H] = 2
PIECE_IDX[3, EDGE_NEXT, V1H] = 2
PIECE_IDX[3, EDGE_NEXT, V2H] = 1
PIECE_IDX[3, EDGE_PREV, WHOLE] = 0
PIECE_IDX[5, EDGE_TWIN, V0H] = 0
PIECE_IDX[5, EDGE_TWIN, V1H] = 2
PIECE_IDX[5, EDGE_NEXT, WHOLE] = 2
PIECE_IDX[5, EDGE_PREV, V0H] = 0
PIECE_IDX[5, EDGE_PREV, V2H] = 1
PIECE_IDX[7, EDGE_TWIN, V0H] = 0
PIECE_IDX[7, EDGE_TWIN, V1H] = 3
PIECE_IDX[7, EDGE_NEXT, V1H] = 3
PIECE_IDX[7, EDGE_NEXT, V2H] = 2
PIECE_IDX[7, EDGE_PREV, V0H] = 0
PIECE_IDX[7, EDGE_PREV, V2H] = 1


@njit(nogil=True, cache=True)
def _correspond(my_side, my_half, t_role):
    """Map my edge (sub)segment into the neighbor's edge frame.

    Returns (neighbor_edge, neighbor_half).  The vertex correspondence
    per role pair is fixed by the refinement rules: e.g. across a
    (twin, twin) adjacency my v0 coincides with the neighbor's v1.
    """
    if my_side == EDGE_TWIN:
        if t_role == EDGE_TWIN:
            return EDGE_TWIN, (V0H if my_half == V1H else V1H)
        if t_role == EDGE_PREV:
            return EDGE_PREV, (V2H if my_half == V0H else V0H)
        return EDGE_NEXT, (V1H if my_half == V0H else V2H)
    if my_side == EDGE_NEXT:
        if t_role == EDGE_PREV:
            if my_half == WHOLE:
                return EDGE_PREV, WHOLE
            return EDGE_PREV, (V0H if my_half == V1H else V2H)
        return EDGE_TWIN, (V0H if my_half == V1H else V1H)
    # my_side == EDGE_PREV
    if t_role == EDGE_NEXT:
        if my_half == WHOLE:
            return EDGE_NEXT, WHOLE
        return EDGE_NEXT, (V1H if my_half == V0H else V2H)
    return EDGE_TWIN, (V1H if my_half == V0H else V0H)


@njit(nogil=True, cache=True)
def _nb_bitlen(x):
    n = 0
    while x:
        x >>= U1
        n += 1
    return n


@njit(nogil=True, cache=True)
def _merge_config(s, ids, nexts, prevs, rank):
    """Conservative decimation configuration of slot s.

    Returns (kind, sib, oth, j4) with kind 0 = none, 1 = boundary pair,
    2 = quad cycle.  Roots never merge.
    """
    j1 = ids[s]
    if nb_depth_of(j1, rank) < 1:
        return 0, -1, -1, -1
    odd = (j1 & U1) != 0
    sib = prevs[s] if odd else nexts[s]
    oth = nexts[s] if odd else prevs[s]
    if sib == -1 or (ids[sib] >> U1) != (j1 >> U1):
        return 0, -1, -1, -1
    if oth == -1:
        return 1, sib, -1, -1
    if _nb_bitlen(ids[oth]) != _nb_bitlen(j1):
        return 0, -1, -1, -1
    j4 = nexts[oth] if odd else prevs[oth]
    if j4 == -1 or (ids[j4] >> U1) != (ids[oth] >> U1):
        return 0, -1, -1, -1
    return 2, sib, oth, j4


@njit(nogil=True, cache=True)
def _merge_agreed(s, ids, nexts, prevs, commands, rank):
    """True when every participant's command exclusively requests a merge."""
    kind, sib, oth, j4 = _merge_config(s, ids, nexts, prevs, rank)
    if kind == 0:
        return False
    c0 = commands[s]
    c1 = commands[sib]
    if (c0 & np.uint32(SPLIT_MASK)) or not (c0 & U32_MERGE):
        return False
    if (c1 & np.uint32(SPLIT_MASK)) or not (c1 & U32_MERGE):
        return False
    if kind == 2:
        c2 = commands[oth]
        c3 = commands[j4]
        if (c2 & np.uint32(SPLIT_MASK)) or not (c2 & U32_MERGE):
            return False
        if (c3 & np.uint32(SPLIT_MASK)) or not (c3 & U32_MERGE):
            return False
    return True


@njit(nogil=True, cache=True)
def _merge_parent_slot(m, ids, nexts, prevs, reserved, rank):
    """Reserved slot of the parent that replaces merging member m."""
    kind, sib, oth, j4 = _merge_config(m, ids, nexts, prevs, rank)
    owner = m
    best = ids[m]
    if ids[sib] < best:
        best = ids[sib]
        owner = sib
    if kind == 2:
        if ids[oth] < best:
            best = ids[oth]
            owner = oth
        if ids[j4] < best:
            best = ids[j4]
            owner = j4
    if kind == 1:
        return reserved[owner, 0]
    # reserved[owner, 0] holds the parent of the owner's own sibling pair
    if (ids[m] >> U1) == (ids[owner] >> U1):
        return reserved[owner, 0]
    return reserved[owner, 1]


@njit(nogil=True, cache=True)
def _survives(x, ids, nexts, prevs, commands, rank):
    """True when slot x keeps its record through this update."""
    cmd = commands[x]
    if cmd & np.uint32(SPLIT_MASK):
        return False
    if (cmd & U32_MERGE) and _merge_agreed(x, ids, nexts, prevs, commands, rank):
        return False
    return True


@njit(nogil=True, cache=True)
def _piece_of(target, my_side, my_half, backref, ids, nexts, prevs, twins,
              commands, reserved, rank):
    """Post-update slot of the neighbor piece across one of my edges.

    `target` is my pre-update neighbor across `my_side`, which referenced
    my old slot `backref`.  Resolves through the neighbor's own split or
    agreed merge so fresh records can be written fully in one pass.
    """
    if target == -1:
        return np.int32(-1)
    cmd = commands[target]
    smask = cmd & np.uint32(SPLIT_MASK)
    if smask:
        # locate the operator the neighbor used to reference me; the
        # answering operator is constrained per side (never next->next
        # or prev->prev)
        t_role = -1
        if my_side == EDGE_TWIN:
            if twins[target] == backref:
                t_role = EDGE_TWIN
            elif nexts[target] == backref:
                t_role = EDGE_NEXT
            elif prevs[target] == backref:
                t_role = EDGE_PREV
        elif my_side == EDGE_NEXT:
            if prevs[target] == backref:
                t_role = EDGE_PREV
            elif twins[target] == backref:
                t_role = EDGE_TWIN
        else:
            if nexts[target] == backref:
                t_role = EDGE_NEXT
            elif twins[target] == backref:
                t_role = EDGE_TWIN
        if t_role < 0:
            return np.int32(-2)  # poison: reciprocity was broken
        t_edge, t_half = _correspond(my_side, my_half, t_role)
        idx = PIECE_IDX[smask, t_edge, t_half]
        if idx < 0:
            return np.int32(-2)  # poison: edge split without counterpart
        return reserved[target, idx]
    if (cmd & U32_MERGE) and _merge_agreed(target, ids, nexts, prevs, commands, rank):
        return _merge_parent_slot(target, ids, nexts, prevs, reserved, rank)
    return np.int32(target)


# -- stage kernels ------------------------------------------------------


@njit(nogil=True, cache=True)
def k_cache_pointers(nodes, capacity, count, free_ct, cache_live, cache_free,
                     start, end):
    """Stage 2: ranked binary searches into the live and free caches."""
    for i in range(start, end):
        if i < count:
            cache_live[i] = nb_one_to_bit_id(nodes, capacity, i)
        if i < free_ct:
            cache_free[i] = nb_zero_to_bit_id(nodes, capacity, i)


@njit(nogil=True, cache=True)
def k_reset_commands(commands, cache_live, start, end):
    """Stage 3: zero every live bisector's command word."""
    for i in range(start, end):
        commands[cache_live[i]] = np.uint32(0)


@njit(nogil=True, cache=True)
def k_generate_commands(verdicts, cache_live, ids, nexts, prevs, twins,
                        commands, counter, free_ct, rank, depth_limit,
                        stats, row, start, end):
    """Stage 4: admission control plus command scattering.

    Splits reserve 3d + 4 pool slots up front (the worst case for their
    whole compatibility chain) and roll the reservation back on
    overflow; accepted splits OR edge-split bits along the chain.
    Merges verify the decimation configuration, reserve two slots, and
    tag themselves with the configuration and min-index-owner flags.
    """
    oom_splits = 0
    oom_merges = 0
    for i in range(start, end):
        s = np.int64(cache_live[i])
        v = verdicts[i]
        if v == 1:
            d = nb_depth_of(ids[s], rank)
            if d >= depth_limit:
                continue
            need = np.int64(3 * d + 4)
            old = atomic_add(counter, 0, need)
            if old + need > free_ct:
                atomic_sub(counter, 0, need)
                oom_splits += 1
                continue
            cur = s
            hops = 0
            while True:
                prev_cmd = atomic_or(commands, cur, U32_T)
                if prev_cmd & U32_T:
                    break  # an earlier walker owns the rest of this chain
                t = np.int64(twins[cur])
                if t == -1:
                    break
                if twins[t] == cur:
                    atomic_or(commands, t, U32_T)
                    break
                if nexts[t] == cur:
                    atomic_or(commands, t, U32_N)
                elif prevs[t] == cur:
                    atomic_or(commands, t, U32_P)
                else:
                    break  # broken reciprocity; validators report it
                cur = t
                hops += 1
                if hops > 70:
                    break  # chains are depth-bounded; guard anyway
        elif v == 2:
            kind, sib, oth, j4 = _merge_config(s, ids, nexts, prevs, rank)
            if kind == 0:
                continue
            old = atomic_add(counter, 0, np.int64(2))
            if old + 2 > free_ct:
                atomic_sub(counter, 0, np.int64(2))
                oom_merges += 1
                continue
            bits = U32_MERGE
            if kind == 2:
                bits |= U32_QUAD
            lowest = ids[s]
            if ids[sib] < lowest:
                lowest = ids[sib]
            if kind == 2:
                if ids[oth] < lowest:
                    lowest = ids[oth]
                if ids[j4] < lowest:
                    lowest = ids[j4]
            if lowest == ids[s]:
                bits |= U32_OWNER
            atomic_or(commands, s, bits)
    stats[row, 0] += oom_splits
    stats[row, 1] += oom_merges


@njit(nogil=True, cache=True)
def k_reserve_blocks(cache_live, cache_free, ids, nexts, prevs, twins,
                     commands, counter, reserved, rank, start, end):
    """Stage 5: claim cache entries for the allocations each bisector makes.

    Split bits win over a merge request.  Merge allocations happen only
    on the min-index owner and only when every participant's command
    exclusively requests the merge.
    """
    for i in range(start, end):
        s = np.int64(cache_live[i])
        cmd = commands[s]
        smask = cmd & np.uint32(SPLIT_MASK)
        if smask:
            n_alloc = np.int64(2)
            if smask & U32_N:
                n_alloc += 1
            if smask & U32_P:
                n_alloc += 1
            old = atomic_sub(counter, 0, n_alloc)
            base = old - n_alloc
            for k in range(n_alloc):
                reserved[s, k] = cache_free[base + k]
        elif cmd & U32_MERGE:
            if not (cmd & U32_OWNER):
                continue
            if not _merge_agreed(s, ids, nexts, prevs, commands, rank):
                continue
            n_alloc = np.int64(2) if (cmd & U32_QUAD) else np.int64(1)
            old = atomic_sub(counter, 0, n_alloc)
            base = old - n_alloc
            for k in range(n_alloc):
                reserved[s, k] = cache_free[base + k]


@njit(nogil=True, cache=True)
def _fill_split(s, ids, nexts, prevs, twins, commands, reserved, rank):
    j = ids[s]
    smask = commands[s] & np.uint32(SPLIT_MASK)
    np_ = np.int64(nexts[s])
    pp_ = np.int64(prevs[s])
    tp_ = np.int64(twins[s])
    r0 = np.int64(reserved[s, 0])
    r1 = np.int64(reserved[s, 1])
    c2j = j << U1
    if smask == 1:
        ids[r0] = c2j
        nexts[r0] = r1
        prevs[r0] = _piece_of(tp_, EDGE_TWIN, V0H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        twins[r0] = _piece_of(pp_, EDGE_PREV, WHOLE, s, ids, nexts, prevs,
                              twins, commands, reserved, rank)
        ids[r1] = c2j + U1
        prevs[r1] = r0
        nexts[r1] = _piece_of(tp_, EDGE_TWIN, V1H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        twins[r1] = _piece_of(np_, EDGE_NEXT, WHOLE, s, ids, nexts, prevs,
                              twins, commands, reserved, rank)
    elif smask == 3:
        r2 = np.int64(reserved[s, 2])
        c4j = j << U2
        ids[r0] = c2j
        nexts[r0] = r1
        prevs[r0] = _piece_of(tp_, EDGE_TWIN, V0H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        twins[r0] = _piece_of(pp_, EDGE_PREV, WHOLE, s, ids, nexts, prevs,
                              twins, commands, reserved, rank)
        ids[r1] = c4j + U2
        twins[r1] = r0
        nexts[r1] = r2
        prevs[r1] = _piece_of(np_, EDGE_NEXT, V2H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        ids[r2] = c4j + U2 + U1
        prevs[r2] = r1
        twins[r2] = _piece_of(tp_, EDGE_TWIN, V1H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        nexts[r2] = _piece_of(np_, EDGE_NEXT, V1H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
    elif smask == 5:
        r2 = np.int64(reserved[s, 2])
        c4j = j << U2
        ids[r0] = c4j
        twins[r0] = _piece_of(tp_, EDGE_TWIN, V0H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        nexts[r0] = r1
        prevs[r0] = _piece_of(pp_, EDGE_PREV, V0H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        ids[r1] = c4j + U1
        twins[r1] = r2
        prevs[r1] = r0
        nexts[r1] = _piece_of(pp_, EDGE_PREV, V2H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        ids[r2] = c2j + U1
        prevs[r2] = r1
        nexts[r2] = _piece_of(tp_, EDGE_TWIN, V1H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        twins[r2] = _piece_of(np_, EDGE_NEXT, WHOLE, s, ids, nexts, prevs,
                              twins, commands, reserved, rank)
    else:
        r2 = np.int64(reserved[s, 2])
        r3 = np.int64(reserved[s, 3])
        c4j = j << U2
        ids[r0] = c4j
        twins[r0] = _piece_of(tp_, EDGE_TWIN, V0H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        nexts[r0] = r1
        prevs[r0] = _piece_of(pp_, EDGE_PREV, V0H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        ids[r1] = c4j + U1
        twins[r1] = r2
        prevs[r1] = r0
        nexts[r1] = _piece_of(pp_, EDGE_PREV, V2H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        ids[r2] = c4j + U2
        twins[r2] = r1
        nexts[r2] = r3
        prevs[r2] = _piece_of(np_, EDGE_NEXT, V2H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        ids[r3] = c4j + U2 + U1
        prevs[r3] = r2
        twins[r3] = _piece_of(tp_, EDGE_TWIN, V1H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)
        nexts[r3] = _piece_of(np_, EDGE_NEXT, V1H, s, ids, nexts, prevs, twins,
                              commands, reserved, rank)


@njit(nogil=True, cache=True)
def _fill_merge(s, ids, nexts, prevs, twins, commands, reserved, rank):
    kind, sib, oth, j4 = _merge_config(s, ids, nexts, prevs, rank)
    if (ids[s] & U1) == 0:
        e1, o1 = s, np.int64(sib)
    else:
        e1, o1 = np.int64(sib), s
    p1 = np.int64(reserved[s, 0])
    ids[p1] = ids[e1] >> U1
    nexts[p1] = _piece_of(np.int64(twins[o1]), EDGE_NEXT, WHOLE, o1, ids,
                          nexts, prevs, twins, commands, reserved, rank)
    prevs[p1] = _piece_of(np.int64(twins[e1]), EDGE_PREV, WHOLE, e1, ids,
                          nexts, prevs, twins, commands, reserved, rank)
    if kind == 2:
        p2 = np.int64(reserved[s, 1])
        twins[p1] = p2
        if (ids[oth] & U1) == 0:
            e2, o2 = np.int64(oth), np.int64(j4)
        else:
            e2, o2 = np.int64(j4), np.int64(oth)
        ids[p2] = ids[e2] >> U1
        nexts[p2] = _piece_of(np.int64(twins[o2]), EDGE_NEXT, WHOLE, o2, ids,
                              nexts, prevs, twins, commands, reserved, rank)
        prevs[p2] = _piece_of(np.int64(twins[e2]), EDGE_PREV, WHOLE, e2, ids,
                              nexts, prevs, twins, commands, reserved, rank)
        twins[p2] = p1
    else:
        twins[p1] = np.int32(-1)


@njit(nogil=True, cache=True)
def k_fill_new_blocks(cache_live, ids, nexts, prevs, twins, commands,
                      reserved, rank, start, end):
    """Stage 6: write ids and fully resolved pointers into reserved slots.

    External pointers resolve through neighbor commands and reservations
    (stable since the stage-5 barrier), so fresh records are final here;
    only surviving neighbors' back references remain for stage 7.
    """
    for i in range(start, end):
        s = np.int64(cache_live[i])
        cmd = commands[s]
        if cmd & np.uint32(SPLIT_MASK):
            _fill_split(s, ids, nexts, prevs, twins, commands, reserved, rank)
        elif (cmd & U32_MERGE) and (cmd & U32_OWNER):
            if _merge_agreed(s, ids, nexts, prevs, commands, rank):
                _fill_merge(s, ids, nexts, prevs, twins, commands, reserved,
                            rank)


@njit(nogil=True, cache=True)
def _redirect_to(target, old_slot, new_slot, first, nexts, prevs, twins):
    """Rewrite target's back reference to old_slot.

    The next neighbor answers via prev-or-twin, the prev neighbor via
    next-or-twin; `first` selects which non-twin operator to try.
    """
    if first == EDGE_PREV:
        if prevs[target] == old_slot:
            prevs[target] = new_slot
            return
    else:
        if nexts[target] == old_slot:
            nexts[target] = new_slot
            return
    if twins[target] == old_slot:
        twins[target] = new_slot


@njit(nogil=True, cache=True)
def k_update_neighbors(cache_live, ids, nexts, prevs, twins, commands,
                       reserved, rank, start, end):
    """Stage 7: scatter new piece slots into surviving neighbors.

    Only neighbors that keep their record need rewriting; consumed
    neighbors already resolved everything in stage 6.  A split's
    bisection-edge neighbor always carries a command itself, so only the
    next-side and prev-side pieces (and merge parents) scatter.
    """
    for i in range(start, end):
        s = np.int64(cache_live[i])
        cmd = commands[s]
        smask = cmd & np.uint32(SPLIT_MASK)
        if smask:
            if not (smask & U32_N):
                tgt = np.int64(nexts[s])
                if tgt != -1 and _survives(tgt, ids, nexts, prevs, commands,
                                           rank):
                    piece = reserved[s, 1] if smask == 1 else reserved[s, 2]
                    _redirect_to(tgt, s, np.int64(piece), EDGE_PREV,
                                 nexts, prevs, twins)
            if not (smask & U32_P):
                tgt = np.int64(prevs[s])
                if tgt != -1 and _survives(tgt, ids, nexts, prevs, commands,
                                           rank):
                    piece = reserved[s, 0]
                    _redirect_to(tgt, s, np.int64(piece), EDGE_NEXT,
                                 nexts, prevs, twins)
        elif (cmd & U32_MERGE) and (cmd & U32_OWNER):
            if not _merge_agreed(s, ids, nexts, prevs, commands, rank):
                continue
            kind, sib, oth, j4 = _merge_config(s, ids, nexts, prevs, rank)
            if (ids[s] & U1) == 0:
                e1, o1 = s, np.int64(sib)
            else:
                e1, o1 = np.int64(sib), s
            p1 = np.int64(reserved[s, 0])
            n_ext = np.int64(twins[o1])
            if n_ext != -1 and _survives(n_ext, ids, nexts, prevs, commands,
                                         rank):
                _redirect_to(n_ext, o1, p1, EDGE_PREV, nexts, prevs, twins)
            q_ext = np.int64(twins[e1])
            if q_ext != -1 and _survives(q_ext, ids, nexts, prevs, commands,
                                         rank):
                _redirect_to(q_ext, e1, p1, EDGE_NEXT, nexts, prevs, twins)
            if kind == 2:
                if (ids[oth] & U1) == 0:
                    e2, o2 = np.int64(oth), np.int64(j4)
                else:
                    e2, o2 = np.int64(j4), np.int64(oth)
                p2 = np.int64(reserved[s, 1])
                n_ext = np.int64(twins[o2])
                if n_ext != -1 and _survives(n_ext, ids, nexts, prevs,
                                             commands, rank):
                    _redirect_to(n_ext, o2, p2, EDGE_PREV, nexts, prevs,
                                 twins)
                q_ext = np.int64(twins[e2])
                if q_ext != -1 and _survives(q_ext, ids, nexts, prevs,
                                             commands, rank):
                    _redirect_to(q_ext, e2, p2, EDGE_NEXT, nexts, prevs,
                                 twins)


@njit(nogil=True, cache=True)
def k_update_bitfield(nodes, capacity, cache_live, ids, nexts, prevs,
                      commands, reserved, rank, stats, row, start, end):
    """Stage 8: free consumed bisectors' bits, set bits for allocations."""
    split_freed = 0
    merge_freed = 0
    split_alloc = 0
    merge_alloc = 0
    for i in range(start, end):
        s = np.int64(cache_live[i])
        cmd = commands[s]
        smask = cmd & np.uint32(SPLIT_MASK)
        if smask:
            nodes[capacity + s] = 0
            split_freed += 1
            n_alloc = 2
            if smask & U32_N:
                n_alloc += 1
            if smask & U32_P:
                n_alloc += 1
            for k in range(n_alloc):
                nodes[capacity + reserved[s, k]] = 1
            split_alloc += n_alloc
        elif (cmd & U32_MERGE) and _merge_agreed(s, ids, nexts, prevs,
                                                 commands, rank):
            nodes[capacity + s] = 0
            merge_freed += 1
            if cmd & U32_OWNER:
                n_alloc = 2 if (cmd & U32_QUAD) else 1
                for k in range(n_alloc):
                    nodes[capacity + reserved[s, k]] = 1
                merge_alloc += n_alloc
    stats[row, 2] += split_freed
    stats[row, 3] += merge_freed
    stats[row, 4] += split_alloc
    stats[row, 5] += merge_alloc


@njit(nogil=True, cache=True)
def k_verdict_uniform(verdicts, cache_live, ids, rank, target_depth, start,
                      end):
    """Split every bisector shallower than target_depth, keep the rest."""
    for i in range(start, end):
        s = cache_live[i]
        verdicts[i] = 1 if nb_depth_of(ids[s], rank) < target_depth else 0


@njit(nogil=True, cache=True)
def k_verdict_const(verdicts, value, start, end):
    for i in range(start, end):
        verdicts[i] = value
