"""Concurrent binary tree over a slot-occupancy bitfield.

The tree is stored as a flat binary heap of ``2**(D+1)`` unsigned 32-bit
counters indexed from 1 (index 0 is padding).  Leaves live at heap
indices ``[2**D, 2**(D+1))`` and hold 0/1 occupancy bits for a memory
pool of capacity ``2**D``; every internal node holds the sum of its two
children once :meth:`Cbt.sum_reduce` has run, so the root counts the set
bits and ranked set/unset-bit queries resolve in O(D) node visits.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MIN_DEPTH = 1
# 32-bit node counters are safe for D <= 25 (root count < 2**25).
MAX_DEPTH = 25


class Cbt:
    """Sum-reduction tree whose leaves form the pool occupancy bitfield."""

    def __init__(self, depth: int):
        if not MIN_DEPTH <= depth <= MAX_DEPTH:
            raise ValueError(
                f"depth must be in [{MIN_DEPTH}, {MAX_DEPTH}], got {depth}"
            )
        self.depth = depth
        self.capacity = 1 << depth
        self.nodes = np.zeros(2 << depth, dtype=np.uint32)
        # Ranked queries are only defined while the reduction tree matches
        # the leaves; callers must sum_reduce between writes and queries.
        self._dirty = False

    # -- leaf access --------------------------------------------------

    def _check_slot(self, slot: int) -> None:
        if not 0 <= slot < self.capacity:
            raise IndexError(f"slot {slot} out of range [0, {self.capacity})")

    def set_bit(self, slot: int, value: int) -> None:
        """Write one occupancy bit; internal nodes update at sum_reduce."""
        self._check_slot(slot)
        if value not in (0, 1):
            raise ValueError(f"bit value must be 0 or 1, got {value}")
        self.nodes[self.capacity + slot] = value
        self._dirty = True

    def get_bit(self, slot: int) -> int:
        self._check_slot(slot)
        return int(self.nodes[self.capacity + slot])

    @property
    def leaves(self) -> np.ndarray:
        """View of the bitfield (leaf row of the heap)."""
        return self.nodes[self.capacity : 2 * self.capacity]

    # -- reduction and queries ----------------------------------------

    def sum_reduce(self) -> None:
        """Rebuild every internal node bottom-up from the leaves."""
        nodes = self.nodes
        for level in range(self.depth - 1, -1, -1):
            lo = 1 << level
            child = nodes[2 * lo : 4 * lo]
            nodes[lo : 2 * lo] = child[0::2] + child[1::2]
        self._dirty = False

    def count(self) -> int:
        """Number of set bits (root node)."""
        assert not self._dirty, "sum_reduce required before count()"
        return int(self.nodes[1])

    def one_to_bit_id(self, rank: int) -> int:
        """Slot of the (rank+1)-th set bit in ascending slot order."""
        assert not self._dirty, "sum_reduce required before ranked queries"
        if not 0 <= rank < int(self.nodes[1]):
            raise IndexError(f"rank {rank} out of range [0, {int(self.nodes[1])})")
        nodes = self.nodes
        bit_id = 1
        while bit_id < self.capacity:
            bit_id *= 2
            left = int(nodes[bit_id])
            if rank >= left:
                rank -= left
                bit_id += 1
        return bit_id - self.capacity

    def zero_to_bit_id(self, rank: int) -> int:
        """Slot of the (rank+1)-th unset bit in ascending slot order."""
        assert not self._dirty, "sum_reduce required before ranked queries"
        zeros = self.capacity - int(self.nodes[1])
        if not 0 <= rank < zeros:
            raise IndexError(f"rank {rank} out of range [0, {zeros})")
        nodes = self.nodes
        bit_id = 1
        # Per-level slot capacity under the left child, halved per descent.
        cap = self.capacity // 2
        while bit_id < self.capacity:
            bit_id *= 2
            left_zeros = cap - int(nodes[bit_id])
            if rank >= left_zeros:
                rank -= left_zeros
                bit_id += 1
            cap //= 2
        return bit_id - self.capacity

    # -- diagnostics ---------------------------------------------------

    def dump(self) -> str:
        """Textual per-level rendering of the heap, root first."""
        lines = []
        for level in range(self.depth + 1):
            lo = 1 << level
            row = " ".join(str(int(v)) for v in self.nodes[lo : 2 * lo])
            lines.append(f"level {level:2d}: {row}")
        return "\n".join(lines)


# -- numba-side equivalents used by the parallel pipeline kernels -----
#
# These operate directly on the heap array and are cross-checked against
# the scalar methods above and a linear-scan oracle in the test suite.


@njit(nogil=True, cache=True)
def nb_one_to_bit_id(nodes, capacity, rank):
    bit_id = 1
    while bit_id < capacity:
        bit_id *= 2
        left = nodes[bit_id]
        if rank >= left:
            rank -= left
            bit_id += 1
    return bit_id - capacity


@njit(nogil=True, cache=True)
def nb_zero_to_bit_id(nodes, capacity, rank):
    bit_id = 1
    cap = capacity // 2
    while bit_id < capacity:
        bit_id *= 2
        left_zeros = cap - nodes[bit_id]
        if rank >= left_zeros:
            rank -= left_zeros
            bit_id += 1
        cap //= 2
    return bit_id - capacity


@njit(nogil=True, cache=True)
def nb_one_to_bit_ids(nodes, capacity, ranks, out, start, end):
    for i in range(start, end):
        out[i] = nb_one_to_bit_id(nodes, capacity, ranks[i])


@njit(nogil=True, cache=True)
def nb_zero_to_bit_ids(nodes, capacity, ranks, out, start, end):
    for i in range(start, end):
        out[i] = nb_zero_to_bit_id(nodes, capacity, ranks[i])


def sum_reduce_array(nodes: np.ndarray, depth: int) -> None:
    """sum_reduce for a raw heap array (pipeline stage 9)."""
    for level in range(depth - 1, -1, -1):
        lo = 1 << level
        child = nodes[2 * lo : 4 * lo]
        nodes[lo : 2 * lo] = child[0::2] + child[1::2]
