"""Nine-stage data-parallel incremental update over a worker pool.

Each stage is dispatched as a parallel-for over per-bisector tasks with a
full synchronization point between stages (joining the stage's futures is
the barrier).  All stage kernels release the GIL, so worker threads run
concurrently; shared state is limited to slot-disjoint plain writes plus
the two atomic facilities in the kernels.  For fixed verdicts the final
live-id set and id-level neighbor relations are identical for every
thread count; slot placement of fresh records may differ run to run.
"""

from __future__ import annotations

import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cbt import sum_reduce_array
from .state import TriangulationState

KEEP = 0
SPLIT = 1
MERGE = 2

CSV_HEADER = (
    "epoch,live_before,live_after,splits,merges,oom_splits,oom_merges,"
    + ",".join(f"t{i}" for i in range(1, 10))
)


@dataclass
class UpdateStats:
    """Counters and per-stage wall times for one incremental update."""

    epoch: int
    live_before: int
    live_after: int
    splits_applied: int
    merges_applied: int
    splits_rejected_oom: int
    merges_rejected_oom: int
    split_allocs: int
    merge_allocs: int
    stage_times_us: list = field(default_factory=lambda: [0] * 9)

    @property
    def structural_ops(self) -> int:
        return self.splits_applied + self.merges_applied

    def csv_row(self, no_timing: bool = False) -> str:
        times = [0] * 9 if no_timing else self.stage_times_us
        return ",".join(
            str(v)
            for v in (
                self.epoch,
                self.live_before,
                self.live_after,
                self.splits_applied,
                self.merges_applied,
                self.splits_rejected_oom,
                self.merges_rejected_oom,
                *times,
            )
        )


def write_stats_csv(stats_list, no_timing: bool = False) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for st in stats_list:
        buf.write(st.csv_row(no_timing) + "\n")
    return buf.getvalue()


def converged_epoch(stats_list) -> int | None:
    """Index of the first epoch with zero structural operations."""
    for i, st in enumerate(stats_list):
        if st.structural_ops == 0:
            return i
    return None


class KernelDecide:
    """Verdict source executed inside compiled kernels (fast path)."""

    def fill(self, verdicts, state, count, start, end):
        raise NotImplementedError


class KeepAll(KernelDecide):
    def fill(self, verdicts, state, count, start, end):
        kernels.k_verdict_const(verdicts, np.int8(KEEP), start, end)


class SplitAll(KernelDecide):
    def fill(self, verdicts, state, count, start, end):
        kernels.k_verdict_const(verdicts, np.int8(SPLIT), start, end)


class MergeAll(KernelDecide):
    def fill(self, verdicts, state, count, start, end):
        kernels.k_verdict_const(verdicts, np.int8(MERGE), start, end)


class UniformSplit(KernelDecide):
    """Split until every bisector reaches target_depth."""

    def __init__(self, target_depth: int):
        self.target_depth = target_depth

    def fill(self, verdicts, state, count, start, end):
        kernels.k_verdict_uniform(
            verdicts, state.cache_live, state.ids, state.rank,
            self.target_depth, start, end,
        )


class ParallelEngine:
    """Executes incremental updates with a fixed-size worker pool."""

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise ValueError("thread count must be >= 1")
        self.threads = threads
        self._pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def _chunks(self, n_tasks):
        n = self.threads
        step = (n_tasks + n - 1) // n if n_tasks else 0
        out = []
        a = 0
        while a < n_tasks:
            b = min(a + step, n_tasks)
            out.append((a, b))
            a = b
        return out

    def _run(self, fn, n_tasks, args):
        """Parallel-for over [0, n_tasks); returning is the stage barrier."""
        if self._pool is None or n_tasks < 2:
            fn(*args, 0, n_tasks)
            return
        futures = [
            self._pool.submit(fn, *args, a, b) for a, b in self._chunks(n_tasks)
        ]
        for f in futures:
            f.result()

    def _run_rows(self, fn, n_tasks, args, stats):
        """Like _run but hands each chunk its own stats accumulator row."""
        if self._pool is None or n_tasks < 2:
            fn(*args, stats, 0, 0, n_tasks)
            return
        futures = [
            self._pool.submit(fn, *args, stats, row, a, b)
            for row, (a, b) in enumerate(self._chunks(n_tasks))
        ]
        for f in futures:
            f.result()

    def _eval_verdicts(self, decide, verdicts, state, count):
        if isinstance(decide, KernelDecide):
            if self._pool is None or count < 2:
                decide.fill(verdicts, state, count, 0, count)
            else:
                futures = [
                    self._pool.submit(decide.fill, verdicts, state, count, a, b)
                    for a, b in self._chunks(count)
                ]
                for f in futures:
                    f.result()
            return

        ids = state.ids
        cache_live = state.cache_live

        def chunk(a, b):
            for i in range(a, b):
                verdicts[i] = decide(int(ids[cache_live[i]]))

        if self._pool is None or count < 2:
            chunk(0, count)
        else:
            futures = [self._pool.submit(chunk, a, b) for a, b in self._chunks(count)]
            for f in futures:
                f.result()

    def update(self, state: TriangulationState, decide, epoch: int = 0) -> UpdateStats:
        """One full nine-stage incremental update.

        `decide` is either a callable mapping a bisector id to a verdict
        in {0 keep, 1 split, 2 merge} or a KernelDecide fast path.
        """
        cbt = state.cbt
        count = cbt.count()
        capacity = state.capacity
        free_ct = capacity - count
        nodes = cbt.nodes
        n_rows = max(1, self.threads)
        scratch = np.zeros((n_rows, 6), dtype=np.int64)
        verdicts = np.zeros(max(count, 1), dtype=np.int8)
        times = []

        def timed(fn):
            t0 = time.perf_counter_ns()
            fn()
            times.append((time.perf_counter_ns() - t0) // 1000)

        # (1) ResetCounter: single task
        timed(lambda: state.counter.__setitem__(0, 0))

        # (2) CachePointers: ranked queries for live and free slots
        timed(lambda: self._run(
            kernels.k_cache_pointers,
            max(count, free_ct),
            (nodes, capacity, count, free_ct, state.cache_live, state.cache_free),
        ))

        # (3) ResetCommands
        timed(lambda: self._run(
            kernels.k_reset_commands, count, (state.commands, state.cache_live)
        ))

        # (4) GenerateCommands: verdicts, admission, chain scattering
        def stage4():
            self._eval_verdicts(decide, verdicts, state, count)
            self._run_rows(
                kernels.k_generate_commands,
                count,
                (
                    verdicts, state.cache_live, state.ids, state.nexts,
                    state.prevs, state.twins, state.commands, state.counter,
                    np.int64(free_ct), state.rank, np.int64(state.max_depth),
                ),
                scratch,
            )
        timed(stage4)

        # (5) ReserveBlocks
        timed(lambda: self._run(
            kernels.k_reserve_blocks,
            count,
            (
                state.cache_live, state.cache_free, state.ids, state.nexts,
                state.prevs, state.twins, state.commands, state.counter,
                state.reserved, state.rank,
            ),
        ))

        # (6) FillNewBlocks
        timed(lambda: self._run(
            kernels.k_fill_new_blocks,
            count,
            (
                state.cache_live, state.ids, state.nexts, state.prevs,
                state.twins, state.commands, state.reserved, state.rank,
            ),
        ))

        # (7) UpdateNeighbors
        timed(lambda: self._run(
            kernels.k_update_neighbors,
            count,
            (
                state.cache_live, state.ids, state.nexts, state.prevs,
                state.twins, state.commands, state.reserved, state.rank,
            ),
        ))

        # (8) UpdateBitfield
        timed(lambda: self._run_rows(
            kernels.k_update_bitfield,
            count,
            (
                nodes, capacity, state.cache_live, state.ids, state.nexts,
                state.prevs, state.commands, state.reserved, state.rank,
            ),
            scratch,
        ))

        # (9) SumReduction
        def stage9():
            sum_reduce_array(nodes, state.depth)
            cbt._dirty = False
        timed(stage9)

        oom_s, oom_m, split_freed, merge_freed, split_alloc, merge_alloc = (
            int(x) for x in scratch.sum(axis=0)
        )
        live_after = cbt.count()
        stats = UpdateStats(
            epoch=epoch,
            live_before=count,
            live_after=live_after,
            splits_applied=split_freed,
            merges_applied=merge_freed,
            splits_rejected_oom=oom_s,
            merges_rejected_oom=oom_m,
            split_allocs=split_alloc,
            merge_allocs=merge_alloc,
            stage_times_us=times,
        )
        assert live_after == count - split_freed + split_alloc - merge_freed + merge_alloc, (
            "live count does not match applied operations"
        )
        return stats

    def run_epochs(self, state, decide, n: int) -> list[UpdateStats]:
        """Apply n incremental updates; decide may be per-epoch callable.

        If `decide` is a callable of one argument (epoch) returning the
        per-bisector decide for that epoch, it is re-bound each epoch;
        otherwise the same decide is used throughout.
        """
        if n < 1:
            raise ValueError("epoch count must be >= 1")
        out = []
        for e in range(n):
            d = decide(e) if _is_epoch_factory(decide) else decide
            out.append(self.update(state, d, epoch=e))
        return out


def _is_epoch_factory(decide):
    return getattr(decide, "per_epoch", False)


class EpochFactory:
    """Wraps an epoch-indexed family of decide functions for run_epochs."""

    per_epoch = True

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, epoch):
        return self._fn(epoch)
