"""Incremental, non-moving mark-sweep over the chunked heap.

Marking and sweeping both run in budgeted steps (one work unit per chunk
visited) so that a low-priority thread can run them in whatever time is left
over.  While marking, the heap logs every reference it overwrites
(snapshot-at-the-beginning) and hands out pre-marked chunks, so a cycle never
frees anything that was reachable when it started.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from rtheap.heap import (
    NIL,
    ArrayHandle,
    ChunkIndex,
    Handle,
    Heap,
    Kind,
    ObjectHandle,
    Region,
)

SWEPT_REGIONS = (Region.OBJECTS, Region.ARRAYS)


class Phase(enum.Enum):
    IDLE = "idle"
    MARKING = "marking"
    SWEEPING = "sweeping"


class StepResult(enum.Enum):
    IN_PROGRESS = "in_progress"
    MARK_DONE = "mark_done"
    SWEEP_DONE = "sweep_done"


class Outcome(enum.Enum):
    NO_NEED = "no_need"
    CYCLE_STARTED = "cycle_started"
    UNSATISFIABLE = "unsatisfiable"


@dataclass
class RootSet:
    globals: set = field(default_factory=set)
    stack_roots: list = field(default_factory=list)

    @classmethod
    def from_heap(cls, heap: Heap) -> RootSet:
        stack_roots = [h for s in heap.stacks for h in s.roots()]
        return cls(set(heap.globals.values()), stack_roots)

    def handles(self) -> Iterable[Handle]:
        yield from self.globals
        yield from self.stack_roots


@dataclass
class CollectionStats:
    marked_chunks: int = 0
    swept_free_chunks: int = 0
    mark_work_units: int = 0
    sweep_work_units: int = 0
    barrier_entries: int = 0
    pause_segments: list = field(default_factory=list)
    freed: Optional[list] = None


class CollectorState:
    """Phase, gray worklist and sweep cursor of the current cycle.

    Gray chunks are encoded as ``slot * 4 + region`` to keep the worklist a
    plain list of ints.
    """

    def __init__(self, heap: Heap, *, record_freed: bool = False):
        self.heap = heap
        self.phase = Phase.IDLE
        self.worklist: list[int] = []
        self.sweep_cursor: tuple[Region, int] = (Region.OBJECTS, 0)
        self.stats = CollectionStats()
        self.history: list[CollectionStats] = []
        self.record_freed = record_freed
        self.work_clock = 0
        self.cycle_epoch: Optional[int] = None
        self.completed_epoch: Optional[int] = None

    @property
    def barrier_log(self) -> list:
        log = self.heap.barrier_log
        return [] if log is None else log

    def allocates_marked(self, region: Region, slot: int) -> bool:
        if region == Region.STACKS:
            return False
        if self.phase is Phase.MARKING:
            return True
        if self.phase is Phase.SWEEPING:
            cur_region, cur_slot = self.sweep_cursor
            return region > cur_region or (region == cur_region and slot >= cur_slot)
        return False

    def exhausted(self) -> bool:
        """True when the last finished cycle saw the heap exactly as it is now."""
        return (self.phase is Phase.IDLE
                and self.completed_epoch is not None
                and self.completed_epoch == self.heap.epoch)

    def _shade(self, gid: int) -> None:
        st = self.heap.regions[gid & 3]
        slot = gid >> 2
        if not st.mark[slot]:
            st.mark[slot] = 1
            self.stats.marked_chunks += 1
            self.worklist.append(gid)

    def _shade_handle(self, h) -> None:
        gid = _gid(h)
        if gid is not None:
            self._shade(gid)


def start_cycle(heap: Heap, state: CollectorState, roots: Optional[RootSet] = None) -> None:
    if state.phase is not Phase.IDLE:
        raise RuntimeError(f"cycle already running ({state.phase.value})")
    state.phase = Phase.MARKING
    state.stats = CollectionStats(freed=[] if state.record_freed else None)
    state.worklist = []
    state.cycle_epoch = heap.epoch
    heap.collector = state
    heap.barrier_log = []
    heap.stats.collector_invocations += 1
    roots = RootSet.from_heap(heap) if roots is None else roots
    for h in roots.handles():
        state._shade_handle(h)


def _gid(h) -> Optional[int]:
    if isinstance(h, ObjectHandle):
        return h.first.slot << 2 | h.first.region
    if isinstance(h, ArrayHandle):
        return h.first_leaf.slot << 2 | h.first_leaf.region
    if isinstance(h, ChunkIndex):
        return h.slot << 2 | h.region
    return None


def _scan(heap: Heap, state: CollectorState, gid: int) -> None:
    _mark_loop(heap, state, [gid], 1)


def _mark_loop(heap: Heap, state: CollectorState, worklist: list, budget) -> int:
    """Scan up to ``budget`` gray chunks from ``worklist``; return how many were scanned."""
    regions = heap.regions
    marks = [st.mark for st in regions]
    arrays = regions[Region.ARRAYS]
    a_mark = arrays.mark
    a_kind = arrays.kind
    internal = Kind.ARRAY_INTERNAL
    a_region = int(Region.ARRAYS)
    pop = worklist.pop
    push = worklist.append
    units = 0
    newly = 0
    while worklist and units < budget:
        gid = pop()
        units += 1
        region = gid & 3
        slot = gid >> 2
        st = regions[region]
        cont = st.cont[slot]
        if cont != NIL:
            m = marks[region]
            if not m[cont]:
                m[cont] = 1
                newly += 1
                push(cont << 2 | region)
        refs = st.refs[slot]
        if region == a_region:
            for nb in (arrays.next_leaf[slot], arrays.root_ref[slot]):
                if nb != NIL and not a_mark[nb]:
                    a_mark[nb] = 1
                    newly += 1
                    push(nb << 2 | a_region)
            if refs and a_kind[slot] == internal:
                for child in refs.values():
                    if not a_mark[child]:
                        a_mark[child] = 1
                        newly += 1
                        push(child << 2 | a_region)
                continue
        if refs:
            for v in refs.values():
                g = _gid(v)
                if g is not None:
                    m = marks[g & 3]
                    if not m[g >> 2]:
                        m[g >> 2] = 1
                        newly += 1
                        push(g)
    state.stats.marked_chunks += newly
    return units


def mark_step(heap: Heap, state: CollectorState, budget: int) -> StepResult:
    if state.phase is not Phase.MARKING:
        raise RuntimeError(f"mark_step during {state.phase.value}")
    if budget <= 0:
        return StepResult.IN_PROGRESS
    start = state.work_clock
    units = 0
    worklist = state.worklist
    log = heap.barrier_log
    while units < budget:
        if not worklist:
            if not log:
                break
            state.stats.barrier_entries += len(log)
            for h in log:
                state._shade_handle(h)
            log.clear()
            continue
        units += _mark_loop(heap, state, worklist, budget - units)
    state.stats.mark_work_units += units
    state.work_clock += units
    state.stats.pause_segments.append((start, state.work_clock))
    if worklist or log:
        return StepResult.IN_PROGRESS
    state.phase = Phase.SWEEPING
    state.sweep_cursor = (SWEPT_REGIONS[0], 0)
    heap.barrier_log = None
    return StepResult.MARK_DONE


_LIVE = bytes([0] + [1] * 255)


def _sweep_range(st, region: Region, lo: int, hi: int, freed_log) -> int:
    """Free every allocated, unmarked chunk in [lo, hi) and clear the marks."""
    n = hi - lo
    if n <= 0:
        return 0
    used = int.from_bytes(st.kind[lo:hi].translate(_LIVE), "little")
    live = int.from_bytes(st.mark[lo:hi], "little")
    garbage = used & ~live
    st.mark[lo:hi] = bytes(n)
    if not garbage:
        return 0
    dead = garbage.to_bytes(n, "little")
    kind, cont, co = st.kind, st.cont, st.co
    next_leaf, root_ref, refs, link = st.next_leaf, st.root_ref, st.refs, st.free_link
    head = st.free_head
    freed = 0
    i = dead.find(1)
    while i >= 0:
        s = lo + i
        kind[s] = 0
        if cont[s] != NIL:
            cont[s] = NIL
            co[s] = 0
        if next_leaf[s] != NIL:
            next_leaf[s] = NIL
        if root_ref[s] != NIL:
            root_ref[s] = NIL
        refs[s] = None
        link[s] = head
        head = s
        freed += 1
        if freed_log is not None:
            freed_log.append(ChunkIndex(region, s))
        i = dead.find(1, i + 1)
    st.free_head = head
    st.free_count += freed
    st.allocated -= freed
    return freed


def sweep_step(heap: Heap, state: CollectorState, budget: int) -> StepResult:
    if state.phase is not Phase.SWEEPING:
        raise RuntimeError(f"sweep_step during {state.phase.value}")
    start = state.work_clock
    units = 0
    freed_total = 0
    freed_log = state.stats.freed
    region, slot = state.sweep_cursor
    while units < budget:
        st = heap.regions[region]
        end = min(st.capacity, slot + (budget - units)) if budget != math.inf else st.capacity
        freed_total += _sweep_range(st, region, slot, end, freed_log)
        units += end - slot
        slot = end
        if slot < st.capacity:
            break
        idx = SWEPT_REGIONS.index(region)
        if idx + 1 == len(SWEPT_REGIONS):
            region, slot = region, st.capacity
            break
        region, slot = SWEPT_REGIONS[idx + 1], 0
    state.sweep_cursor = (region, slot)
    state.stats.swept_free_chunks += freed_total
    state.stats.sweep_work_units += units
    state.work_clock += units
    state.stats.pause_segments.append((start, state.work_clock))
    last = heap.regions[SWEPT_REGIONS[-1]]
    if region == SWEPT_REGIONS[-1] and slot >= last.capacity:
        _finish(heap, state)
        return StepResult.SWEEP_DONE
    return StepResult.IN_PROGRESS


def _finish(heap: Heap, state: CollectorState) -> None:
    state.phase = Phase.IDLE
    heap.collector = None
    heap.barrier_log = None
    state.history.append(state.stats)
    # A cycle that ran without interference leaves nothing more to reclaim.
    state.completed_epoch = state.cycle_epoch if heap.epoch == state.cycle_epoch else None


def run_cycle(heap: Heap, state: CollectorState, mark_budget: Optional[int] = None,
              sweep_budget: Optional[int] = None) -> int:
    """Drive the current (or a fresh) cycle to completion; return work units spent."""
    before = state.work_clock
    if state.phase is Phase.IDLE:
        start_cycle(heap, state)
    mb = mark_budget or math.inf
    sb = sweep_budget or math.inf
    while state.phase is Phase.MARKING:
        mark_step(heap, state, mb)
    while state.phase is Phase.SWEEPING:
        sweep_step(heap, state, sb)
    return state.work_clock - before


def collect_full(heap: Heap, roots: Optional[RootSet] = None, *,
                 state: Optional[CollectorState] = None) -> CollectionStats:
    state = CollectorState(heap, record_freed=True) if state is None else state
    if state.phase is not Phase.IDLE:
        raise RuntimeError("collect_full needs an idle collector")
    start_cycle(heap, state, roots)
    while mark_step(heap, state, math.inf) is StepResult.IN_PROGRESS:
        pass
    while sweep_step(heap, state, math.inf) is StepResult.IN_PROGRESS:
        pass
    return state.stats


def maybe_collect(heap: Heap, state: CollectorState, region: Region, n_chunks: int) -> Outcome:
    """Limit-check redirect: decide whether a collection is needed for ``n_chunks``."""
    if heap.reserve(region, n_chunks):
        return Outcome.NO_NEED
    if state.phase is Phase.IDLE:
        if state.exhausted():
            return Outcome.UNSATISFIABLE
        start_cycle(heap, state)
    return Outcome.CYCLE_STARTED


def collect_until(heap: Heap, state: CollectorState, region: Region, n_chunks: int,
                  mark_budget: Optional[int] = None, sweep_budget: Optional[int] = None) -> tuple[bool, int]:
    """Run cycles inline until ``n_chunks`` fit or nothing more can be freed.

    Returns (satisfied, work units spent).
    """
    spent = 0
    while True:
        outcome = maybe_collect(heap, state, region, n_chunks)
        if outcome is Outcome.NO_NEED:
            return True, spent
        if outcome is Outcome.UNSATISFIABLE:
            return False, spent
        spent += run_cycle(heap, state, mark_budget, sweep_budget)
