"""Workload event execution against the chunked heap or the moving baseline.

Both executors speak the same protocol so one script runs unmodified under
either collector.  Costs are deterministic work units: chunk visits for the
chunked heap, bytes touched (allocated plus copied) for the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from rtheap import baseline as bl
from rtheap.collector import (
    CollectorState,
    Phase,
    StepResult,
    collect_until,
    mark_step,
    start_cycle,
    sweep_step,
)
from rtheap.heap import Heap, OutOfChunks, Region, TypeDescriptor
from rtheap.tree_array import alloc_array, array_read, array_write, layout_for
from rtheap.workload import Var, WorkloadEvent, XorShift64Star

BOX = TypeDescriptor(16, (8,))
OBJECT_HEADER = 8
ARRAY_HEADER = 16


class WorkloadError(RuntimeError):
    pass


@dataclass
class EventCost:
    op: str
    work_units: int
    chunks_touched: int = 0
    bytes_copied: int = 0


@dataclass
class Outcome:
    work_units: int
    block_ticks: int = 0
    gc_units: int = 0
    parts: list = field(default_factory=list)


def _single(op: str, units: int, chunks: int = 0, block: int = 0) -> Outcome:
    return Outcome(units, block, 0, [EventCost(op, units, chunks)])


class ChunkedExecutor:
    name = "chunked"
    concurrent_collector = True

    def __init__(self, heap: Heap, *, seed: int = 1, mark_budget: int = 64,
                 sweep_budget: int = 256, gc_trigger: float = 0.25):
        self.heap = heap
        self.state = CollectorState(heap)
        self.rng = XorShift64Star(seed)
        self.mark_budget = mark_budget
        self.sweep_budget = sweep_budget
        self.gc_trigger = gc_trigger
        self.stacks = {}

    # -- threads ----------------------------------------------------------

    def start_thread(self, tid: int) -> None:
        s = self.heap.new_stack(tid)
        self.heap.push_frame(s)
        self.stacks[tid] = s

    def end_thread(self, tid: int) -> None:
        self.heap.release_stack(self.stacks.pop(tid))

    def _get(self, tid: int, ev: WorkloadEvent, name: str):
        value = self.stacks[tid].lookup(name)
        if value is None:
            raise WorkloadError(f"line {ev.line}: {name} is null")
        return value

    def _value(self, tid: int, v):
        return self.stacks[tid].lookup(v.name) if isinstance(v, Var) else v

    def _ensure(self, region: Region, need: int) -> int:
        """Block-wise limit check; collects inline when the reserve fails."""
        if self.heap.reserve(region, need):
            return 0
        ok, spent = collect_until(self.heap, self.state, region, need)
        if not ok:
            raise OutOfChunks(f"{need} {region.name.lower()} chunks unavailable after a full cycle")
        return spent

    # -- events -----------------------------------------------------------

    def execute(self, tid: int, ev: WorkloadEvent) -> Outcome:
        heap = self.heap
        stack = self.stacks[tid]
        op, args = ev.op, ev.args
        if op == "alloc_obj":
            name, size, refs = args
            td = TypeDescriptor(size, refs)
            need = heap.chunks_for_object(td)
            gc = self._ensure(Region.OBJECTS, need)
            stack.set_slot(name, heap.alloc_object(td))
            return Outcome(need + gc, 0, gc, [EventCost(op, need + gc, need)])
        if op == "alloc_array":
            name, elem, n, is_ref = args
            need = layout_for(heap.config, elem, n).total_chunks
            gc = self._ensure(Region.ARRAYS, need)
            stack.set_slot(name, alloc_array(heap, elem, n, refs=is_ref))
            return Outcome(need + gc, 0, gc, [EventCost(op, need + gc, need)])
        if op == "write_field":
            name, off, v = args
            heap.write_field(self._get(tid, ev, name), off, self._value(tid, v))
            return _single(op, 1, 1)
        if op == "read_field":
            name, off = args
            heap.read_field(self._get(tid, ev, name), off)
            return _single(op, 1, 1)
        if op in ("write_elem", "read_elem"):
            before = heap.stats.node_visits
            a = self._get(tid, ev, args[0])
            if op == "write_elem":
                array_write(heap, a, args[1], self._value(tid, args[2]))
            else:
                array_read(heap, a, args[1])
            visits = heap.stats.node_visits - before
            return _single(op, visits, visits)
        if op == "drop":
            stack.drop_slot(args[0])
            return _single(op, 1)
        if op == "push_frame":
            heap.push_frame(stack)
            return _single(op, 1, 1)
        if op == "pop_frame":
            heap.pop_frame(stack)
            return _single(op, 1, 1)
        if op == "compute":
            return _single(op, args[0])
        if op == "block_io":
            return _single(op, 1, 0, args[0])
        if op == "maybe_array":
            return self._maybe_array(stack, args)
        raise WorkloadError(f"line {ev.line}: unknown op {op!r}")

    def _maybe_array(self, stack, args) -> Outcome:
        name, n, p, elem = args
        if self.rng.uniform() >= p:
            stack.set_slot(name, None)
            return _single("maybe_none", 1)
        heap = self.heap
        need = layout_for(heap.config, elem, n).total_chunks
        box_need = heap.chunks_for_object(BOX)
        gc = self._ensure(Region.ARRAYS, need)
        gc_box = self._ensure(Region.OBJECTS, box_need)
        a = alloc_array(heap, elem, n)
        box = heap.alloc_object(BOX)
        heap.write_field(box, 8, a)
        stack.set_slot(name, box)
        parts = [EventCost("alloc_array", need + gc, need),
                 EventCost("alloc_obj", box_need + gc_box, box_need)]
        total = need + gc + box_need + gc_box
        return Outcome(total, 0, gc + gc_box, parts)

    # -- collector thread -------------------------------------------------

    def collector_runnable(self) -> bool:
        if self.state.phase is not Phase.IDLE:
            return True
        if self.state.exhausted():
            return False
        heap = self.heap
        return any(heap.free_count(r) < self.gc_trigger * heap.capacity(r)
                   for r in (Region.OBJECTS, Region.ARRAYS))

    def collector_step(self) -> Outcome:
        heap, state = self.heap, self.state
        if state.phase is Phase.IDLE:
            start_cycle(heap, state)
        before = state.work_clock
        if state.phase is Phase.MARKING:
            op = "gc_mark"
            mark_step(heap, state, self.mark_budget)
        else:
            op = "gc_sweep"
            sweep_step(heap, state, self.sweep_budget)
        units = max(1, state.work_clock - before)
        return Outcome(units, 0, units, [EventCost(op, units, state.work_clock - before)])


class BaselineExecutor:
    name = "baseline"
    concurrent_collector = False

    def __init__(self, heap: bl.SemispaceHeap, *, seed: int = 1):
        self.heap = heap
        self.rng = XorShift64Star(seed)
        self.frames: dict[int, list[dict]] = {}
        heap.roots = self._roots

    def _roots(self):
        for frames in self.frames.values():
            for frame in frames:
                yield from (v for v in frame.values() if v is not None)

    def start_thread(self, tid: int) -> None:
        self.frames[tid] = [{}]

    def end_thread(self, tid: int) -> None:
        del self.frames[tid]

    def _find(self, tid: int, name: str) -> dict:
        for frame in reversed(self.frames[tid]):
            if name in frame:
                return frame
        return self.frames[tid][-1]

    def _get(self, tid: int, ev: WorkloadEvent, name: str) -> int:
        value = self._find(tid, name).get(name)
        if value is None:
            raise WorkloadError(f"line {ev.line}: {name} is null")
        return value

    def _value(self, tid: int, v):
        return self._find(tid, v.name).get(v.name) if isinstance(v, Var) else v

    def _alloc(self, op: str, size: int, refs=()) -> tuple[int, EventCost]:
        oid = bl.b_alloc(self.heap, size, refs)
        moved = self.heap.last_alloc.bytes_copied
        units = bl.align(size) + moved
        return oid, EventCost(op, units, 0, moved)

    def execute(self, tid: int, ev: WorkloadEvent) -> Outcome:
        h = self.heap
        op, args = ev.op, ev.args
        if op == "alloc_obj":
            name, size, refs = args
            oid, cost = self._alloc(op, size + OBJECT_HEADER, refs)
            self._find(tid, name)[name] = oid
            return Outcome(cost.work_units, 0, cost.bytes_copied, [cost])
        if op == "alloc_array":
            name, elem, n, is_ref = args
            oid, cost = self._alloc(op, n * elem + ARRAY_HEADER)
            h.objects[oid].ref_offsets = ("elems",) if is_ref else ()
            self._find(tid, name)[name] = oid
            return Outcome(cost.work_units, 0, cost.bytes_copied, [cost])
        if op in ("write_field", "write_elem"):
            name, key, v = args
            oid = self._get(tid, ev, name)
            value = self._value(tid, v)
            obj = h.objects[oid]
            is_ref = key in obj.ref_offsets or "elems" in obj.ref_offsets
            h.write(oid, key, value, ref=is_ref)
            return _single(op, 1)
        if op in ("read_field", "read_elem"):
            h.read(self._get(tid, ev, args[0]), args[1])
            return _single(op, 1)
        if op == "drop":
            del self._find(tid, args[0])[args[0]]
            return _single(op, 1)
        if op == "push_frame":
            self.frames[tid].append({})
            return _single(op, 1)
        if op == "pop_frame":
            self.frames[tid].pop()
            return _single(op, 1)
        if op == "compute":
            return _single(op, args[0])
        if op == "block_io":
            return _single(op, 1, 0, args[0])
        if op == "maybe_array":
            return self._maybe_array(tid, args)
        raise WorkloadError(f"line {ev.line}: unknown op {op!r}")

    def _maybe_array(self, tid: int, args) -> Outcome:
        name, n, p, elem = args
        frame = self._find(tid, name)
        if self.rng.uniform() >= p:
            frame[name] = None
            return _single("maybe_none", 1)
        top = self.frames[tid][-1]
        arr, c1 = self._alloc("alloc_array", n * elem + ARRAY_HEADER)
        top["\0pending"] = arr
        box, c2 = self._alloc("alloc_obj", BOX.byte_size + OBJECT_HEADER, (8 + OBJECT_HEADER,))
        self.heap.write(box, 8 + OBJECT_HEADER, arr, ref=True)
        del top["\0pending"]
        frame[name] = box
        total = c1.work_units + c2.work_units
        return Outcome(total, 0, c1.bytes_copied + c2.bytes_copied, [c1, c2])

    def collector_runnable(self) -> bool:
        return False

    def collector_step(self) -> Optional[Outcome]:
        raise RuntimeError("the baseline collector only runs inline")
