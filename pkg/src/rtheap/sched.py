"""Deterministic fixed-priority scheduler hosting mutators and the collector.

Time is a tick counter advanced by the work units of whatever runs.  Threads
switch only at event boundaries.  The collector owns priority 0, which no
mutator may use, so it only runs when every mutator is blocked or finished;
allocations that fail their limit check collect inline instead.
"""

from __future__ import annotations

import csv
import enum
import io
import time
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from rtheap.mutator import EventCost

COLLECTOR_PRIORITY = 0


class SchedError(RuntimeError):
    pass


class ThreadLimitExceeded(SchedError):
    pass


class Deadlock(SchedError):
    pass


class ThreadState(enum.Enum):
    RUNNABLE = "runnable"
    BLOCKED = "blocked"
    FINISHED = "finished"


@dataclass
class ThreadDesc:
    id: int
    priority: int
    program: list
    label: str = ""
    state: ThreadState = ThreadState.RUNNABLE
    blocked_until: int = 0
    pc: int = 0
    released_at: int = 0


class PriorityLanes:
    """One FIFO lane of runnable thread ids per priority level."""

    def __init__(self, levels: int):
        self.lanes = [deque() for _ in range(levels)]

    def enqueue(self, t: ThreadDesc) -> None:
        self.lanes[t.priority].append(t.id)

    def highest(self) -> Optional[int]:
        for prio in range(len(self.lanes) - 1, COLLECTOR_PRIORITY, -1):
            if self.lanes[prio]:
                return prio
        return None

    def pop(self, prio: int) -> int:
        return self.lanes[prio].popleft()

    def snapshot(self) -> tuple:
        return tuple(tuple(lane) for lane in self.lanes)

    def snapshot_hash(self) -> str:
        return f"{zlib.crc32(repr(self.snapshot()).encode()):08x}"


@dataclass
class TraceRecord:
    step: int
    tick: int
    thread: int
    priority: int
    event: str
    work_units: int
    gc_units: int = 0
    inline_gc: bool = False
    runnable_max: Optional[int] = None
    lane_hash: str = ""
    iteration: int = -1
    released_at: Optional[int] = None
    parts: list = field(default_factory=list)
    wall_nanos: int = 0


TRACE_COLUMNS = ("tick", "thread", "event", "work_units", "lane_hash")


class Simulator:
    def __init__(self, executor, *, priorities: int = 8, max_threads: int = 64,
                 wallclock: bool = True):
        if priorities < 2:
            raise ValueError("need at least one mutator priority above the collector")
        self.executor = executor
        self.priorities = priorities
        self.max_threads = max_threads
        self.wallclock = wallclock
        self.lanes = PriorityLanes(priorities)
        self.threads: list[ThreadDesc] = []
        self.tick = 0
        self.steps = 0
        self.collector_steps = 0
        self.collector_id: Optional[int] = None
        if executor.concurrent_collector:
            self.collector_id = self._new_thread(COLLECTOR_PRIORITY, [], "collector").id

    def _new_thread(self, priority: int, program: list, label: str) -> ThreadDesc:
        if len(self.threads) >= self.max_threads:
            raise ThreadLimitExceeded(f"at most {self.max_threads} threads")
        t = ThreadDesc(len(self.threads), priority, list(program), label)
        self.threads.append(t)
        return t

    def spawn(self, priority: int, program, label: str = "") -> int:
        if not COLLECTOR_PRIORITY < priority < self.priorities:
            raise ValueError(f"mutator priority must be in 1..{self.priorities - 1}")
        t = self._new_thread(priority, program, label or f"t{len(self.threads)}")
        self.executor.start_thread(t.id)
        t.released_at = self.tick
        if t.program:
            self.lanes.enqueue(t)
        else:
            self._finish(t)
        return t.id

    def _finish(self, t: ThreadDesc) -> None:
        t.state = ThreadState.FINISHED
        self.executor.end_thread(t.id)

    def mutators(self):
        return (t for t in self.threads if t.id != self.collector_id)

    @property
    def done(self) -> bool:
        return all(t.state is ThreadState.FINISHED for t in self.mutators())

    def _wake(self) -> None:
        woken = sorted((t.blocked_until, t.id) for t in self.threads
                       if t.state is ThreadState.BLOCKED and t.blocked_until <= self.tick)
        for until, tid in woken:
            t = self.threads[tid]
            t.state = ThreadState.RUNNABLE
            t.released_at = until
            self.lanes.enqueue(t)

    def step(self) -> TraceRecord:
        self._wake()
        prio = self.lanes.highest()
        lane_hash = self.lanes.snapshot_hash()
        self.steps += 1
        if prio is not None:
            return self._run_mutator(prio, lane_hash)
        if self.collector_id is not None and self.executor.collector_runnable():
            return self._run_collector(lane_hash)
        blocked = [t.blocked_until for t in self.threads if t.state is ThreadState.BLOCKED]
        if blocked:
            gap = min(blocked) - self.tick
            rec = TraceRecord(self.steps, self.tick, -1, -1, "idle", gap, lane_hash=lane_hash)
            self.tick += gap
            return rec
        self.steps -= 1
        raise Deadlock("no runnable thread and no pending unblock")

    def _run_mutator(self, prio: int, lane_hash: str) -> TraceRecord:
        t = self.threads[self.lanes.pop(prio)]
        ev = t.program[t.pc]
        t0 = time.perf_counter_ns() if self.wallclock else 0
        out = self.executor.execute(t.id, ev)
        wall = time.perf_counter_ns() - t0 if self.wallclock else 0
        rec = TraceRecord(self.steps, self.tick, t.id, t.priority, ev.op, out.work_units,
                          gc_units=out.gc_units, inline_gc=out.gc_units > 0, runnable_max=prio,
                          lane_hash=lane_hash, iteration=t.pc, released_at=t.released_at,
                          parts=out.parts, wall_nanos=wall)
        self.tick += out.work_units
        t.pc += 1
        t.released_at = self.tick
        if t.pc >= len(t.program):
            self._finish(t)
        elif out.block_ticks:
            t.state = ThreadState.BLOCKED
            t.blocked_until = self.tick + out.block_ticks
        else:
            self.lanes.enqueue(t)
        return rec

    def _run_collector(self, lane_hash: str) -> TraceRecord:
        t0 = time.perf_counter_ns() if self.wallclock else 0
        out = self.executor.collector_step()
        wall = time.perf_counter_ns() - t0 if self.wallclock else 0
        rec = TraceRecord(self.steps, self.tick, self.collector_id, COLLECTOR_PRIORITY,
                          out.parts[0].op, out.work_units, gc_units=out.gc_units,
                          runnable_max=None, lane_hash=lane_hash,
                          iteration=self.collector_steps, parts=out.parts, wall_nanos=wall)
        self.collector_steps += 1
        self.tick += out.work_units
        return rec

    def run_until(self, tick: Optional[int] = None, max_steps: Optional[int] = None) -> list[TraceRecord]:
        """Step until every mutator finishes (or ``tick`` / ``max_steps`` is reached)."""
        trace = []
        while not self.done:
            if tick is not None and self.tick >= tick:
                break
            if max_steps is not None and len(trace) >= max_steps:
                break
            trace.append(self.step())
        return trace


def trace_csv(trace: list[TraceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow((r.tick, r.thread, r.event, r.work_units, r.lane_hash))
    return buf.getvalue()


def check_trace(trace: list[TraceRecord], collector_id: Optional[int]) -> list[str]:
    """Violations of priority supremacy, slack-only collection and tick accounting."""
    problems = []
    tick = trace[0].tick if trace else 0
    for r in trace:
        if r.tick != tick:
            problems.append(f"step {r.step}: tick {r.tick} != accumulated {tick}")
        tick = r.tick + r.work_units
        if r.thread == collector_id:
            if r.runnable_max is not None:
                problems.append(f"step {r.step}: collector ran while priority {r.runnable_max} was runnable")
        elif r.thread >= 0 and r.priority != r.runnable_max:
            problems.append(f"step {r.step}: priority {r.priority} ran below {r.runnable_max}")
        if r.gc_units and r.thread not in (collector_id,) and not r.inline_gc:
            problems.append(f"step {r.step}: collector work outside slack or inline escalation")
    return problems


def part_records(trace: list[TraceRecord]):
    """Flatten (record, EventCost) pairs for latency reporting."""
    for r in trace:
        for part in r.parts:
            assert isinstance(part, EventCost)
            yield r, part
