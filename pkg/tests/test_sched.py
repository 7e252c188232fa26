import pytest

from rtheap.bench import RunConfig, make_executor
from rtheap.heap import Heap, HeapConfig, OutOfChunks, Region
from rtheap.mutator import BaselineExecutor, ChunkedExecutor, EventCost, Outcome, WorkloadError
from rtheap.baseline import SemispaceHeap
from rtheap.sched import Simulator, ThreadLimitExceeded, check_trace, trace_csv
from rtheap.workload import WorkloadEvent, parse_workload_text


def run(n):
    return WorkloadEvent("compute", (n,))


def block(n):
    return WorkloadEvent("block_io", (n,))


class FakeExecutor:
    """Runs compute/block_io events only; the collector has ``gc`` steps of 3 units."""

    concurrent_collector = True

    def __init__(self, gc=0):
        self.gc = gc

    def start_thread(self, tid):
        pass

    def end_thread(self, tid):
        pass

    def execute(self, tid, ev):
        n = ev.args[0]
        if ev.op == "block_io":
            return Outcome(1, n, 0, [EventCost("block_io", 1)])
        return Outcome(n, 0, 0, [EventCost("compute", n)])

    def collector_runnable(self):
        return self.gc > 0

    def collector_step(self):
        self.gc -= 1
        return Outcome(3, 0, 3, [EventCost("gc_mark", 3, 3)])


def test_highest_priority_runs_first_and_lanes_are_fifo():
    sim = Simulator(FakeExecutor())
    lo = sim.spawn(1, [run(1)])
    a = sim.spawn(5, [run(1), run(1)])
    b = sim.spawn(5, [run(1)])
    trace = sim.run_until()
    assert [r.thread for r in trace] == [a, b, a, lo]
    assert check_trace(trace, sim.collector_id) == []


def test_collector_only_runs_in_slack():
    sim = Simulator(FakeExecutor(gc=2))
    t = sim.spawn(3, [block(10), run(2)])
    trace = sim.run_until()
    kinds = [(r.thread, r.event) for r in trace]
    assert kinds[0] == (t, "block_io")
    assert kinds[1:3] == [(sim.collector_id, "gc_mark")] * 2
    assert kinds[3][1] == "idle"
    assert trace[3].work_units == 11 - 7
    assert kinds[4] == (t, "compute")
    assert trace[4].tick == 11
    assert check_trace(trace, sim.collector_id) == []


def test_priority_bounds_and_thread_limit():
    sim = Simulator(FakeExecutor(), priorities=4, max_threads=3)
    with pytest.raises(ValueError):
        sim.spawn(0, [run(1)])
    with pytest.raises(ValueError):
        sim.spawn(4, [run(1)])
    sim.spawn(1, [run(1)])
    sim.spawn(2, [run(1)])
    with pytest.raises(ThreadLimitExceeded):
        sim.spawn(3, [run(1)])


def test_run_until_tick_and_steps():
    sim = Simulator(FakeExecutor())
    sim.spawn(2, [run(5)] * 10)
    assert len(sim.run_until(tick=12)) == 3
    assert len(sim.run_until(max_steps=2)) == 2
    assert not sim.done


def test_check_trace_flags_inversions():
    sim = Simulator(FakeExecutor())
    sim.spawn(2, [run(1)])
    trace = sim.run_until()
    trace[0].runnable_max = 6
    assert check_trace(trace, sim.collector_id)


def test_trace_csv_format():
    sim = Simulator(FakeExecutor(), wallclock=False)
    sim.spawn(2, [run(4)])
    text = trace_csv(sim.run_until())
    assert text.splitlines()[0] == "tick,thread,event,work_units,lane_hash"
    assert text.splitlines()[1].startswith("0,1,compute,4,")


def run_text(executor, text):
    sim = Simulator(executor, wallclock=False)
    for p in parse_workload_text(text):
        sim.spawn(p.priority, p.events, p.label)
    return sim, sim.run_until()


SCRIPT = """
thread t priority 2
alloc_obj a 48 refs=8,40
alloc_obj b 8
write_field a 40 b
write_field a 0 5
read_field a 0
alloc_array xs 4 100
write_elem xs 99 3
read_elem xs 99
push_frame
alloc_obj tmp 8
pop_frame
maybe_array m 50 1.0
drop b
compute 7
"""


def test_chunked_executor_costs():
    ex = ChunkedExecutor(Heap(HeapConfig(object_region_chunks=64, array_region_chunks=64,
                                         stack_region_chunks=8)))
    sim, trace = run_text(ex, SCRIPT)
    by_op = {r.event: r for r in trace}
    assert by_op["alloc_obj"].parts[0].chunks_touched == 1
    assert trace[0].parts[0].chunks_touched == 2
    assert by_op["alloc_array"].work_units == 4 + 2
    assert by_op["read_elem"].work_units == 2
    assert [p.op for p in by_op["maybe_array"].parts] == ["alloc_array", "alloc_obj"]
    assert by_op["compute"].work_units == 7
    assert all(p.bytes_copied == 0 for r in trace for p in r.parts)
    assert check_trace(trace, sim.collector_id) == []
    assert ex.heap.allocated_count(Region.STACKS) == 0


def test_baseline_executor_costs():
    ex = BaselineExecutor(SemispaceHeap(1 << 16))
    sim, trace = run_text(ex, SCRIPT)
    assert trace[0].work_units == 56
    assert trace[5].work_units == 416
    assert sim.collector_id is None


def test_null_dereference_is_reported():
    ex = ChunkedExecutor(Heap(HeapConfig(object_region_chunks=8, array_region_chunks=8,
                                         stack_region_chunks=2)))
    ex.start_thread(0)
    ex.execute(0, WorkloadEvent("maybe_array", ("m", 10, 0.0, 4)))
    with pytest.raises(WorkloadError):
        ex.execute(0, WorkloadEvent("read_field", ("m", 0)))


def test_inline_collection_on_exhaustion():
    text = "thread t priority 1\n" + "alloc_obj a 8\n" * 40
    ex = make_executor(RunConfig(object_chunks=8, array_chunks=8, stack_chunks=2))
    sim, trace = run_text(ex, text)
    assert any(r.inline_gc for r in trace)
    assert check_trace(trace, sim.collector_id) == []


def test_unsatisfiable_allocation_raises():
    text = "thread t priority 1\nalloc_obj a 8\nalloc_obj b 8\nalloc_obj c 8\n"
    ex = make_executor(RunConfig(object_chunks=2, array_chunks=8, stack_chunks=2))
    with pytest.raises(OutOfChunks):
        run_text(ex, text)
