"""Scenario runner, latency records, CSV export and summaries."""

from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from rtheap import baseline as bl
from rtheap.collector import collect_full
from rtheap.heap import Heap, HeapConfig, HeapError, TypeDescriptor
from rtheap.mutator import BaselineExecutor, ChunkedExecutor, WorkloadError
from rtheap.sched import SchedError, Simulator, part_records
from rtheap.workload import parse_workload

BUILTIN_WORKLOADS = ("figure2", "mixed")


class ScenarioError(RuntimeError):
    pass


@dataclass
class LatencyRecord:
    scenario: str
    collector: str
    iteration: int
    op: str
    work_units: int
    wall_nanos: int
    chunks_touched: int
    bytes_copied: int


COLUMNS = tuple(f.name for f in fields(LatencyRecord))
_INT_COLUMNS = {"iteration", "work_units", "wall_nanos", "chunks_touched", "bytes_copied"}


@dataclass
class RunConfig:
    collector: str = "chunked"
    workload: Optional[str] = None
    seed: int = 1
    csv: Optional[str] = None
    object_chunks: int = 4096
    array_chunks: int = 147456
    stack_chunks: int = 256
    mark_budget: int = 64
    sweep_budget: int = 256
    priorities: int = 8
    suppress_wallclock: bool = False
    baseline_heap_bytes: Optional[int] = None
    gc_trigger: float = 0.25
    scenario: Optional[str] = None

    def heap_config(self) -> HeapConfig:
        return HeapConfig(object_region_chunks=self.object_chunks,
                          array_region_chunks=self.array_chunks,
                          stack_region_chunks=self.stack_chunks)

    def baseline_bytes(self) -> int:
        """Same payload budget as the chunked heap unless set explicitly."""
        if self.baseline_heap_bytes:
            return self.baseline_heap_bytes
        cfg = self.heap_config()
        return (cfg.object_region_chunks * cfg.normal_payload_bytes
                + cfg.array_region_chunks * cfg.array_leaf_payload_bytes)


def resolve_workload(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    if name_or_path in BUILTIN_WORKLOADS:
        return Path(str(resources.files("rtheap") / "workloads" / f"{name_or_path}.wl"))
    raise FileNotFoundError(name_or_path)


def make_executor(config: RunConfig):
    if config.collector == "chunked":
        return ChunkedExecutor(Heap(config.heap_config()), seed=config.seed,
                               mark_budget=config.mark_budget, sweep_budget=config.sweep_budget,
                               gc_trigger=config.gc_trigger)
    if config.collector == "baseline":
        return BaselineExecutor(bl.SemispaceHeap(config.baseline_bytes()), seed=config.seed)
    raise ValueError(f"unknown collector {config.collector!r}")


def run_simulation(config: RunConfig):
    """Run the configured workload; return (simulator, trace)."""
    path = resolve_workload(config.workload)
    programs = parse_workload(path)
    sim = Simulator(make_executor(config), priorities=config.priorities,
                    wallclock=not config.suppress_wallclock)
    scenario = config.scenario or path.stem
    try:
        for prog in programs:
            sim.spawn(prog.priority, prog.events, prog.label)
        trace = sim.run_until()
    except (HeapError, bl.OutOfMemory, SchedError, WorkloadError) as e:
        raise ScenarioError(f"{scenario} [{config.collector}] at tick {sim.tick}: {e}") from e
    return sim, trace


def run_scenario(config: RunConfig) -> list[LatencyRecord]:
    scenario = config.scenario or resolve_workload(config.workload).stem
    _, trace = run_simulation(config)
    out = []
    last = None
    for rec, part in part_records(trace):
        wall = rec.wall_nanos if rec is not last else 0
        last = rec
        out.append(LatencyRecord(scenario, config.collector, rec.iteration, part.op,
                                 part.work_units, 0 if config.suppress_wallclock else wall,
                                 part.chunks_touched, part.bytes_copied))
    return out


def run_heap_sweep(live_chunks: int = 10_000, multiples: Iterable[int] = (2, 4, 8),
                   garbage_fraction: float = 0.5) -> list[LatencyRecord]:
    """Collection cost against heap size for a fixed live set.

    The live set is a rooted chain of single-chunk objects; both swept regions
    are sized ``multiple * live_chunks``.  One gc_mark and one gc_sweep record
    is emitted per size, with the region capacity in ``chunks_touched``.
    """
    link = TypeDescriptor(16, (8,))
    out = []
    for m in multiples:
        cap = m * live_chunks
        heap = Heap(HeapConfig(object_region_chunks=cap, array_region_chunks=cap,
                               stack_region_chunks=1))
        head = None
        for _ in range(live_chunks):
            node = heap.alloc_object(link)
            if head is not None:
                heap.write_field(node, 8, head)
            head = node
        heap.set_global("live", head)
        for _ in range(int((cap - live_chunks) * garbage_fraction)):
            heap.alloc_object(link)
        stats = collect_full(heap)
        out.append(LatencyRecord("heap-sweep", "chunked", m, "gc_mark", stats.mark_work_units, 0, cap, 0))
        out.append(LatencyRecord("heap-sweep", "chunked", m, "gc_sweep", stats.sweep_work_units, 0, cap, 0))
    return out


def emit_csv(records: Iterable[LatencyRecord], path, *, suppress_wallclock: bool = False) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            row = list(astuple(r))
            if suppress_wallclock:
                row[COLUMNS.index("wall_nanos")] = 0
            w.writerow(row)


def read_csv(path) -> list[LatencyRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [LatencyRecord(**{k: int(v) if k in _INT_COLUMNS else v for k, v in row.items()})
                for row in reader]


@dataclass
class SummaryRow:
    scenario: str
    collector: str
    series: str
    count: int
    min: int
    median: float
    p99: int
    max: int
    ratio: float


def _p99(values: list[int]) -> int:
    ordered = sorted(values)
    return ordered[max(0, math.ceil(0.99 * len(ordered)) - 1)]


def _row(scenario, collector, series, values) -> SummaryRow:
    med = statistics.median(values)
    ratio = max(values) / med if med else math.inf
    return SummaryRow(scenario, collector, series, len(values), min(values), med,
                      _p99(values), max(values), ratio)


def iteration_totals(records: Iterable[LatencyRecord]) -> dict:
    """Mutator work per (scenario, collector), summed per iteration."""
    totals: dict = defaultdict(lambda: defaultdict(int))
    for r in records:
        if not r.op.startswith("gc_"):
            totals[(r.scenario, r.collector)][r.iteration] += r.work_units
    return totals


def summarize(records: Iterable[LatencyRecord]) -> list[SummaryRow]:
    records = list(records)
    rows = []
    for (scenario, collector), per_iter in iteration_totals(records).items():
        values = [per_iter[i] for i in sorted(per_iter)]
        rows.append(_row(scenario, collector, "mutator", values))
    gc: dict = defaultdict(list)
    for r in records:
        if r.op.startswith("gc_"):
            gc[(r.scenario, r.collector, r.op)].append(r.work_units)
    for (scenario, collector, op), values in gc.items():
        rows.append(_row(scenario, collector, op, values))
    return rows


def format_summary(rows: list[SummaryRow]) -> str:
    header = f"{'scenario':<12} {'collector':<9} {'series':<9} {'n':>6} {'min':>10} {'median':>12} {'p99':>10} {'max':>10} {'max/med':>8}"
    lines = [header]
    for r in rows:
        lines.append(f"{r.scenario:<12} {r.collector:<9} {r.series:<9} {r.count:>6} {r.min:>10} "
                     f"{r.median:>12.1f} {r.p99:>10} {r.max:>10} {r.ratio:>8.2f}")
    return "\n".join(lines)
