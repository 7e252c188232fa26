"""Moving baseline: nursery bump allocation, Cheney copies, mark-compact fallback.

Objects are addressed through an indirection table (stable id -> current space
and byte offset), so every move the collector makes is visible and counted.
Payload bytes are never materialised; a move costs its object's size in
copied bytes.

Layout: the heap has a nursery and an old generation.  A minor collection
promotes nursery survivors to the free tail of the old generation (the
to-space).  When that tail is too small, a major collection copies every live
object into a freshly allocated secondary extent, which then becomes the old
generation.  If live data after a major collection would exceed the usage
threshold, the major collection compacts in place instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

ALIGN = 8


class OutOfMemory(Exception):
    pass


class Space(enum.Enum):
    NURSERY = "nursery"
    OLD = "old"
    SECONDARY = "secondary"


def align(size: int) -> int:
    return -(-size // ALIGN) * ALIGN


@dataclass
class Extent:
    space: Space
    capacity: int
    cursor: int = 0
    residents: list = field(default_factory=list)

    @property
    def free(self) -> int:
        return self.capacity - self.cursor

    def place(self, oid: int, size: int) -> int:
        off = self.cursor
        self.cursor += size
        self.residents.append(oid)
        return off


@dataclass
class BObject:
    size: int
    ref_offsets: tuple = ()
    refs: dict = field(default_factory=dict)
    words: dict = field(default_factory=dict)


@dataclass
class MoveStats:
    objects_moved: int = 0
    bytes_copied: int = 0
    per_iteration_time: list = field(default_factory=list)
    collections: list = field(default_factory=list)

    def absorb(self, other: MoveStats) -> None:
        self.objects_moved += other.objects_moved
        self.bytes_copied += other.bytes_copied
        self.per_iteration_time.extend(other.per_iteration_time)
        self.collections.extend(other.collections)


@dataclass(frozen=True)
class CollectionEvent:
    kind: str  # "minor", "major", "compact"
    live_bytes: int
    usage: float
    bytes_copied: int


class SemispaceHeap:
    def __init__(self, capacity_bytes: int, *, nursery_fraction: float = 0.25,
                 usage_threshold: float = 0.5,
                 roots: Optional[Callable[[], Iterable[int]]] = None):
        if capacity_bytes <= 0 or not 0 < nursery_fraction < 1:
            raise ValueError("bad heap geometry")
        nursery = align(int(capacity_bytes * nursery_fraction))
        self.capacity = capacity_bytes
        self.nursery = Extent(Space.NURSERY, nursery)
        self.old_gen = Extent(Space.OLD, capacity_bytes - nursery)
        self.secondary: Optional[Extent] = None
        self.usage_threshold = usage_threshold
        self.table: dict[int, tuple[Space, int]] = {}
        self.objects: dict[int, BObject] = {}
        self.roots = roots or (lambda: ())
        self.events: list[CollectionEvent] = []
        self.last_alloc = MoveStats()
        self.minor_count = 0
        self.major_count = 0
        self.compact_count = 0
        self._next_id = 1

    @property
    def to_space(self) -> tuple[int, int]:
        """Byte extent of the old generation's free tail."""
        return self.old_gen.cursor, self.old_gen.capacity

    def usage(self) -> float:
        used = self.nursery.cursor + self.old_gen.cursor
        return used / self.capacity

    def location(self, oid: int) -> tuple[Space, int]:
        return self.table[oid]

    # -- reachability -----------------------------------------------------

    def live_set(self, roots: Optional[Iterable[int]] = None) -> set[int]:
        roots = self.roots() if roots is None else roots
        seen: set[int] = set()
        stack = [r for r in roots if r is not None]
        objects = self.objects
        while stack:
            oid = stack.pop()
            if oid in seen:
                continue
            seen.add(oid)
            stack.extend(v for v in objects[oid].refs.values() if v is not None and v not in seen)
        return seen

    def _drop_dead(self, live: set[int], extents: Iterable[Extent]) -> None:
        for ext in extents:
            for oid in ext.residents:
                if oid not in live:
                    del self.objects[oid]
                    del self.table[oid]

    # -- field access -----------------------------------------------------

    def read(self, oid: int, key):
        obj = self.objects[oid]
        if key in obj.refs or key in obj.ref_offsets:
            return obj.refs.get(key)
        return obj.words.get(key, 0)

    def write(self, oid: int, key, value, *, ref: bool = False) -> None:
        obj = self.objects[oid]
        if ref:
            if value is None:
                obj.refs.pop(key, None)
            else:
                obj.refs[key] = value
        else:
            obj.words[key] = value


def b_alloc(h: SemispaceHeap, size: int, ref_offsets: Iterable = ()) -> int:
    if size <= 0:
        raise ValueError("size must be positive")
    need = align(size)
    stats = MoveStats()
    if need > h.nursery.capacity:
        # Large objects (typically arrays) go straight to the old generation.
        if h.old_gen.free < need:
            stats.absorb(major_collect(h))
        if h.old_gen.free < need:
            raise OutOfMemory(f"{need} bytes do not fit the old generation")
        ext = h.old_gen
    else:
        if h.nursery.free < need:
            stats.absorb(minor_collect(h))
        ext = h.nursery
    oid = h._next_id
    h._next_id += 1
    h.objects[oid] = BObject(need, tuple(ref_offsets))
    h.table[oid] = (ext.space, ext.place(oid, need))
    h.last_alloc = stats
    return oid


def _copy_into(h: SemispaceHeap, target: Extent, order: Iterable[int], stats: MoveStats) -> None:
    for oid in order:
        size = h.objects[oid].size
        h.table[oid] = (target.space, target.place(oid, size))
        stats.objects_moved += 1
        stats.bytes_copied += size


def minor_collect(h: SemispaceHeap, roots: Optional[Iterable[int]] = None) -> MoveStats:
    live = h.live_set(roots)
    survivors = [oid for oid in h.nursery.residents if oid in live]
    need = sum(h.objects[oid].size for oid in survivors)
    if need > h.old_gen.free:
        return major_collect(h, live=live)
    h.minor_count += 1
    stats = MoveStats(collections=["minor"])
    _copy_into(h, h.old_gen, survivors, stats)
    h._drop_dead(live, [h.nursery])
    h.nursery = Extent(Space.NURSERY, h.nursery.capacity)
    h.events.append(CollectionEvent("minor", need, h.usage(), stats.bytes_copied))
    return stats


def major_collect(h: SemispaceHeap, roots: Optional[Iterable[int]] = None, *,
                  live: Optional[set[int]] = None) -> MoveStats:
    live = h.live_set(roots) if live is None else live
    order = [oid for ext in (h.old_gen, h.nursery) for oid in ext.residents if oid in live]
    live_bytes = sum(h.objects[oid].size for oid in order)
    h.major_count += 1
    # Usage after the collection is known once marking is done; above the
    # threshold there is no room for a second copy, so compact instead.
    if live_bytes / h.capacity > h.usage_threshold or live_bytes > h.old_gen.capacity:
        return mark_compact(h, live=live)
    stats = MoveStats(collections=["major"])
    h.secondary = Extent(Space.SECONDARY, h.old_gen.capacity)
    _copy_into(h, h.secondary, order, stats)
    h._drop_dead(live, [h.old_gen, h.nursery])
    # The secondary becomes the old generation.
    new_old = Extent(Space.OLD, h.secondary.capacity, h.secondary.cursor, h.secondary.residents)
    for oid in new_old.residents:
        h.table[oid] = (Space.OLD, h.table[oid][1])
    h.old_gen = new_old
    h.secondary = None
    h.nursery = Extent(Space.NURSERY, h.nursery.capacity)
    h.events.append(CollectionEvent("major", live_bytes, h.usage(), stats.bytes_copied))
    return stats


def mark_compact(h: SemispaceHeap, roots: Optional[Iterable[int]] = None, *,
                 live: Optional[set[int]] = None) -> MoveStats:
    live = h.live_set(roots) if live is None else live
    order = [oid for ext in (h.old_gen, h.nursery) for oid in ext.residents if oid in live]
    live_bytes = sum(h.objects[oid].size for oid in order)
    if live_bytes > h.old_gen.capacity:
        raise OutOfMemory(f"{live_bytes} live bytes exceed the old generation")
    h.compact_count += 1
    stats = MoveStats(collections=["compact"])
    h._drop_dead(live, [h.old_gen, h.nursery])
    compacted = Extent(Space.OLD, h.old_gen.capacity)
    for oid in order:
        size = h.objects[oid].size
        target = compacted.place(oid, size)
        if h.table[oid] != (Space.OLD, target):
            stats.objects_moved += 1
            stats.bytes_copied += size
        h.table[oid] = (Space.OLD, target)
    h.old_gen = compacted
    h.nursery = Extent(Space.NURSERY, h.nursery.capacity)
    h.events.append(CollectionEvent("compact", live_bytes, h.usage(), stats.bytes_copied))
    return stats
