"""Chunked, non-moving heap.

The heap is split into three regions (normal objects, arrays, stacks).  Every
region is a fixed array of equally sized chunks; per-chunk bookkeeping lives in
side tables indexed by slot number instead of inline headers.  Allocation pops
chunks from a LIFO free list, so an allocated chunk keeps its slot until the
collector hands it back.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator, NamedTuple, Optional, Union

if TYPE_CHECKING:
    from rtheap.collector import CollectorState

HANDLE_BYTES = 8
WORD_BYTES = 4
WORD_LIMIT = 1 << (8 * WORD_BYTES)
NIL = -1


class HeapError(Exception):
    pass


class InvalidConfig(HeapError, ValueError):
    pass


class OutOfChunks(HeapError):
    pass


class ObjectTooLarge(HeapError, ValueError):
    pass


class OffsetOutOfBounds(HeapError, IndexError):
    pass


class TypeMismatch(HeapError, TypeError):
    pass


class OutOfStackChunks(HeapError):
    pass


class EmptyStack(HeapError):
    pass


class Region(enum.IntEnum):
    OBJECTS = 0
    ARRAYS = 1
    STACKS = 2


class Kind(enum.IntEnum):
    FREE = 0
    OBJECT_FIRST = 1
    OBJECT_CONT = 2
    ARRAY_LEAF = 3
    ARRAY_INTERNAL = 4
    STACK_FRAME = 5


class ChunkIndex(NamedTuple):
    region: Region
    slot: int


@dataclass
class HeapConfig:
    normal_payload_bytes: int = 32
    chunk_overhead_bytes: int = 12
    max_chunks_per_object: int = 2
    array_leaf_payload_bytes: int = 128
    fanout: int = 32
    object_region_chunks: int = 1024
    array_region_chunks: int = 4096
    stack_region_chunks: int = 256

    @property
    def max_object_bytes(self) -> int:
        return self.normal_payload_bytes * self.max_chunks_per_object

    def validate(self) -> None:
        for name in ("object_region_chunks", "array_region_chunks", "stack_region_chunks"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        for name in ("normal_payload_bytes", "array_leaf_payload_bytes"):
            value = getattr(self, name)
            if value <= 0 or value % HANDLE_BYTES:
                raise InvalidConfig(f"{name}={value} is not a positive multiple of {HANDLE_BYTES}")
        if self.fanout <= 1:
            raise InvalidConfig("fanout must be > 1")
        if self.max_chunks_per_object < 1:
            raise InvalidConfig("max_chunks_per_object must be >= 1")
        if self.chunk_overhead_bytes < 0:
            raise InvalidConfig("chunk_overhead_bytes must be >= 0")


@dataclass(frozen=True)
class TypeDescriptor:
    """Byte size of an object plus the offsets of its reference fields."""

    byte_size: int
    ref_offsets: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.byte_size < 0:
            raise ValueError("byte_size must be >= 0")
        object.__setattr__(self, "ref_offsets", tuple(sorted(set(self.ref_offsets))))
        for off in self.ref_offsets:
            if off < 0 or off % HANDLE_BYTES or off + HANDLE_BYTES > self.byte_size:
                raise ValueError(f"bad reference offset {off} for a {self.byte_size}-byte object")


@dataclass(frozen=True)
class ObjectHandle:
    first: ChunkIndex
    td: TypeDescriptor


@dataclass(frozen=True)
class ArrayHandle:
    """An array is passed around by its first leaf; length travels with it."""

    first_leaf: ChunkIndex
    length: int
    elem_size: int
    refs: bool = False


Handle = Union[ObjectHandle, ArrayHandle]


@dataclass(frozen=True)
class ChunkMeta:
    kind: Kind
    mark: bool
    cont: Optional[ChunkIndex]
    co: int
    free_link: Optional[ChunkIndex]


@dataclass(frozen=True)
class FreeList:
    head: Optional[ChunkIndex]
    count: int


@dataclass
class Frame:
    """Frame descriptor: the named live slots a frame contributes as roots."""

    slots: dict = field(default_factory=dict)

    def roots(self) -> Iterator[Handle]:
        for value in self.slots.values():
            if value is not None:
                yield value


class StackHandle:
    """Frames owned by one thread; each frame occupies one stack-region chunk."""

    def __init__(self, heap: Heap, owner=None):
        self.heap = heap
        self.owner = owner
        self.frames: list[tuple[ChunkIndex, Frame]] = []

    @property
    def top(self) -> Frame:
        if not self.frames:
            raise EmptyStack("stack has no frames")
        return self.frames[-1][1]

    def lookup(self, name: str):
        for _, frame in reversed(self.frames):
            if name in frame.slots:
                return frame.slots[name]
        raise KeyError(name)

    def set_slot(self, name: str, value) -> None:
        for _, frame in reversed(self.frames):
            if name in frame.slots:
                frame.slots[name] = value
                break
        else:
            self.top.slots[name] = value
        self.heap.epoch += 1

    def drop_slot(self, name: str) -> None:
        for _, frame in reversed(self.frames):
            if name in frame.slots:
                del frame.slots[name]
                self.heap.epoch += 1
                return
        raise KeyError(name)

    def roots(self) -> Iterator[Handle]:
        for _, frame in self.frames:
            yield from frame.roots()


@dataclass
class HeapStats:
    objects_allocated: int = 0
    arrays_allocated: int = 0
    chunks_allocated: int = 0
    last_alloc_chunks: int = 0
    node_visits: int = 0
    frames_pushed: int = 0
    collector_invocations: int = 0


class _RegionStore:
    __slots__ = (
        "region", "capacity", "payload_bytes", "kind", "mark", "cont", "co",
        "free_link", "next_leaf", "root_ref", "refs", "payload",
        "free_head", "free_count", "allocated",
    )

    def __init__(self, region: Region, capacity: int, payload_bytes: int):
        self.region = region
        self.capacity = capacity
        self.payload_bytes = payload_bytes
        self.kind = bytearray(capacity)
        self.mark = bytearray(capacity)
        self.cont = [NIL] * capacity
        self.co = [0] * capacity
        self.next_leaf = [NIL] * capacity
        self.root_ref = [NIL] * capacity
        self.refs: list[Optional[dict]] = [None] * capacity
        self.payload = bytearray(capacity * payload_bytes)
        # Initial chain hands out ascending slots.
        self.free_link = list(range(1, capacity)) + [NIL]
        self.free_head = 0
        self.free_count = capacity
        self.allocated = 0

    def push_free(self, slot: int) -> None:
        self.kind[slot] = Kind.FREE
        self.mark[slot] = 0
        self.cont[slot] = NIL
        self.co[slot] = 0
        self.next_leaf[slot] = NIL
        self.root_ref[slot] = NIL
        self.refs[slot] = None
        self.free_link[slot] = self.free_head
        self.free_head = slot
        self.free_count += 1
        self.allocated -= 1


class Heap:
    """Three-region chunked heap.

    ``collector`` is set by the collector while a cycle is running; the heap
    consults it for the colour of fresh chunks.  ``barrier_log`` is non-None
    only during marking and receives every reference overwritten in the heap.
    """

    def __init__(self, config: HeapConfig):
        config.validate()
        self.config = config
        self.regions = (
            _RegionStore(Region.OBJECTS, config.object_region_chunks, config.normal_payload_bytes),
            _RegionStore(Region.ARRAYS, config.array_region_chunks, config.array_leaf_payload_bytes),
            _RegionStore(Region.STACKS, config.stack_region_chunks, config.normal_payload_bytes),
        )
        self.stats = HeapStats()
        self.stacks: list[StackHandle] = []
        self.globals: dict[str, Handle] = {}
        self.collector: Optional[CollectorState] = None
        self.barrier_log: Optional[list] = None
        self.epoch = 0

    # -- chunk plumbing ---------------------------------------------------

    @property
    def max_object_bytes(self) -> int:
        return self.config.max_object_bytes

    def store(self, region: Region) -> _RegionStore:
        return self.regions[region]

    def free_count(self, region: Region) -> int:
        return self.regions[region].free_count

    def allocated_count(self, region: Region) -> int:
        return self.regions[region].allocated

    def capacity(self, region: Region) -> int:
        return self.regions[region].capacity

    def free_list(self, region: Region) -> FreeList:
        st = self.regions[region]
        head = None if st.free_head == NIL else ChunkIndex(region, st.free_head)
        return FreeList(head, st.free_count)

    def meta(self, ci: ChunkIndex) -> ChunkMeta:
        st = self.regions[ci.region]
        s = ci.slot
        cont = None if st.cont[s] == NIL else ChunkIndex(ci.region, st.cont[s])
        if st.kind[s] == Kind.FREE and st.free_link[s] != NIL:
            link = ChunkIndex(ci.region, st.free_link[s])
        else:
            link = None
        return ChunkMeta(Kind(st.kind[s]), bool(st.mark[s]), cont, st.co[s], link)

    def chunk_payload(self, ci: ChunkIndex) -> memoryview:
        st = self.regions[ci.region]
        base = ci.slot * st.payload_bytes
        return memoryview(st.payload)[base:base + st.payload_bytes]

    def take_chunk(self, region: Region, kind: Kind) -> int:
        """Pop one chunk, zero it and colour it for any running cycle."""
        return self.take_chunks(region, kind, 1)[0]

    def take_chunks(self, region: Region, kind: Kind, n: int) -> list[int]:
        st = self.regions[region]
        if st.free_count < n:
            raise OutOfChunks(f"{region.name} region: need {n}, {st.free_count} free")
        out = [NIL] * n
        head = st.free_head
        link = st.free_link
        kinds = st.kind
        payload = st.payload
        pb = st.payload_bytes
        zero = bytes(pb)
        for i in range(n):
            slot = head
            head = link[slot]
            link[slot] = NIL
            kinds[slot] = kind
            payload[slot * pb:slot * pb + pb] = zero
            out[i] = slot
        st.free_head = head
        st.free_count -= n
        st.allocated += n
        if self.collector is not None:
            marks = st.mark
            allocates_marked = self.collector.allocates_marked
            for slot in out:
                if allocates_marked(region, slot):
                    marks[slot] = 1
        self.stats.chunks_allocated += n
        return out

    def reserve(self, region: Region, n_chunks: int) -> bool:
        return self.regions[region].free_count >= n_chunks

    # -- objects ----------------------------------------------------------

    def chunks_for_object(self, td: TypeDescriptor) -> int:
        payload = self.config.normal_payload_bytes
        return max(1, -(-td.byte_size // payload))

    def alloc_object(self, td: TypeDescriptor) -> ObjectHandle:
        if td.byte_size > self.max_object_bytes:
            raise ObjectTooLarge(f"{td.byte_size} bytes exceeds {self.max_object_bytes}")
        need = self.chunks_for_object(td)
        st = self.regions[Region.OBJECTS]
        if st.free_count < need:
            raise OutOfChunks(f"need {need} object chunks, {st.free_count} free")
        slots = self.take_chunks(Region.OBJECTS, Kind.OBJECT_CONT, need)
        first = slots[0]
        st.kind[first] = Kind.OBJECT_FIRST
        for i in range(1, need):
            st.cont[slots[i - 1]] = slots[i]
            st.co[slots[i - 1]] = self.config.normal_payload_bytes * i
        self.stats.objects_allocated += 1
        self.stats.last_alloc_chunks = need
        self.epoch += 1
        return ObjectHandle(ChunkIndex(Region.OBJECTS, first), td)

    def object_chunks(self, h: ObjectHandle) -> list[ChunkIndex]:
        st = self.regions[Region.OBJECTS]
        out = [h.first]
        slot = st.cont[h.first.slot]
        while slot != NIL:
            out.append(ChunkIndex(Region.OBJECTS, slot))
            slot = st.cont[slot]
        return out

    def resolve_field(self, h: ObjectHandle, offset: int) -> tuple[ChunkIndex, int]:
        if not 0 <= offset < h.td.byte_size:
            raise OffsetOutOfBounds(f"offset {offset} outside {h.td.byte_size}-byte object")
        st = self.regions[Region.OBJECTS]
        slot = h.first.slot
        base = 0
        # Each continuation records the smallest offset that lands in it.
        while st.cont[slot] != NIL and offset >= st.co[slot]:
            base = st.co[slot]
            slot = st.cont[slot]
        if base == 0:
            return h.first, offset
        return ChunkIndex(Region.OBJECTS, slot), offset - base

    def _ref_slot(self, h: ObjectHandle, offset: int) -> Optional[bool]:
        """True if offset starts a reference field, None if it lies inside one."""
        for ro in h.td.ref_offsets:
            if ro == offset:
                return True
            if ro < offset < ro + HANDLE_BYTES:
                return None
        return False

    def read_field(self, h: ObjectHandle, offset: int):
        ci, intra = self.resolve_field(h, offset)
        st = self.regions[Region.OBJECTS]
        kind = self._ref_slot(h, offset)
        if kind is None:
            raise TypeMismatch(f"offset {offset} is inside a reference field")
        if kind:
            refs = st.refs[ci.slot]
            return None if refs is None else refs.get(intra)
        if offset % WORD_BYTES or offset + WORD_BYTES > h.td.byte_size:
            raise OffsetOutOfBounds(f"no aligned word at offset {offset}")
        base = ci.slot * st.payload_bytes + intra
        return int.from_bytes(st.payload[base:base + WORD_BYTES], "little")

    def write_field(self, h: ObjectHandle, offset: int, value) -> None:
        ci, intra = self.resolve_field(h, offset)
        st = self.regions[Region.OBJECTS]
        kind = self._ref_slot(h, offset)
        if kind is None:
            raise TypeMismatch(f"offset {offset} is inside a reference field")
        if kind:
            if value is not None and not is_handle(value):
                raise TypeMismatch(f"reference slot {offset} needs a handle, got {value!r}")
            self.store_ref(st, ci.slot, intra, value)
            return
        if is_handle(value) or value is None:
            raise TypeMismatch(f"offset {offset} holds a word, got {value!r}")
        if offset % WORD_BYTES or offset + WORD_BYTES > h.td.byte_size:
            raise OffsetOutOfBounds(f"no aligned word at offset {offset}")
        if not 0 <= value < WORD_LIMIT:
            raise ValueError(f"word value {value} out of range")
        base = ci.slot * st.payload_bytes + intra
        st.payload[base:base + WORD_BYTES] = value.to_bytes(WORD_BYTES, "little")

    def store_ref(self, st: _RegionStore, slot: int, intra: int, value) -> None:
        refs = st.refs[slot]
        if refs is None:
            refs = st.refs[slot] = {}
        old = refs.get(intra)
        if self.barrier_log is not None and old is not None:
            self.barrier_log.append(old)
        if value is None:
            refs.pop(intra, None)
        else:
            refs[intra] = value
        self.epoch += 1

    # -- stacks -----------------------------------------------------------

    def new_stack(self, owner=None) -> StackHandle:
        s = StackHandle(self, owner)
        self.stacks.append(s)
        return s

    def release_stack(self, s: StackHandle) -> None:
        while s.frames:
            self.pop_frame(s)
        self.stacks.remove(s)

    def push_frame(self, s: StackHandle, frame: Optional[Frame] = None) -> Frame:
        st = self.regions[Region.STACKS]
        if st.free_count == 0:
            raise OutOfStackChunks("stack region exhausted")
        frame = Frame() if frame is None else frame
        slot = self.take_chunk(Region.STACKS, Kind.STACK_FRAME)
        s.frames.append((ChunkIndex(Region.STACKS, slot), frame))
        self.stats.frames_pushed += 1
        self.epoch += 1
        return frame

    def pop_frame(self, s: StackHandle) -> Frame:
        if not s.frames:
            raise EmptyStack("pop on empty stack")
        ci, frame = s.frames.pop()
        self.regions[Region.STACKS].push_free(ci.slot)
        self.epoch += 1
        return frame

    # -- roots ------------------------------------------------------------

    def set_global(self, name: str, value: Optional[Handle]) -> None:
        if value is None:
            self.globals.pop(name, None)
        else:
            self.globals[name] = value
        self.epoch += 1

    def drop_global(self, name: str) -> None:
        del self.globals[name]
        self.epoch += 1

    def root_handles(self) -> Iterator[Handle]:
        yield from self.globals.values()
        for s in self.stacks:
            yield from s.roots()

    # -- verification -----------------------------------------------------

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for st in self.regions:
            h.update(bytes(st.kind))
            h.update(bytes(st.mark))
            h.update(st.payload)
            h.update(repr((st.cont, st.co, st.free_link, st.next_leaf, st.root_ref,
                           st.free_head, st.free_count, st.allocated)).encode())
            h.update(repr([sorted(r.items()) if r else None for r in st.refs]).encode())
        return h.hexdigest()

    def conserved(self, region: Region) -> bool:
        """Cheap conservation check: free-list count, kind table and counter agree."""
        st = self.regions[region]
        free_kinds = st.kind.count(Kind.FREE)
        return (st.free_count == free_kinds
                and st.free_count + st.allocated == st.capacity
                and st.capacity - free_kinds == st.allocated)

    def audit(self) -> None:
        """Walk every free list and metadata table; raise AssertionError on breakage."""
        for st in self.regions:
            seen = set()
            slot = st.free_head
            while slot != NIL:
                assert slot not in seen, f"{st.region.name}: free list cycle at {slot}"
                assert st.kind[slot] == Kind.FREE, f"{st.region.name}: non-free chunk {slot} on free list"
                seen.add(slot)
                slot = st.free_link[slot]
            assert len(seen) == st.free_count, f"{st.region.name}: free count drift"
            assert st.free_count + st.allocated == st.capacity, f"{st.region.name}: conservation"
            for s in range(st.capacity):
                k = st.kind[s]
                assert (k == Kind.FREE) == (s in seen), f"{st.region.name}: chunk {s} free-list mismatch"
                if st.cont[s] != NIL:
                    assert k in (Kind.OBJECT_FIRST, Kind.OBJECT_CONT, Kind.ARRAY_INTERNAL)
                    assert st.co[s] <= st.payload_bytes * self.config.max_chunks_per_object
                if st.mark[s]:
                    assert self.collector is not None, f"{st.region.name}: stale mark on {s}"


def is_handle(value) -> bool:
    return isinstance(value, (ObjectHandle, ArrayHandle))


def init_heap(config: Optional[HeapConfig] = None) -> Heap:
    return Heap(config or HeapConfig())
