import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtheap.heap import (
    ChunkIndex,
    EmptyStack,
    Heap,
    HeapConfig,
    InvalidConfig,
    Kind,
    ObjectTooLarge,
    OffsetOutOfBounds,
    OutOfChunks,
    OutOfStackChunks,
    Region,
    TypeDescriptor,
    TypeMismatch,
    init_heap,
)


def small_heap(**kw):
    cfg = dict(object_region_chunks=16, array_region_chunks=16, stack_region_chunks=4)
    cfg.update(kw)
    return Heap(HeapConfig(**cfg))


def test_defaults():
    cfg = HeapConfig()
    assert (cfg.normal_payload_bytes, cfg.chunk_overhead_bytes, cfg.max_chunks_per_object,
            cfg.array_leaf_payload_bytes, cfg.fanout) == (32, 12, 2, 128, 32)
    assert cfg.max_object_bytes == 64
    heap = init_heap()
    for r in Region:
        assert heap.free_count(r) == heap.capacity(r)
        assert heap.allocated_count(r) == 0


@pytest.mark.parametrize("field,value", [
    ("object_region_chunks", 0),
    ("array_region_chunks", -1),
    ("normal_payload_bytes", 12),
    ("fanout", 1),
])
def test_invalid_config(field, value):
    with pytest.raises(InvalidConfig):
        Heap(HeapConfig(**{field: value}))


def test_type_descriptor_rejects_misaligned_refs():
    with pytest.raises(ValueError):
        TypeDescriptor(16, (4,))
    with pytest.raises(ValueError):
        TypeDescriptor(16, (16,))


def test_small_object_one_chunk():
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(32))
    assert heap.object_chunks(h) == [h.first]
    assert heap.meta(h.first).kind == Kind.OBJECT_FIRST
    assert heap.meta(h.first).cont is None


def test_large_object_two_chunks_and_continuation_offset():
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(48, (40,)))
    first, second = heap.object_chunks(h)
    meta = heap.meta(first)
    assert meta.cont == second and meta.co == 32
    assert heap.meta(second).kind == Kind.OBJECT_CONT
    assert heap.resolve_field(h, 0) == (first, 0)
    assert heap.resolve_field(h, 31) == (first, 31)
    assert heap.resolve_field(h, 32) == (second, 0)
    assert heap.resolve_field(h, 44) == (second, 12)


def test_object_too_large():
    heap = small_heap()
    with pytest.raises(ObjectTooLarge):
        heap.alloc_object(TypeDescriptor(65))


def test_fields_roundtrip_across_chunks():
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(64, (8, 40)))
    other = heap.alloc_object(TypeDescriptor(8))
    heap.write_field(h, 0, 0xDEADBEEF)
    heap.write_field(h, 36, 7)
    heap.write_field(h, 40, other)
    assert heap.read_field(h, 0) == 0xDEADBEEF
    assert heap.read_field(h, 36) == 7
    assert heap.read_field(h, 40) == other
    assert heap.read_field(h, 8) is None
    ci, intra = heap.resolve_field(h, 36)
    assert bytes(heap.chunk_payload(ci)[intra:intra + 4]) == (7).to_bytes(4, "little")


def test_field_errors():
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(16, (8,)))
    with pytest.raises(OffsetOutOfBounds):
        heap.read_field(h, 16)
    with pytest.raises(TypeMismatch):
        heap.write_field(h, 8, 5)
    with pytest.raises(TypeMismatch):
        heap.write_field(h, 0, h)
    with pytest.raises(TypeMismatch):
        heap.read_field(h, 12)


def test_fresh_chunks_are_zeroed():
    heap = small_heap(object_region_chunks=1)
    h = heap.alloc_object(TypeDescriptor(8))
    heap.write_field(h, 0, 99)
    heap.store(Region.OBJECTS).push_free(h.first.slot)
    h2 = heap.alloc_object(TypeDescriptor(8))
    assert h2.first == h.first
    assert heap.read_field(h2, 0) == 0


def test_free_list_is_lifo():
    heap = small_heap()
    st = heap.store(Region.OBJECTS)
    a = heap.alloc_object(TypeDescriptor(8))
    b = heap.alloc_object(TypeDescriptor(8))
    st.push_free(a.first.slot)
    st.push_free(b.first.slot)
    assert heap.free_list(Region.OBJECTS).head == b.first
    assert heap.alloc_object(TypeDescriptor(8)).first == b.first
    assert heap.alloc_object(TypeDescriptor(8)).first == a.first


def test_out_of_chunks_is_atomic():
    heap = small_heap(object_region_chunks=3)
    heap.alloc_object(TypeDescriptor(40))
    before = heap.state_hash()
    with pytest.raises(OutOfChunks):
        heap.alloc_object(TypeDescriptor(40))
    assert heap.state_hash() == before
    heap.alloc_object(TypeDescriptor(8))
    assert heap.free_count(Region.OBJECTS) == 0


def test_reserve():
    heap = small_heap(object_region_chunks=4)
    assert heap.reserve(Region.OBJECTS, 4)
    assert not heap.reserve(Region.OBJECTS, 5)


def test_stack_frames():
    heap = small_heap(stack_region_chunks=2)
    s = heap.new_stack("t")
    heap.push_frame(s)
    s.set_slot("x", heap.alloc_object(TypeDescriptor(8)))
    heap.push_frame(s)
    with pytest.raises(OutOfStackChunks):
        heap.push_frame(s)
    s.set_slot("y", None)
    assert len(list(heap.root_handles())) == 1
    heap.pop_frame(s)
    heap.pop_frame(s)
    with pytest.raises(EmptyStack):
        heap.pop_frame(s)
    assert heap.free_count(Region.STACKS) == 2


def test_globals_are_roots():
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(8))
    heap.set_global("g", h)
    assert list(heap.root_handles()) == [h]
    heap.drop_global("g")
    assert list(heap.root_handles()) == []


def test_meta_and_free_list_views():
    heap = small_heap(object_region_chunks=2)
    fl = heap.free_list(Region.OBJECTS)
    assert fl.count == 2 and fl.head == ChunkIndex(Region.OBJECTS, 0)
    heap.alloc_object(TypeDescriptor(8))
    assert heap.meta(ChunkIndex(Region.OBJECTS, 0)).free_link is None


def test_state_hash_tracks_payload():
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(8))
    before = heap.state_hash()
    heap.write_field(h, 0, 1)
    assert heap.state_hash() != before


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 64)), max_size=80))
def test_alloc_free_sequences_conserve_chunks(ops):
    heap = small_heap(object_region_chunks=24)
    live = []
    for alloc, size in ops:
        if alloc:
            try:
                live.append(heap.alloc_object(TypeDescriptor(size)))
            except OutOfChunks:
                pass
        elif live:
            h = live.pop(size % len(live))
            for ci in heap.object_chunks(h):
                heap.store(Region.OBJECTS).push_free(ci.slot)
        assert heap.conserved(Region.OBJECTS)
    heap.audit()
    used = sum(len(heap.object_chunks(h)) for h in live)
    assert heap.allocated_count(Region.OBJECTS) == used


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 64))
def test_every_offset_resolves_within_its_chunk(size):
    heap = small_heap()
    h = heap.alloc_object(TypeDescriptor(size))
    chunks = heap.object_chunks(h)
    assert len(chunks) == max(1, -(-size // 32))
    for off in range(size):
        ci, intra = heap.resolve_field(h, off)
        assert ci == chunks[off // 32] and intra == off % 32
