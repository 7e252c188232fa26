import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtheap.baseline import (
    OutOfMemory,
    SemispaceHeap,
    Space,
    align,
    b_alloc,
    major_collect,
    mark_compact,
    minor_collect,
)


class Roots:
    def __init__(self):
        self.ids = []

    def __call__(self):
        return list(self.ids)


def make(capacity=1024, **kw):
    roots = Roots()
    return SemispaceHeap(capacity, roots=roots, **kw), roots


def test_align():
    assert [align(n) for n in (1, 8, 9, 16, 17)] == [8, 8, 16, 16, 24]


def test_geometry():
    h, _ = make()
    assert h.nursery.capacity == 256 and h.old_gen.capacity == 768
    assert h.to_space == (0, 768)


def test_bump_allocation_in_nursery():
    h, _ = make()
    a = b_alloc(h, 60)
    b = b_alloc(h, 8)
    assert h.location(a) == (Space.NURSERY, 0)
    assert h.location(b) == (Space.NURSERY, 64)
    assert h.last_alloc.bytes_copied == 0


def test_minor_promotes_survivors_only():
    h, roots = make()
    ids = [b_alloc(h, 64) for _ in range(4)]
    roots.ids = ids[:2]
    fresh = b_alloc(h, 64)
    assert h.minor_count == 1
    assert h.last_alloc.bytes_copied == 128
    assert [h.location(i) for i in ids[:2]] == [(Space.OLD, 0), (Space.OLD, 64)]
    assert ids[2] not in h.objects and ids[3] not in h.objects
    assert h.location(fresh) == (Space.NURSERY, 0)
    assert h.to_space == (128, 768)


def test_references_keep_objects_alive():
    h, roots = make()
    a = b_alloc(h, 16, (8,))
    b = b_alloc(h, 16)
    h.write(a, 8, b, ref=True)
    roots.ids = [a]
    minor_collect(h)
    assert b in h.objects and h.location(b)[0] is Space.OLD
    assert h.read(a, 8) == b


def test_large_objects_skip_the_nursery():
    h, _ = make()
    big = b_alloc(h, 300)
    assert h.location(big) == (Space.OLD, 0)


def test_major_copies_into_fresh_old_generation():
    h, roots = make()
    keep = b_alloc(h, 304)
    b_alloc(h, 304)
    roots.ids = [keep]
    b_alloc(h, 304)
    assert h.major_count == 1 and h.compact_count == 0
    assert h.events[-1].kind == "major"
    assert h.events[-1].bytes_copied == 304
    assert h.location(keep) == (Space.OLD, 0)


def test_compacts_above_usage_threshold():
    h, roots = make()
    a = b_alloc(h, 304)
    b = b_alloc(h, 304)
    roots.ids = [a, b]
    stats = major_collect(h)
    # 608 live bytes are 59% of the heap: no room to copy, slide instead.
    assert h.compact_count == 1
    assert stats.collections == ["compact"]
    assert stats.bytes_copied == 0
    assert [h.location(a), h.location(b)] == [(Space.OLD, 0), (Space.OLD, 304)]


def test_compaction_slides_in_order():
    h, roots = make()
    ids = [b_alloc(h, 304) for _ in range(2)]
    roots.ids = ids[1:]
    stats = mark_compact(h)
    assert h.location(ids[1]) == (Space.OLD, 0)
    assert stats.bytes_copied == 304 and stats.objects_moved == 1


def test_out_of_memory():
    h, roots = make()
    roots.ids = [b_alloc(h, 400)]
    with pytest.raises(OutOfMemory):
        b_alloc(h, 400)


def test_rejects_bad_sizes():
    h, _ = make()
    with pytest.raises(ValueError):
        b_alloc(h, 0)
    with pytest.raises(ValueError):
        SemispaceHeap(0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 200), st.booleans()), max_size=120))
def test_rooted_objects_survive_and_never_overlap(script):
    h, roots = make(4096)
    for size, keep in script:
        try:
            oid = b_alloc(h, size)
        except OutOfMemory:
            break
        if keep:
            roots.ids.append(oid)
        if len(roots.ids) > 6:
            roots.ids.pop(0)
    for oid in roots.ids:
        assert oid in h.objects
    spans = {}
    for oid, (space, off) in h.table.items():
        spans.setdefault(space, []).append((off, off + h.objects[oid].size))
    for ranges in spans.values():
        ranges.sort()
        assert all(a[1] <= b[0] for a, b in zip(ranges, ranges[1:]))
