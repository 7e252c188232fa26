"""Arrays as fixed-fanout trees of array-region chunks.

Small arrays (payload fits one leaf) are a lone leaf with no root.  Larger
arrays get a radix tree of internal nodes above their leaves; every leaf also
points at the root and at the next payload leaf, so whole-array traversals can
walk the leaf chain instead of descending once per element.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, TypeVar

from rtheap.heap import (
    HANDLE_BYTES,
    NIL,
    ArrayHandle,
    ChunkIndex,
    Heap,
    HeapConfig,
    HeapError,
    Kind,
    OutOfChunks,
    Region,
    TypeMismatch,
    is_handle,
)

__all__ = [
    "ArrayHandle",
    "ArrayLayout",
    "ElemTooLarge",
    "IndexOutOfBounds",
    "NotContiguous",
    "alloc_array",
    "alloc_bytes",
    "array_chunks",
    "array_depth",
    "array_index",
    "array_length",
    "array_read",
    "array_write",
    "contiguous_view",
    "fold_indexed",
    "fold_leaves",
    "layout_for",
    "leaf_chain",
]

A = TypeVar("A")


class ElemTooLarge(HeapError, ValueError):
    pass


class IndexOutOfBounds(HeapError, IndexError):
    pass


class NotContiguous(HeapError):
    pass


@dataclass(frozen=True)
class ArrayLayout:
    elems_per_leaf: int
    leaf_count: int
    level_nodes: tuple[int, ...]  # internal nodes per level, bottom level first
    chunks_per_internal: int

    @property
    def depth(self) -> int:
        return len(self.level_nodes)

    @property
    def internal_chunks(self) -> int:
        return sum(self.level_nodes) * self.chunks_per_internal

    @property
    def total_chunks(self) -> int:
        return self.leaf_count + self.internal_chunks


def layout_for(config: HeapConfig, elem_size: int, n: int) -> ArrayLayout:
    leaf_bytes = config.array_leaf_payload_bytes
    if n < 0:
        raise ValueError("array length must be >= 0")
    if elem_size < 0 or (elem_size == 0 and n > 0):
        raise ValueError("elem_size must be positive for a non-empty array")
    if elem_size > leaf_bytes:
        raise ElemTooLarge(f"{elem_size}-byte elements do not fit a {leaf_bytes}-byte leaf")
    per_leaf = leaf_bytes // elem_size if elem_size else 0
    leaves = 1 if n == 0 or n <= per_leaf else -(-n // per_leaf)
    levels = []
    width = leaves
    while width > 1:
        width = -(-width // config.fanout)
        levels.append(width)
    per_internal = -(-(config.fanout * HANDLE_BYTES) // leaf_bytes)
    return ArrayLayout(per_leaf, leaves, tuple(levels), per_internal)


def alloc_array(heap: Heap, elem_size: int, n: int, *, refs: bool = False) -> ArrayHandle:
    if refs and elem_size != HANDLE_BYTES:
        raise TypeMismatch(f"reference arrays need {HANDLE_BYTES}-byte elements")
    layout = layout_for(heap.config, elem_size, n)
    need = layout.total_chunks
    st = heap.store(Region.ARRAYS)
    if st.free_count < need:
        raise OutOfChunks(f"array of {n}x{elem_size}B needs {need} chunks, {st.free_count} free")

    leaves = heap.take_chunks(Region.ARRAYS, Kind.ARRAY_LEAF, layout.leaf_count)
    next_leaf = st.next_leaf
    for a, b in zip(leaves, leaves[1:]):
        next_leaf[a] = b

    level = leaves
    fanout = heap.config.fanout
    leaf_bytes = heap.config.array_leaf_payload_bytes
    for _ in layout.level_nodes:
        parents = []
        for start in range(0, len(level), fanout):
            chunks = heap.take_chunks(Region.ARRAYS, Kind.ARRAY_INTERNAL, layout.chunks_per_internal)
            for i, (a, b) in enumerate(zip(chunks, chunks[1:])):
                st.cont[a] = b
                st.co[a] = leaf_bytes * (i + 1)
            for i, child in enumerate(level[start:start + fanout]):
                off = i * HANDLE_BYTES
                holder = chunks[off // leaf_bytes]
                slot_refs = st.refs[holder]
                if slot_refs is None:
                    slot_refs = st.refs[holder] = {}
                # Internal nodes hold raw array-region slots, not handles.
                slot_refs[off % leaf_bytes] = child
            parents.append(chunks[0])
        level = parents
    if layout.depth:
        root = level[0]
        root_ref = st.root_ref
        for leaf in leaves:
            root_ref[leaf] = root

    heap.stats.arrays_allocated += 1
    heap.stats.last_alloc_chunks = need
    heap.epoch += 1
    return ArrayHandle(ChunkIndex(Region.ARRAYS, leaves[0]), n, elem_size, refs)


def alloc_bytes(heap: Heap, data: bytes) -> ArrayHandle:
    """Byte array (a string) initialised from ``data``."""
    a = alloc_array(heap, 1, len(data))
    for leaf, chunk in zip(leaf_chain(heap, a), _leaf_slices(heap, a, data)):
        heap.chunk_payload(leaf)[:len(chunk)] = chunk
    return a


def _leaf_slices(heap: Heap, a: ArrayHandle, data: bytes) -> Iterator[bytes]:
    per_leaf = heap.config.array_leaf_payload_bytes // a.elem_size
    step = per_leaf * a.elem_size
    for start in range(0, max(len(data), 1), step):
        yield data[start:start + step]


def _locate(heap: Heap, a: ArrayHandle, i: int) -> tuple[int, int]:
    """Leaf slot and element position within the leaf, counting node visits."""
    if not 0 <= i < a.length:
        raise IndexOutOfBounds(f"index {i} outside array of length {a.length}")
    st = heap.store(Region.ARRAYS)
    first = a.first_leaf.slot
    root = st.root_ref[first]
    if root == NIL:
        heap.stats.node_visits += 1
        return first, i
    per_leaf = heap.config.array_leaf_payload_bytes // a.elem_size
    fanout = heap.config.fanout
    leaf_no, within = divmod(i, per_leaf)
    span = 1
    depth = 0
    leaves = -(-a.length // per_leaf)
    while span < leaves:
        span *= fanout
        depth += 1
    span //= fanout
    node = root
    for _ in range(depth):
        branch, leaf_no = divmod(leaf_no, span)
        node = _child_slot(st, node, branch)
        span //= fanout
    heap.stats.node_visits += depth + 1
    return node, within


def _child_slot(st, node: int, branch: int) -> int:
    off = branch * HANDLE_BYTES
    holder = node
    base = 0
    while st.cont[holder] != NIL and off >= st.co[holder]:
        base = st.co[holder]
        holder = st.cont[holder]
    return st.refs[holder][off - base]


def array_index(heap: Heap, a: ArrayHandle, i: int) -> tuple[ChunkIndex, int]:
    leaf, within = _locate(heap, a, i)
    return ChunkIndex(Region.ARRAYS, leaf), within * a.elem_size


def array_length(a: ArrayHandle) -> int:
    return a.length


def array_read(heap: Heap, a: ArrayHandle, i: int):
    leaf, within = _locate(heap, a, i)
    st = heap.store(Region.ARRAYS)
    intra = within * a.elem_size
    if a.refs:
        refs = st.refs[leaf]
        return None if refs is None else refs.get(intra)
    base = leaf * st.payload_bytes + intra
    return int.from_bytes(st.payload[base:base + a.elem_size], "little")


def array_write(heap: Heap, a: ArrayHandle, i: int, value) -> None:
    leaf, within = _locate(heap, a, i)
    st = heap.store(Region.ARRAYS)
    intra = within * a.elem_size
    if a.refs:
        if value is not None and not is_handle(value):
            raise TypeMismatch(f"reference array needs a handle, got {value!r}")
        heap.store_ref(st, leaf, intra, value)
        return
    if value is None or is_handle(value):
        raise TypeMismatch(f"word array cannot hold {value!r}")
    if not 0 <= value < 1 << (8 * a.elem_size):
        raise ValueError(f"{value} does not fit {a.elem_size} bytes")
    base = leaf * st.payload_bytes + intra
    st.payload[base:base + a.elem_size] = value.to_bytes(a.elem_size, "little")


def leaf_chain(heap: Heap, a: ArrayHandle) -> Iterator[ChunkIndex]:
    st = heap.store(Region.ARRAYS)
    slot = a.first_leaf.slot
    while slot != NIL:
        yield ChunkIndex(Region.ARRAYS, slot)
        slot = st.next_leaf[slot]


def fold_leaves(heap: Heap, a: ArrayHandle, f: Callable[[A, object], A], init: A) -> A:
    """Left fold that walks the leaf chain; one visit per leaf plus one per element."""
    st = heap.store(Region.ARRAYS)
    acc = init
    remaining = a.length
    if remaining == 0:
        return acc
    size = a.elem_size
    per_leaf = heap.config.array_leaf_payload_bytes // size
    pb = st.payload_bytes
    payload = st.payload
    slot = a.first_leaf.slot
    visits = 0
    while slot != NIL and remaining:
        visits += 1
        count = min(per_leaf, remaining)
        if a.refs:
            refs = st.refs[slot] or {}
            for k in range(count):
                acc = f(acc, refs.get(k * size))
        else:
            base = slot * pb
            for k in range(count):
                off = base + k * size
                acc = f(acc, int.from_bytes(payload[off:off + size], "little"))
        visits += count
        remaining -= count
        slot = st.next_leaf[slot]
    heap.stats.node_visits += visits
    return acc


def fold_indexed(heap: Heap, a: ArrayHandle, f: Callable[[A, object], A], init: A) -> A:
    """The textbook foldl: one top-down descent per element."""
    acc = init
    for i in range(a.length):
        acc = f(acc, array_read(heap, a, i))
    return acc


def contiguous_view(heap: Heap, a: ArrayHandle) -> memoryview:
    if a.refs:
        raise TypeMismatch("reference arrays have no byte view")
    st = heap.store(Region.ARRAYS)
    if st.root_ref[a.first_leaf.slot] != NIL:
        raise NotContiguous(f"{a.length * a.elem_size}-byte array spans several leaves")
    return heap.chunk_payload(a.first_leaf)[:a.length * a.elem_size].toreadonly()


def array_chunks(heap: Heap, a: ArrayHandle) -> tuple[list[ChunkIndex], list[ChunkIndex]]:
    """Leaves (in chain order) and internal-node chunks that make up ``a``."""
    st = heap.store(Region.ARRAYS)
    leaves = list(leaf_chain(heap, a))
    internal = []
    root = st.root_ref[a.first_leaf.slot]
    pending = [] if root == NIL else [root]
    while pending:
        node = pending.pop()
        holder = node
        while holder != NIL:
            internal.append(ChunkIndex(Region.ARRAYS, holder))
            for child in (st.refs[holder] or {}).values():
                if st.kind[child] == Kind.ARRAY_INTERNAL:
                    pending.append(child)
            holder = st.cont[holder]
    return leaves, internal


def array_depth(heap: Heap, a: ArrayHandle) -> int:
    """Measured number of internal levels between the root and the leaves."""
    st = heap.store(Region.ARRAYS)
    node = st.root_ref[a.first_leaf.slot]
    depth = 0
    while node != NIL and st.kind[node] == Kind.ARRAY_INTERNAL:
        depth += 1
        node = st.refs[node][0]
    return depth
