"""Real-time memory model: chunked non-moving heap, tree arrays, slack-scheduled
mark-sweep, a moving baseline collector and a fixed-priority scheduler."""

from rtheap.heap import (
    ArrayHandle,
    ChunkIndex,
    ChunkMeta,
    Frame,
    Heap,
    HeapConfig,
    Kind,
    ObjectHandle,
    Region,
    StackHandle,
    TypeDescriptor,
    init_heap,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayHandle",
    "ChunkIndex",
    "ChunkMeta",
    "Frame",
    "Heap",
    "HeapConfig",
    "Kind",
    "ObjectHandle",
    "Region",
    "StackHandle",
    "TypeDescriptor",
    "init_heap",
]
