"""Random heap graphs mirrored by a plain-Python model, plus a reachability oracle.

The model never looks at collector state: edges and roots are tracked in
dicts as the test writes them, and reachability is a BFS over those dicts.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from rtheap.heap import Heap, HeapConfig, OutOfChunks, TypeDescriptor
from rtheap.tree_array import alloc_array, array_chunks, array_write

OBJECT_SHAPES = (
    TypeDescriptor(8, (0,)),
    TypeDescriptor(16, (0, 8)),
    TypeDescriptor(24, (8,)),
    TypeDescriptor(40, (0, 32)),
    TypeDescriptor(64, (0, 24, 40, 56)),
)


def log_uniform(rng: random.Random, lo: int, hi: int) -> int:
    return min(hi, int(math.exp(rng.uniform(math.log(lo), math.log(hi + 1)))))


@dataclass
class Node:
    handle: object
    slots: tuple
    chunks: frozenset
    is_array: bool


@dataclass
class GraphModel:
    heap: Heap
    rng: random.Random
    nodes: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)
    roots: dict = field(default_factory=dict)
    next_id: int = 0

    def new_node(self) -> int:
        rng = self.rng
        if rng.random() < 0.2:
            n = rng.randint(1, 40)
            a = alloc_array(self.heap, 8, n, refs=True)
            leaves, internal = array_chunks(self.heap, a)
            node = Node(a, tuple(range(n)), frozenset(leaves + internal), True)
        else:
            td = rng.choice(OBJECT_SHAPES)
            h = self.heap.alloc_object(td)
            node = Node(h, td.ref_offsets, frozenset(self.heap.object_chunks(h)), False)
        nid = self.next_id
        self.next_id += 1
        self.nodes[nid] = node
        self.edges[nid] = {}
        return nid

    def link(self, src: int, slot, dst) -> None:
        node = self.nodes[src]
        value = None if dst is None else self.nodes[dst].handle
        if node.is_array:
            array_write(self.heap, node.handle, slot, value)
        else:
            self.heap.write_field(node.handle, slot, value)
        if dst is None:
            self.edges[src].pop(slot, None)
        else:
            self.edges[src][slot] = dst

    def set_root(self, name: str, nid) -> None:
        self.heap.set_global(name, None if nid is None else self.nodes[nid].handle)
        if nid is None:
            self.roots.pop(name, None)
        else:
            self.roots[name] = nid

    def random_edge(self, ids=None) -> None:
        ids = list(self.nodes) if ids is None else ids
        src = self.rng.choice(ids)
        slots = self.nodes[src].slots
        if slots:
            dst = None if self.rng.random() < 0.1 else self.rng.choice(ids)
            self.link(src, self.rng.choice(slots), dst)

    def reachable(self) -> set:
        seen = set()
        todo = list(self.roots.values())
        while todo:
            nid = todo.pop()
            if nid in seen:
                continue
            seen.add(nid)
            todo.extend(self.edges[nid].values())
        return seen

    def chunks_of(self, ids) -> set:
        out = set()
        for nid in ids:
            out |= self.nodes[nid].chunks
        return out

    def forget(self, ids) -> None:
        for nid in ids:
            del self.nodes[nid]
            del self.edges[nid]


def heap_for(nodes: int) -> Heap:
    return Heap(HeapConfig(object_region_chunks=max(64, 2 * nodes + 64),
                           array_region_chunks=max(64, 2 * nodes + 64),
                           stack_region_chunks=4))


def random_graph(rng: random.Random, n_nodes: int) -> GraphModel:
    g = GraphModel(heap_for(n_nodes * 2), rng)
    for _ in range(n_nodes):
        g.new_node()
    ids = list(g.nodes)
    for _ in range(int(n_nodes * rng.uniform(0.5, 2.0))):
        g.random_edge(ids)
    for i in range(rng.randint(1, max(1, n_nodes // 20))):
        g.set_root(f"r{i}", rng.choice(ids))
    return g


def try_new_node(g: GraphModel):
    try:
        return g.new_node()
    except OutOfChunks:
        return None
