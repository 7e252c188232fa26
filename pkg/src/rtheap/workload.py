"""Workload scripts and the benchmark's pseudo-random source.

A workload file is line oriented::

    # comment
    thread <label> priority <p>
    alloc_obj <var> <size> [refs=<off>,<off>...]
    alloc_array <var> <elem_size> <n> [refs]
    write_field <var> <offset> <int|var|null>
    read_field <var> <offset>
    write_elem <var> <index> <int|var|null>
    read_elem <var> <index>
    drop <var>
    push_frame
    pop_frame
    compute <work_units>
    block_io <ticks>
    maybe_array <var> <n> <p> [elem=<bytes>]

Variables live in the current frame of their thread; ``pop_frame`` unbinds
everything bound since the matching ``push_frame``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

MASK64 = (1 << 64) - 1
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class UnboundHandle(ParseError):
    pass


class XorShift64Star:
    """xorshift64* (shifts 12/25/27, multiplier 0x2545F4914F6CDD1D).

    A zero seed is replaced by 0x9E3779B97F4A7C15 since the all-zero state is
    a fixed point.  ``uniform`` takes the top 53 bits of the output.
    """

    def __init__(self, seed: int):
        self.state = (seed & MASK64) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class Var:
    name: str


Value = Union[int, Var, None]


@dataclass(frozen=True)
class WorkloadEvent:
    op: str
    args: tuple = ()
    line: int = 0


@dataclass
class ThreadProgram:
    label: str
    priority: int
    events: list = field(default_factory=list)


def _int(tok: str, line: int, what: str) -> int:
    try:
        value = int(tok, 0)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {tok!r}", line) from None
    if value < 0:
        raise ParseError(f"{what} must be >= 0", line)
    return value


def _name(tok: str, line: int) -> str:
    if not _IDENT.match(tok) or tok == "null":
        raise ParseError(f"bad variable name {tok!r}", line)
    return tok


class _Scopes:
    def __init__(self):
        self.frames: list[set[str]] = [set()]

    def bind(self, name: str) -> None:
        if not any(name in f for f in self.frames):
            self.frames[-1].add(name)

    def need(self, name: str, line: int) -> None:
        if not any(name in f for f in self.frames):
            raise UnboundHandle(f"variable {name!r} is not bound", line)

    def drop(self, name: str, line: int) -> None:
        for f in reversed(self.frames):
            if name in f:
                f.remove(name)
                return
        raise UnboundHandle(f"variable {name!r} is not bound", line)


def _value(tok: str, scopes: _Scopes, line: int) -> Value:
    if tok == "null":
        return None
    if _IDENT.match(tok):
        scopes.need(tok, line)
        return Var(tok)
    try:
        value = int(tok, 0)
    except ValueError:
        raise ParseError(f"bad value {tok!r}", line) from None
    if value < 0:
        raise ParseError("values must be >= 0", line)
    return value


def _parse_event(toks: list[str], scopes: _Scopes, line: int) -> WorkloadEvent:
    op, rest = toks[0], toks[1:]

    def arity(lo, hi=None):
        hi = lo if hi is None else hi
        if not lo <= len(rest) <= hi:
            raise ParseError(f"{op} takes {lo}..{hi} arguments, got {len(rest)}", line)

    if op == "alloc_obj":
        arity(2, 3)
        name = _name(rest[0], line)
        size = _int(rest[1], line, "size")
        refs: tuple = ()
        if len(rest) == 3:
            if not rest[2].startswith("refs="):
                raise ParseError(f"expected refs=..., got {rest[2]!r}", line)
            body = rest[2][5:]
            refs = tuple(_int(t, line, "ref offset") for t in body.split(",") if t)
        scopes.bind(name)
        return WorkloadEvent(op, (name, size, refs), line)
    if op == "alloc_array":
        arity(3, 4)
        name = _name(rest[0], line)
        elem = _int(rest[1], line, "elem_size")
        n = _int(rest[2], line, "length")
        is_ref = False
        if len(rest) == 4:
            if rest[3] != "refs":
                raise ParseError(f"expected 'refs', got {rest[3]!r}", line)
            is_ref = True
        scopes.bind(name)
        return WorkloadEvent(op, (name, elem, n, is_ref), line)
    if op in ("write_field", "write_elem"):
        arity(3)
        name = _name(rest[0], line)
        scopes.need(name, line)
        return WorkloadEvent(op, (name, _int(rest[1], line, "offset"), _value(rest[2], scopes, line)), line)
    if op in ("read_field", "read_elem"):
        arity(2)
        name = _name(rest[0], line)
        scopes.need(name, line)
        return WorkloadEvent(op, (name, _int(rest[1], line, "offset")), line)
    if op == "drop":
        arity(1)
        name = _name(rest[0], line)
        scopes.drop(name, line)
        return WorkloadEvent(op, (name,), line)
    if op == "push_frame":
        arity(0)
        scopes.frames.append(set())
        return WorkloadEvent(op, (), line)
    if op == "pop_frame":
        arity(0)
        if len(scopes.frames) == 1:
            raise ParseError("pop_frame without matching push_frame", line)
        scopes.frames.pop()
        return WorkloadEvent(op, (), line)
    if op in ("compute", "block_io"):
        arity(1)
        return WorkloadEvent(op, (_int(rest[0], line, "amount"),), line)
    if op == "maybe_array":
        arity(3, 4)
        name = _name(rest[0], line)
        n = _int(rest[1], line, "length")
        try:
            p = float(rest[2])
        except ValueError:
            raise ParseError(f"probability must be a number, got {rest[2]!r}", line) from None
        if not 0.0 <= p <= 1.0:
            raise ParseError("probability must be within [0, 1]", line)
        elem = 4
        if len(rest) == 4:
            if not rest[3].startswith("elem="):
                raise ParseError(f"expected elem=..., got {rest[3]!r}", line)
            elem = _int(rest[3][5:], line, "elem")
        scopes.bind(name)
        return WorkloadEvent(op, (name, n, p, elem), line)
    raise ParseError(f"unknown operation {op!r}", line)


def parse_workload_text(text: str) -> list[ThreadProgram]:
    programs: list[ThreadProgram] = []
    scopes = _Scopes()
    labels = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if toks[0] == "thread":
            if len(toks) != 4 or toks[2] != "priority":
                raise ParseError("expected 'thread <label> priority <p>'", lineno)
            if toks[1] in labels:
                raise ParseError(f"duplicate thread {toks[1]!r}", lineno)
            labels.add(toks[1])
            programs.append(ThreadProgram(toks[1], _int(toks[3], lineno, "priority")))
            scopes = _Scopes()
            continue
        if not programs:
            raise ParseError("event before any thread header", lineno)
        programs[-1].events.append(_parse_event(toks, scopes, lineno))
    return programs


def parse_workload(path) -> list[ThreadProgram]:
    return parse_workload_text(Path(path).read_text(encoding="utf-8"))
