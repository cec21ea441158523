"""Contiguous persistent pool of singly-linked list nodes.

Nodes are two words (data, next) and are never reused; allocation bumps a
persistent index.  Links are crash-stable arena indices, not addresses:
a link word is (index+1) << 1 with the low bit reserved as a transient
mark, so zero-initialized (or crash-cleared) memory reads as "no link".
"""

from __future__ import annotations

from ..engine import FAA
from ..pmem import MemoryFault, PMem
from ..words import NIL, WORDS_PER_LINE


def mark(link: int) -> int:
    return link | 1


def unmark(link: int) -> int:
    return link & ~1


def is_marked(link: int) -> bool:
    return bool(link & 1)


class NodeArena:
    NODE_WORDS = 2

    def __init__(self, mem: PMem, capacity: int, name: str = "arena"):
        self.mem = mem
        self.capacity = capacity
        lines = -(-capacity * self.NODE_WORDS // WORDS_PER_LINE)
        self.base = mem.add_region(f"{name}.nodes", lines)
        self.bump_addr = mem.add_region(f"{name}.bump", 1)

    # links ---------------------------------------------------------------

    def link_for(self, index: int) -> int:
        return (index + 1) << 1

    def index_of(self, link: int) -> int:
        return (unmark(link) >> 1) - 1

    def data_addr(self, link: int) -> int:
        return self.base + self.NODE_WORDS * self.index_of(link)

    def next_addr(self, link: int) -> int:
        return self.data_addr(link) + 1

    def node_line(self, link: int) -> int:
        return self.mem.line_of(self.data_addr(link))

    def bump_line(self) -> int:
        return self.mem.line_of(self.bump_addr)

    # allocation ----------------------------------------------------------

    def alloc(self, tid: int):
        """Allocate one node; generator (the bump is a shared fetch-and-add).
        Crash-leaked nodes are never reclaimed."""
        index = yield (FAA, self.bump_addr, 1)
        if index >= self.capacity:
            raise MemoryFault(f"arena exhausted ({self.capacity} nodes)")
        return self.link_for(index)

    def alloc_now(self, index_hint=None) -> int:
        """Construction-time allocation (no scheduler steps)."""
        index = self.mem.peek(self.bump_addr)
        if index >= self.capacity:
            raise MemoryFault(f"arena exhausted ({self.capacity} nodes)")
        self.mem.poke(self.bump_addr, index + 1)
        return self.link_for(index)

    # node accessors (private-node writes take no scheduler step) ----------

    def poke_data(self, link: int, w: int) -> None:
        self.mem.poke(self.data_addr(link), w)

    def poke_next(self, link: int, w: int) -> None:
        self.mem.poke(self.next_addr(link), w)

    def peek_data(self, link: int) -> int:
        return self.mem.peek(self.data_addr(link))

    def peek_next(self, link: int) -> int:
        return self.mem.peek(self.next_addr(link))

    def chain_values(self, first: int, stop_at: int = NIL) -> list[int]:
        """Follow next pointers from `first`, unmarking as needed."""
        out = []
        link = unmark(first)
        while link != NIL and link != stop_at:
            out.append(self.peek_data(link))
            link = unmark(self.peek_next(link))
        return out
