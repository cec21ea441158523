"""Straight-line sequential oracles for the checkers.

These share no code with the concurrent implementations: plain tuples in,
plain tuples out.  States are hashable so the linearizability search can
memoize on them.  Responses use the same word encodings as the wire
(sentinels from recomb.words, float bit patterns for the float object).
"""

from __future__ import annotations

import struct

from ..words import ACK, EMPTY, FULL


class CounterOracle:
    initial = 0

    def apply(self, state, op, arg):
        if op != "inc":
            raise ValueError(op)
        return state + 1, state


class AtomicFloatOracle:
    def __init__(self, initial: float = 1.0):
        self.initial = int.from_bytes(struct.pack("<d", initial), "little")

    def apply(self, state, op, arg):
        if op != "mul":
            raise ValueError(op)
        v = struct.unpack("<d", state.to_bytes(8, "little"))[0]
        k = struct.unpack("<d", arg.to_bytes(8, "little"))[0]
        new = int.from_bytes(struct.pack("<d", v * k), "little")
        return new, state


class FifoOracle:
    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self.initial = ()

    def apply(self, state, op, arg):
        if op == "enq":
            if self.capacity is not None and len(state) == self.capacity:
                return state, FULL
            return state + (arg,), ACK
        if op == "deq":
            if not state:
                return state, EMPTY
            return state[1:], state[0]
        raise ValueError(op)


class LifoOracle:
    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self.initial = ()

    def apply(self, state, op, arg):
        if op == "push":
            if self.capacity is not None and len(state) == self.capacity:
                return state, FULL
            return state + (arg,), ACK
        if op == "pop":
            if not state:
                return state, EMPTY
            return state[:-1], state[-1]
        raise ValueError(op)


class HeapOracle:
    """Min-heap as a sorted tuple (the canonical multiset representation)."""

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self.initial = ()

    def apply(self, state, op, arg):
        if op == "insert":
            if self.capacity is not None and len(state) == self.capacity:
                return state, FULL
            return tuple(sorted(state + (arg,))), ACK
        if op == "delete_min":
            if not state:
                return state, EMPTY
            return state[1:], state[0]
        raise ValueError(op)
