"""Recoverable bounded min-heap over a blocking combining instance.

The whole key array lives inside the combining state record, so every
combine copies and persists it in full; throughput therefore degrades as
the configured capacity grows, which is the expected trade-off for getting
recoverability directly from the combining layer.
"""

from __future__ import annotations

from ..combining.blocking import BlockingCombining
from ..harness.oracles import HeapOracle
from ..objects import BoundedHeap
from ..pmem import PMem


class CombiningHeap:
    """Bounded min-heap; harness target with paired oracle."""

    def __init__(
        self,
        mem: PMem,
        n: int,
        *,
        capacity: int = 1024,
        persistence: bool = True,
        name: str = "pbh",
        disabled_sites: frozenset = frozenset(),
    ):
        self.mem = mem
        self.n = n
        self.name = name
        self.obj = BoundedHeap(capacity)
        self.core = BlockingCombining(
            mem, n, self.obj, persistence=persistence,
            name=f"{name}.core", disabled_sites=disabled_sites,
        )
        self.oracle = HeapOracle(capacity)

    def _func(self, op: str) -> int:
        return BoundedHeap.INSERT if op == "insert" else BoundedHeap.DELETE_MIN

    def invoke_gen(self, tid, op, arg, seq):
        return self.core.invoke(tid, self._func(op), arg, seq)

    def recover_gen(self, tid, op, arg, seq):
        return self.core.recover(tid, self._func(op), arg, seq)

    def insert(self, tid, key, seq):
        return self.core.invoke(tid, BoundedHeap.INSERT, key, seq)

    def delete_min(self, tid, seq):
        return self.core.invoke(tid, BoundedHeap.DELETE_MIN, 0, seq)

    def on_crash(self):
        self.core.on_crash()

    def dump(self) -> tuple:
        words = self.core.current_state_words()
        return tuple(sorted(words[1:1 + words[0]]))
