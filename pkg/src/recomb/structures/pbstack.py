"""Recoverable linked stack over a single blocking combining instance.

Push and pop both move the top-of-stack link, so there is no enqueue/
dequeue split to exploit.  Pushes allocate arena nodes and link them to
the previous top inside the private node itself; existing nodes are never
mutated, so only the fresh nodes (and the allocation bump) need
write-backs, and pops need none beyond the instance's own sequence.
"""

from __future__ import annotations

from ..combining.blocking import BlockingCombining
from ..engine import PWB
from ..harness.oracles import LifoOracle
from ..pmem import PMem
from ..words import ACK, EMPTY, NIL
from .arena import NodeArena

PUSH = 1
POP = 2


class _TopState:
    state_words = 1

    def initial_words(self):
        return [NIL]


class _StackInstance(BlockingCombining):
    def __init__(self, stack: "CombiningStack", mem, n, persistence, disabled):
        self.stack = stack
        super().__init__(
            mem, n, _TopState(), persistence=persistence,
            name=f"{stack.name}.core", disabled_sites=disabled,
        )

    def _apply_one(self, tid, ind, q, func, arg):
        stack = self.stack
        arena = stack.arena
        view = self.state_view(ind)
        top = view.get(0)
        if func == PUSH:
            node = yield from arena.alloc(tid)
            arena.poke_data(node, arg)   # private node: plain writes
            arena.poke_next(node, top)
            stack.to_persist.add(node)
            view.set(0, node)
            return ACK
        if top == NIL:
            return EMPTY
        val = arena.peek_data(top)
        view.set(0, arena.peek_next(top))
        return val

    def _post_serve(self, tid, ind):
        stack = self.stack
        if self.persistence and stack.to_persist and self._site_on("nodes"):
            label = f"{self.name}/nodes"
            for link in sorted(stack.to_persist):
                yield (PWB, stack.arena.node_line(link), label)
            yield (PWB, stack.arena.bump_line(), label)

    def _post_sync(self, tid, ind):
        self.stack.to_persist.clear()
        return
        yield


class CombiningStack:
    """LIFO stack; harness target with paired oracle."""

    def __init__(
        self,
        mem: PMem,
        n: int,
        *,
        capacity: int = 64,
        persistence: bool = True,
        name: str = "pbs",
        disabled_sites: frozenset = frozenset(),
    ):
        self.mem = mem
        self.n = n
        self.name = name
        self.arena = NodeArena(mem, capacity, name=f"{name}.arena")
        self.to_persist: set[int] = set()
        self.core = _StackInstance(self, mem, n, persistence, disabled_sites)
        self.oracle = LifoOracle()

    def invoke_gen(self, tid, op, arg, seq):
        return self.core.invoke(tid, PUSH if op == "push" else POP, arg, seq)

    def recover_gen(self, tid, op, arg, seq):
        return self.core.recover(tid, PUSH if op == "push" else POP, arg, seq)

    def push(self, tid, value, seq):
        return self.core.invoke(tid, PUSH, value, seq)

    def pop(self, tid, seq):
        return self.core.invoke(tid, POP, 0, seq)

    def on_crash(self):
        self.to_persist.clear()
        self.core.on_crash()

    def dump(self) -> tuple:
        top = self.core.current_state_words()[0]
        return tuple(reversed(self.arena.chain_values(top)))
