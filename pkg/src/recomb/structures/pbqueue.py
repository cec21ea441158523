"""Recoverable linked queue over two blocking combining instances.

Enqueuers and dequeuers synchronize independently: one instance simulates
only the tail, the other only the head, and the first list node is a
permanent dummy.  An enqueue combiner mutates list nodes directly, so it
records every node it touched and write-backs each one before the
instance's standard persistence sequence.  While it is active it publishes
the pre-batch tail in a volatile word; dequeue combiners refuse to hand
out nodes past that point, because those nodes' write-backs may not have
completed — a dequeue that returned one could survive a crash that erases
the enqueue it came from.
"""

from __future__ import annotations

from ..combining.blocking import BlockingCombining
from ..engine import PWB, R, W
from ..harness.oracles import FifoOracle
from ..pmem import PMem
from ..words import ACK, EMPTY, NIL
from .arena import NodeArena

ENQ = 1
DEQ = 2


class _TailState:
    state_words = 1

    def __init__(self, dummy_link: int):
        self.dummy_link = dummy_link

    def initial_words(self):
        return [self.dummy_link]


class _HeadState(_TailState):
    pass


class _EnqInstance(BlockingCombining):
    def __init__(self, queue: "CombiningQueue", mem, n, persistence, disabled):
        self.queue = queue
        super().__init__(
            mem, n, _TailState(queue.dummy), persistence=persistence,
            name=f"{queue.name}.enq", disabled_sites=disabled,
        )

    def _combine_prelude(self, tid, ind):
        tail = self.state_view(ind).get(0)
        yield (W, self.queue.old_tail_addr, tail)

    def _apply_one(self, tid, ind, q, func, arg):
        queue = self.queue
        arena = queue.arena
        view = self.state_view(ind)
        tail = view.get(0)
        queue.to_persist.add(tail)
        node = yield from arena.alloc(tid)
        arena.poke_data(node, arg)       # fresh node: private until linked
        arena.poke_next(node, NIL)
        yield (W, arena.next_addr(tail), node)
        view.set(0, node)
        return ACK

    def _post_serve(self, tid, ind):
        queue = self.queue
        queue.to_persist.add(self.state_view(ind).get(0))
        if self.persistence and self._site_on("nodes"):
            label = f"{self.name}/nodes"
            for link in sorted(queue.to_persist):
                yield (PWB, queue.arena.node_line(link), label)
            yield (PWB, queue.arena.bump_line(), label)

    def _post_sync(self, tid, ind):
        yield (W, self.queue.old_tail_addr, NIL)
        self.queue.to_persist.clear()


class _DeqInstance(BlockingCombining):
    def __init__(self, queue: "CombiningQueue", mem, n, persistence, disabled):
        self.queue = queue
        super().__init__(
            mem, n, _HeadState(queue.dummy), persistence=persistence,
            name=f"{queue.name}.deq", disabled_sites=disabled,
        )

    def _apply_one(self, tid, ind, q, func, arg):
        queue = self.queue
        arena = queue.arena
        view = self.state_view(ind)
        head = view.get(0)
        # fresh volatile read per request: the enqueue combiner may reset it
        old_tail = yield (R, queue.old_tail_addr)
        if queue.guard_enabled and old_tail != NIL and head == old_tail:
            return EMPTY  # nodes past this point are not persisted yet
        nxt = yield (R, arena.next_addr(head))
        if nxt == NIL:
            return EMPTY
        val = arena.peek_data(nxt)  # committed nodes are immutable
        view.set(0, nxt)
        seq = self.mem.peek(self._sa_addr(q)) >> 1
        queue.pending_node_checks[(q, seq)] = (nxt, val)
        return val


class CombiningQueue:
    """FIFO queue; harness target with paired oracle."""

    def __init__(
        self,
        mem: PMem,
        n: int,
        *,
        capacity: int = 64,
        persistence: bool = True,
        guard_enabled: bool = True,
        name: str = "pbq",
        disabled_sites: frozenset = frozenset(),
    ):
        self.mem = mem
        self.n = n
        self.name = name
        self.guard_enabled = guard_enabled
        self.arena = NodeArena(mem, capacity, name=f"{name}.arena")
        self.old_tail_addr = mem.add_region(f"{name}.oldtail", 1, persistent=False)
        self.to_persist: set[int] = set()
        self.pending_node_checks: dict = {}
        self.guard_violations: list = []
        self.dummy = self.arena.alloc_now()
        self.arena.poke_next(self.dummy, NIL)
        if persistence:
            mem.register_site(f"{name}.init")
            mem.pwb(0, self.arena.node_line(self.dummy), f"{name}.init")
            mem.pwb(0, self.arena.bump_line(), f"{name}.init")
            mem.psync(0, f"{name}.init")
        self.enq = _EnqInstance(self, mem, n, persistence, disabled_sites)
        self.deq = _DeqInstance(self, mem, n, persistence, disabled_sites)
        self.oracle = FifoOracle()

    # harness target surface ------------------------------------------------

    def invoke_gen(self, tid, op, arg, seq):
        if op == "enq":
            return self.enq.invoke(tid, ENQ, arg, seq)
        return self.deq.invoke(tid, DEQ, 0, seq)

    def recover_gen(self, tid, op, arg, seq):
        if op == "enq":
            return self.enq.recover(tid, ENQ, arg, seq)
        return self.deq.recover(tid, DEQ, 0, seq)

    def enqueue(self, tid, value, seq):
        return self.enq.invoke(tid, ENQ, value, seq)

    def dequeue(self, tid, seq):
        return self.deq.invoke(tid, DEQ, 0, seq)

    def on_crash(self):
        self.to_persist.clear()
        self.enq.on_crash()
        self.deq.on_crash()

    def respond_hook(self, tid, op, value, seq):
        if op != "deq" or value == EMPTY:
            return
        entry = self.pending_node_checks.get((tid, seq))
        if entry is None:
            return
        node, val = entry
        # the persisted snapshot must already hold the node's data
        addr = self.arena.data_addr(node)
        if self.mem.psv[addr] != val:
            self.guard_violations.append(
                {"thread": tid, "seq": seq, "value": val, "node": node}
            )

    def dump(self) -> tuple:
        head = self.deq.current_state_words()[0]
        first = self.arena.peek_next(head)
        return tuple(self.arena.chain_values(first))
