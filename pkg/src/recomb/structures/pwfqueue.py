"""Recoverable wait-free linked queue over two wait-free combining instances.

An enqueue combiner builds its batch as a private local list and publishes
it abstractly by installing a record that carries three links: the tail it
extended from, the first node of the local list, and the new tail.  The
physical splice of the previous batch (old-tail.next := its first node)
happens lazily, by the next enqueue combiner before it serves and by any
dequeuer that finds the head chain exhausted.  The splice is CASed in with
the link's mark bit set; whoever connects on the enqueue side must also
write the link back and may then clear the mark ("only for performance"),
while dequeuers deliberately skip the write-back: once a dequeue that
passed the link persists its own head, the spliced node is never visited
again.
"""

from __future__ import annotations

from ..combining.waitfree import WaitFreeCombining
from ..engine import CAS, LL, PWB, R, RMANY, W
from ..harness.oracles import FifoOracle
from ..pmem import PMem
from ..words import ACK, EMPTY, NIL
from .arena import NodeArena, is_marked, mark, unmark

ENQ = 1
DEQ = 2

# enqueue-side record state layout
TAIL = 0
OLD_TAIL = 1
LOCAL_HEAD = 2


class _EnqState:
    state_words = 3

    def __init__(self, dummy_link: int):
        self.dummy = dummy_link

    def initial_words(self):
        return [self.dummy, NIL, NIL]


class _HeadState:
    state_words = 1

    def __init__(self, dummy_link: int):
        self.dummy = dummy_link

    def initial_words(self):
        return [self.dummy]


class _WFEnqInstance(WaitFreeCombining):
    def __init__(self, queue: "WaitFreeQueue", mem, n, persistence, disabled):
        self.queue = queue
        super().__init__(
            mem, n, _EnqState(queue.dummy), persistence=persistence,
            name=f"{queue.name}.enq", disabled_sites=disabled,
        )
        self.pre_serve_step_bound = 4
        self.apply_step_bound = 1
        self.persist_step_bound = n + 2  # batch nodes + bump + connect pwb

    def _pre_serve(self, tid, rec, attempt):
        # complete (and persist) the previous batch's splice before serving
        yield from self._connect(tid, rec)
        view = self.state_view(rec)
        view.set(OLD_TAIL, NIL)
        view.set(LOCAL_HEAD, NIL)

    def _connect(self, tid, rec):
        queue = self.queue
        arena = queue.arena
        view = self.state_view(rec)
        old_tail = view.get(OLD_TAIL)
        if old_tail == NIL:
            return
        nxt = yield (R, arena.next_addr(old_tail))
        if nxt == NIL:
            yield (CAS, arena.next_addr(old_tail), NIL, mark(view.get(LOCAL_HEAD)))
            nxt = yield (R, arena.next_addr(old_tail))
        if is_marked(nxt):
            # the splice must be durable before this side publishes again
            if self.persistence and self._site_on("connect"):
                yield (PWB, arena.node_line(old_tail), f"{self.name}/connect")
            yield (W, arena.next_addr(old_tail), unmark(nxt))  # only for performance

    def _apply_one(self, tid, rec, q, func, arg, attempt):
        queue = self.queue
        arena = queue.arena
        view = self.state_view(rec)
        node = yield from arena.alloc(tid)
        arena.poke_data(node, arg)
        arena.poke_next(node, NIL)
        attempt.new_items.add(node)
        if view.get(OLD_TAIL) == NIL:
            # first node of the batch: defer the splice, remember its ends
            view.set(OLD_TAIL, view.get(TAIL))
            view.set(LOCAL_HEAD, node)
        else:
            arena.poke_next(view.get(TAIL), node)  # private local-list link
        view.set(TAIL, node)
        return ACK

    def _pre_record_pwbs(self, tid, rec, attempt):
        if not self._site_on("nodes"):
            return
        label = f"{self.name}/nodes"
        arena = self.queue.arena
        for link in sorted(attempt.new_items):
            yield (PWB, arena.node_line(link), label)
        yield (PWB, arena.bump_line(), label)


class _WFDeqInstance(WaitFreeCombining):
    def __init__(self, queue: "WaitFreeQueue", mem, n, persistence, disabled):
        self.queue = queue
        super().__init__(
            mem, n, _HeadState(queue.dummy), persistence=persistence,
            name=f"{queue.name}.deq", disabled_sites=disabled,
        )
        self.apply_step_bound = 8

    def _apply_one(self, tid, rec, q, func, arg, attempt):
        queue = self.queue
        arena = queue.arena
        view = self.state_view(rec)
        head = view.get(0)
        nxt = yield (R, arena.next_addr(head))
        if nxt == NIL:
            yield from self._dequeue_connect(tid)
            nxt = yield (R, arena.next_addr(head))
        if nxt == NIL:
            return EMPTY
        nxt = unmark(nxt)  # traversal unmarks locally, never writes it back
        val = arena.peek_data(nxt)
        view.set(0, nxt)
        seq = self.mem.peek(self._sa_addr(q)) >> 1
        queue.pending_node_checks[(q, seq)] = (nxt, val)
        return val

    def _dequeue_connect(self, tid):
        """Splice the two list parts using the enqueue side's published record."""
        enq = self.queue.enq
        arena = self.queue.arena
        h, ver = yield (LL, enq.sref_base)
        base = enq._rec_base(h) + enq.state_off
        old_tail, local_head = yield (RMANY, (base + OLD_TAIL, base + LOCAL_HEAD))
        cur_ver = yield (R, enq.sref_base + 1)
        if cur_ver != ver or old_tail == NIL:
            return
        nxt = yield (R, arena.next_addr(old_tail))
        if nxt == NIL:
            yield (CAS, arena.next_addr(old_tail), NIL, mark(local_head))


class WaitFreeQueue:
    """Wait-free FIFO queue; harness target with paired oracle."""

    def __init__(
        self,
        mem: PMem,
        n: int,
        *,
        capacity: int = 64,
        persistence: bool = True,
        name: str = "pwfq",
        disabled_sites: frozenset = frozenset(),
    ):
        self.mem = mem
        self.n = n
        self.name = name
        self.arena = NodeArena(mem, capacity, name=f"{name}.arena")
        self.pending_node_checks: dict = {}
        self.guard_violations: list = []
        self.dummy = self.arena.alloc_now()
        self.arena.poke_next(self.dummy, NIL)
        if persistence:
            mem.register_site(f"{name}.init")
            mem.pwb(0, self.arena.node_line(self.dummy), f"{name}.init")
            mem.pwb(0, self.arena.bump_line(), f"{name}.init")
            mem.psync(0, f"{name}.init")
        self.enq = _WFEnqInstance(self, mem, n, persistence, disabled_sites)
        self.deq = _WFDeqInstance(self, mem, n, persistence, disabled_sites)
        self.oracle = FifoOracle()

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
        self.enq.on_crash()
        self.deq.on_crash()

    def respond_hook(self, tid, op, value, seq):
        if op != "deq" or value == EMPTY:
            return
        entry = self.pending_node_checks.get((tid, seq))
        if entry is None:
            return
        node, val = entry
        if self.mem.psv[self.arena.data_addr(node)] != val:
            self.guard_violations.append(
                {"thread": tid, "seq": seq, "value": val, "node": node}
            )

    def dump(self) -> tuple:
        """Abstract queue contents: the head-side chain plus, when the last
        batch is not yet spliced, the enqueue side's local list."""
        arena = self.arena
        head = self.deq.current_state_words()[0]
        values = []
        last = head
        link = unmark(arena.peek_next(head))
        while link != NIL:
            values.append(arena.peek_data(link))
            last = link
            link = unmark(arena.peek_next(link))
        ews = self.enq.current_state_words()
        old_tail, local_head = ews[OLD_TAIL], ews[LOCAL_HEAD]
        if old_tail != NIL and old_tail == last and arena.peek_next(old_tail) == NIL:
            values.extend(arena.chain_values(local_head))
        return tuple(values)
