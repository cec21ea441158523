"""Adapters binding implementations to harness programs with paired oracles."""

from __future__ import annotations

from ..combining import BlockingCombining, WaitFreeCombining
from ..objects import ArrayStack, AtomicFloat, BoundedHeap, FetchIncCounter, RingQueue
from ..pmem import PMem
from ..words import float_to_word
from . import oracles
from .scheduler import Program


class CoreTarget:
    """A single combining instance over a word-state object."""

    def __init__(self, core, op_map: dict, oracle, *, state_decode=None):
        self.core = core
        self.mem = core.mem
        self.op_map = op_map
        self.oracle = oracle
        self._decode = state_decode or (lambda words: tuple(words))

    def invoke_gen(self, tid, op, arg, seq):
        return self.core.invoke(tid, self.op_map[op], arg, seq)

    def recover_gen(self, tid, op, arg, seq):
        return self.core.recover(tid, self.op_map[op], arg, seq)

    def on_crash(self):
        self.core.on_crash()

    def dump(self):
        return self._decode(self.core.current_state_words())


def _core_factory(kind: str, n: int, obj_name: str, persistence: bool, disabled=frozenset(), **kw):
    def make():
        mem = PMem(n_threads=n)
        if obj_name == "counter":
            obj = FetchIncCounter()
            op_map = {"inc": FetchIncCounter.INC}
            oracle = oracles.CounterOracle()
            decode = lambda ws: ws[0]
        elif obj_name == "atomicfloat":
            initial = kw.get("initial", 2.0)
            obj = AtomicFloat(initial)
            op_map = {"mul": AtomicFloat.MUL}
            oracle = oracles.AtomicFloatOracle(initial)
            decode = lambda ws: ws[0]
        elif obj_name == "queue":
            cap = kw.get("capacity", 8)
            obj = RingQueue(cap)
            op_map = {"enq": RingQueue.ENQ, "deq": RingQueue.DEQ}
            oracle = oracles.FifoOracle(cap)
            decode = _ring_decode(cap)
        elif obj_name == "stack":
            cap = kw.get("capacity", 8)
            obj = ArrayStack(cap)
            op_map = {"push": ArrayStack.PUSH, "pop": ArrayStack.POP}
            oracle = oracles.LifoOracle(cap)
            decode = lambda ws: tuple(ws[1:1 + ws[0]])
        elif obj_name == "heap":
            cap = kw.get("capacity", 8)
            obj = BoundedHeap(cap)
            op_map = {"insert": BoundedHeap.INSERT, "delete_min": BoundedHeap.DELETE_MIN}
            oracle = oracles.HeapOracle(cap)
            decode = lambda ws: tuple(sorted(ws[1:1 + ws[0]]))
        else:
            raise ValueError(f"unknown object {obj_name!r}")
        cls = BlockingCombining if kind == "blocking" else WaitFreeCombining
        core = cls(mem, n, obj, persistence=persistence, disabled_sites=disabled)
        return CoreTarget(core, op_map, oracle, state_decode=decode)

    return make


def _ring_decode(cap):
    def decode(ws):
        head, _tail, size = ws[0], ws[1], ws[2]
        return tuple(ws[3 + (head + i) % cap] for i in range(size))

    return decode


def core_program(
    kind: str,
    obj_name: str,
    scripts: list,
    *,
    persistence: bool = True,
    disabled=frozenset(),
    **kw,
) -> Program:
    n = len(scripts)
    return Program(
        make_target=_core_factory(kind, n, obj_name, persistence, disabled, **kw),
        scripts=scripts,
        name=f"{kind}-{obj_name}",
    )


def mul_arg(k: float) -> int:
    return float_to_word(k)
