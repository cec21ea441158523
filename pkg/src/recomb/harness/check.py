"""Linearizability and detectable-recoverability checkers.

Both run a Wing-Gong style exhaustive search for a legal sequential
witness over the recorded history; a pass verdict embeds the witness it
found.  The detectability variant admits crash markers: an operation's
interval spans from its original invocation to whichever (possibly
post-recovery) response closed it, every operation that responded must
appear in the witness exactly once with a matching response, and — when a
final state is supplied — replaying the witness must reproduce it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .history import History


class HistoryTooLarge(Exception):
    """Exhaustive search refused; use randomized schedules instead."""


@dataclass
class OpRecord:
    thread: int
    op: str
    arg: int
    seq: int
    inv_i: int
    res_i: int | None = None
    response: int | None = None

    def label(self) -> dict:
        return {
            "thread": self.thread,
            "op": self.op,
            "args": self.arg,
            "seq": self.seq,
            "response": self.response,
        }


@dataclass
class Verdict:
    ok: bool
    reason: str = ""
    witness: list = field(default_factory=list)
    property: str = ""
    history: History | None = None
    context: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> str:
        return json.dumps(
            {
                "ok": self.ok,
                "property": self.property,
                "reason": self.reason,
                "witness": self.witness,
                "context": {k: repr(v) for k, v in self.context.items()},
                "history": [ev.as_dict() for ev in (self.history or [])],
            },
            sort_keys=True,
        )

    def human(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        out = [f"{status} [{self.property}] {self.reason}".rstrip()]
        if not self.ok and self.history is not None:
            out.append("offending history:")
            out.extend(f"  {ev.as_dict()}" for ev in self.history)
        return "\n".join(out)


def extract_ops(history: History) -> list[OpRecord]:
    ops: dict[tuple, OpRecord] = {}
    order: list[OpRecord] = []
    for i, ev in enumerate(history):
        if ev.kind == "invoke":
            rec = OpRecord(ev.thread, ev.op, ev.arg, ev.seq, inv_i=i)
            ops[(ev.thread, ev.seq)] = rec
            order.append(rec)
        elif ev.kind in ("respond", "recover_respond"):
            rec = ops[(ev.thread, ev.seq)]
            rec.res_i = i
            rec.response = ev.value
        # crash / recover_invoke do not open or close intervals
    return order


def _search(ops: list[OpRecord], oracle, final_state) -> list[OpRecord] | None:
    """Find a legal sequential ordering; None if none exists.

    Responded ops are mandatory and must reproduce their recorded response;
    unresponded ops are optional and accept any response.  When final_state
    is not None the replayed end state must equal it (optional ops may be
    included or dropped to reach it).
    """
    n = len(ops)
    full_mask = (1 << n) - 1
    required_mask = 0
    for i, op in enumerate(ops):
        if op.res_i is not None:
            required_mask |= 1 << i
    seen: set = set()

    def candidates(done: int) -> list[int]:
        min_res = None
        for i, op in enumerate(ops):
            if done >> i & 1 or op.res_i is None:
                continue
            if min_res is None or op.res_i < min_res:
                min_res = op.res_i
        out = []
        for i, op in enumerate(ops):
            if done >> i & 1:
                continue
            if min_res is None or op.inv_i < min_res:
                out.append(i)
        return out

    witness: list[OpRecord] = []

    def rec(done: int, state) -> bool:
        if done & required_mask == required_mask:
            if final_state is None or state == final_state:
                return True
            # keep scheduling optional ops to try to reach the final state
        key = (done, state)
        if key in seen:
            return False
        seen.add(key)
        for i in candidates(done):
            op = ops[i]
            try:
                new_state, resp = oracle.apply(state, op.op, op.arg)
            except ValueError:
                continue
            if op.res_i is not None and resp != op.response:
                continue
            witness.append(op)
            if rec(done | (1 << i), new_state):
                return True
            witness.pop()
        return False

    if rec(0, oracle.initial):
        return list(witness)
    return None


def check_linearizable(history: History, oracle, max_ops: int = 20) -> Verdict:
    """Exhaustive linearizability check for crash-free histories."""
    if history.crashed:
        raise ValueError("check_linearizable requires a crash-free history")
    ops = extract_ops(history)
    if len(ops) > max_ops:
        raise HistoryTooLarge(
            f"{len(ops)} operations exceed the exhaustive limit ({max_ops}); "
            "use randomized mode"
        )
    witness = _search(ops, oracle, None)
    if witness is None:
        return Verdict(
            ok=False,
            property="linearizability",
            reason="no legal sequential witness",
            history=history,
        )
    return Verdict(
        ok=True,
        property="linearizability",
        witness=[op.label() for op in witness],
    )


def check_detectable(history: History, oracle, final_state=None, max_ops: int = 20) -> Verdict:
    """Durable linearizability + detectability over a crash-bearing history."""
    ops = extract_ops(history)
    if len(ops) > max_ops:
        raise HistoryTooLarge(
            f"{len(ops)} operations exceed the exhaustive limit ({max_ops}); "
            "use randomized mode"
        )
    # detectability sanity: no op may respond twice
    responded = [ev for ev in history if ev.kind in ("respond", "recover_respond")]
    seen_ids = set()
    for ev in responded:
        op_id = (ev.thread, ev.seq)
        if op_id in seen_ids:
            return Verdict(
                ok=False,
                property="detectable-recoverability",
                reason=f"operation {op_id} responded more than once",
                history=history,
            )
        seen_ids.add(op_id)
    witness = _search(ops, oracle, final_state)
    if witness is None:
        return Verdict(
            ok=False,
            property="detectable-recoverability",
            reason="no sequential witness covers all responded operations"
            + ("" if final_state is None else " and the recovered state"),
            history=history,
            context={"final_state": final_state},
        )
    return Verdict(
        ok=True,
        property="detectable-recoverability",
        witness=[op.label() for op in witness],
    )
