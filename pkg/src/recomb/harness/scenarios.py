"""Scripted adversarial schedules reproducing specific protocol windows.

These complement the round-robin crash-point sweeps: a few failure modes
only open when one thread stalls inside a narrow instruction window while
another races ahead, which a fair scheduler never produces.
"""

from __future__ import annotations

from ..pmem import PMem
from ..words import NIL, float_to_word
from .crash import CrashPlan
from .check import check_detectable
from .scheduler import Program, RoundRobin, run
from .targets import core_program


class PhaseScheduler:
    """Grants threads according to a list of (thread, until) phases, where
    `until` is a predicate over (target, grants_in_phase); falls back to
    round-robin when the phases are exhausted."""

    def __init__(self, phases):
        self.phases = list(phases)
        self.target = None
        self._grants = 0
        self._rr = RoundRobin()

    def attach(self, target):
        self.target = target

    def choose(self, runnable, rng=None):
        while self.phases:
            tid, until = self.phases[0]
            if until(self.target, self._grants) or tid not in runnable:
                self.phases.pop(0)
                self._grants = 0
                continue
            self._grants += 1
            return tid
        return self._rr.choose(runnable)


def flush_handoff_program(disabled=frozenset()) -> Program:
    return core_program(
        "waitfree",
        "counter",
        [[("inc", 0)], [("inc", 0), ("inc", 0)], [("inc", 0), ("inc", 0)]],
        persistence=True,
        disabled=disabled,
    )


def run_flush_handoff(disabled=frozenset()):
    """Drive the published-but-undrained window: thread 0 announces, loses
    both attempts to installs whose owners stall before persisting the
    reference, passes through the help path, and responds.  A crash that
    drops every pending write-back follows.  Only the help-path persistence
    (gated by the flush handshake) makes thread 0's response durable.

    Returns the detectability verdict for the resulting history.
    """
    program = flush_handoff_program(disabled)

    def installed_and_drained(version):
        def pred(target, _g):
            core = target.core
            return (
                core.mem.vol[core.sref_base + 1] >= version
                and core.flush_is_even()
                and core.sref_persisted()
            )
        return pred

    def version_reaches(version):
        def pred(target, _g):
            return target.core.mem.vol[target.core.sref_base + 1] >= version
        return pred

    def grants(k):
        return lambda _t, g: g >= k

    phases = [
        (1, installed_and_drained(1)),   # thread 1 completes its first op
        (2, installed_and_drained(2)),   # thread 2 completes its first op
        (0, grants(3)),                  # thread 0: announce, backoff, reference read
        (1, version_reaches(3)),         # thread 1 installs again, stalls undrained
        (0, grants(2)),                  # thread 0: failed validate, re-read reference
        (2, version_reaches(4)),         # thread 2 installs again, stalls undrained
        (0, lambda _t, _g: False),       # thread 0: second failure, help path, respond
    ]

    # crash the instant thread 0 responds; locate that step by dry-running
    dry = run(program, PhaseScheduler(list(phases)))
    respond_step = next(
        ev.step for ev in dry.history if ev.kind == "respond" and ev.thread == 0
    )
    plan = CrashPlan(step=respond_step, selector="none")
    result = run(program, PhaseScheduler(list(phases)), crash_plan=plan)
    verdict = check_detectable(
        result.history, result.target.oracle, final_state=result.target.dump()
    )
    verdict.context.update({"plan": plan, "program": "flush-handoff"})
    return verdict


def unpersisted_node_program(guard_enabled: bool) -> Program:
    from ..structures import CombiningQueue

    def make():
        mem = PMem(n_threads=3)
        return CombiningQueue(mem, 3, guard_enabled=guard_enabled)

    scripts = [
        [("enq", 7), ("enq", 8)],   # thread 0: first enqueue commits, second stalls
        [("deq", 0), ("enq", 9)],   # threads 1+2: a combiner serves both dequeues
        [("deq", 0)],               # while the enqueuer's node is still volatile
    ]
    return Program(make, scripts, name="pbqueue-guard")


def run_unpersisted_node_scenario(guard_enabled: bool):
    """The appendix detectability window: an enqueue combiner has linked a
    node but not yet written it back; a dequeue combiner drains up to the
    published pre-batch tail in that window.  With the guard the second
    dequeue reports empty; without it the dequeuer hands out the
    unpersisted node, responds, and the crash erases the enqueue it came
    from — whose recovery then re-executes it."""
    program = unpersisted_node_program(guard_enabled)

    def enq1_done(target, _g):
        return target.enq.rounds >= 1 and target.mem.vol[target.enq.lock_addr] % 2 == 0

    def enq2_issued_writebacks(target, _g):
        # second combine has linked its node and issued the node/bump
        # write-backs, but none are fenced or drained yet
        old_tail = target.mem.vol[target.old_tail_addr]
        if old_tail == NIL or target.arena.peek_next(old_tail) == NIL:
            return False
        bump_line = target.arena.bump_line()
        return any(ev.line == bump_line for ev in target.mem.pending[0])

    def deq_round_done(target, _g):
        return target.deq.rounds >= 1 and target.mem.vol[target.deq.lock_addr] % 2 == 0

    def grants(k):
        return lambda _t, g: g >= k

    never = lambda _t, _g: False

    phases = [
        (0, enq1_done),               # first enqueue commits fully
        (0, enq2_issued_writebacks),  # second combine stalls mid-persist
        (1, grants(2)),               # dequeuer 1 announces and takes the lock
        (2, grants(2)),               # dequeuer 2 announces and starts waiting
        (1, deq_round_done),          # dequeuer 1 combines both dequeues, responds
        (2, never),                   # dequeuer 2 picks up its response
    ]

    dry = run(program, PhaseScheduler(list(phases)))
    respond_step = next(
        ev.step for ev in dry.history if ev.kind == "respond" and ev.thread == 2
    )

    def keep_only_bump(mem):
        # legal single-event cut: the allocation bump may complete while the
        # node write-backs issued before it are still in flight
        bump_line = program.make_target().arena.bump_line()
        return [ev.key for ev in mem.all_pending() if ev.line == bump_line]

    plan = CrashPlan(step=respond_step, selector=("fn", keep_only_bump))
    result = run(program, PhaseScheduler(list(phases)), crash_plan=plan)
    verdict = check_detectable(
        result.history, result.target.oracle, final_state=result.target.dump()
    )
    verdict.context.update(
        {"plan": plan, "guard_enabled": guard_enabled, "violations": result.target.guard_violations}
    )
    return verdict
