"""Deterministic single-control-flow runner for logical threads.

Logical threads are operation generators advanced one effect per grant.
A scheduler strategy picks which runnable thread steps next; identical
inputs produce identical histories and memory logs.  Crash directives
reset volatile state through the memory model and re-enter each
interrupted operation through its recovery function with the original
arguments and sequence number.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from ..engine import BOGROW, PERSIST_KINDS, WAIT, YIELD, exec_effect
from .history import Event, History


class HarnessError(Exception):
    pass


@dataclass
class Program:
    """n logical threads, each a list of (op, arg) calls against one target."""

    make_target: Callable[[], object]
    scripts: list
    name: str = "program"

    @property
    def n(self) -> int:
        return len(self.scripts)

    @property
    def ops_per_thread(self) -> int:
        return max((len(s) for s in self.scripts), default=0)


@dataclass
class RunResult:
    history: History
    target: object
    steps: int
    notes: list = field(default_factory=list)
    op_grants: dict = field(default_factory=dict)  # (thread, seq) -> grants used


class RoundRobin:
    def __init__(self):
        self._next = 0

    def choose(self, runnable: list[int], rng=None) -> int:
        for t in runnable:
            if t >= self._next:
                self._next = t + 1
                return t
        self._next = runnable[0] + 1
        return runnable[0]


class RandomScheduler:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def choose(self, runnable: list[int], rng=None) -> int:
        return runnable[self.rng.randrange(len(runnable))]


class ExplicitSchedule:
    """Follows a literal list of thread ids / crash directives, then drains
    round-robin.  Entries naming finished threads are skipped with a note;
    entries naming blocked threads burn a spin step."""

    def __init__(self, entries):
        self.entries = list(entries)
        self.pos = 0


class _Odometer:
    """Replays a recorded choice string, extending with first-choice; used
    by the exhaustive explorer.  With a preemption budget, switching away
    from a still-runnable thread costs one preemption and the choice set
    collapses to "continue" once the budget is spent."""

    def __init__(self, choices: list[int], max_preemptions: int | None = None):
        self.choices = choices
        self.pos = 0
        self.sizes: list[int] = []
        self.budget = max_preemptions
        self.last: int | None = None

    def choose(self, runnable: list[int], rng=None) -> int:
        options = runnable
        if self.budget is not None and self.last in runnable:
            if self.budget <= 0:
                options = [self.last]
            else:
                options = [self.last] + [t for t in runnable if t != self.last]
        self.sizes.append(len(options))
        if self.pos < len(self.choices):
            idx = self.choices[self.pos]
        else:
            idx = 0
            self.choices.append(0)
        self.pos += 1
        chosen = options[idx]
        if self.budget is not None and self.last in runnable and chosen != self.last:
            self.budget -= 1
        self.last = chosen
        return chosen


class _Thread:
    __slots__ = ("gen", "eff", "op", "arg", "seq", "script_pos", "grants", "recovering")

    def __init__(self):
        self.gen = None
        self.eff = None
        self.op = None
        self.arg = None
        self.seq = 0
        self.script_pos = 0
        self.grants = 0
        self.recovering = False


def run(
    program: Program,
    scheduler,
    crash_plan=None,
    max_steps: int = 200_000,
    dfs_no_stutter: bool = False,
) -> RunResult:
    target = program.make_target()
    if hasattr(scheduler, "attach"):
        scheduler.attach(target)
    mem = target.mem
    n = program.n
    threads = [_Thread() for _ in range(n)]
    history = History()
    notes: list = []
    op_grants: dict = {}
    step = 0
    persist_seen = {"pwb": 0, "pf": 0, "ps": 0}
    pending_crashes = []
    if crash_plan is not None:
        pending_crashes = list(crash_plan.triggers())

    def spawn(t: int, recovering: bool) -> None:
        th = threads[t]
        if recovering:
            th.gen = target.recover_gen(t, th.op, th.arg, th.seq)
            kind = "recover_invoke"
        else:
            op, arg = program.scripts[t][th.script_pos]
            th.op, th.arg = op, arg
            th.seq += 1
            th.grants = 0
            th.gen = target.invoke_gen(t, op, arg, th.seq)
            kind = "invoke"
        th.recovering = recovering
        history.append(Event(step, t, kind, th.op, th.arg, th.seq))
        _prime(t)

    def _prime(t: int) -> None:
        th = threads[t]
        try:
            th.eff = th.gen.send(None)
        except StopIteration as stop:  # zero-effect op (not expected)
            _respond(t, stop.value)

    def _respond(t: int, value) -> None:
        th = threads[t]
        kind = "recover_respond" if th.recovering else "respond"
        history.append(Event(step, t, kind, th.op, th.arg, th.seq, value))
        op_grants[(t, th.seq)] = th.grants
        hook = getattr(target, "respond_hook", None)
        if hook is not None:
            hook(t, th.op, value, th.seq)
        th.gen = None
        th.eff = None
        th.recovering = False
        th.script_pos += 1
        if th.script_pos < len(program.scripts[t]):
            spawn(t, recovering=False)

    def _runnable() -> list[int]:
        out = []
        for t, th in enumerate(threads):
            if th.gen is None:
                continue
            eff = th.eff
            if eff[0] == WAIT and mem.vol[eff[1]] == eff[2]:
                continue
            out.append(t)
        return out

    def _grant(t: int) -> None:
        nonlocal step
        th = threads[t]
        eff = th.eff
        step += 1
        th.grants += 1
        kind = eff[0]
        if kind == "pwb":
            persist_seen["pwb"] += 1
        elif kind == "pf":
            persist_seen["pf"] += 1
        elif kind == "ps":
            persist_seen["ps"] += 1
        res = exec_effect(mem, t, eff)
        try:
            th.eff = th.gen.send(res)
        except StopIteration as stop:
            _respond(t, stop.value)

    def _crash(selector) -> None:
        mem.crash(selector)
        if hasattr(target, "on_crash"):
            target.on_crash()
        history.append(Event(step, None, "crash"))
        for t, th in enumerate(threads):
            if th.gen is not None:
                th.gen.close()
                spawn(t, recovering=True)

    def _check_triggers() -> None:
        if not pending_crashes:
            return
        trig = pending_crashes[0]
        kind, at, selector = trig
        fired = False
        if kind == "step" and step >= at:
            fired = True
        elif kind in ("pwb", "pf", "ps") and persist_seen[kind] >= at:
            fired = True
        elif kind == "after_crash_steps" and mem.crashes > 0:
            # armed relative to the first crash; rewrite to absolute step
            pending_crashes[0] = ("step", step + at, selector)
            return
        if fired:
            pending_crashes.pop(0)
            _crash(selector)

    for t in range(n):
        if program.scripts[t]:
            spawn(t, recovering=False)

    explicit = isinstance(scheduler, ExplicitSchedule)
    drain = RoundRobin() if explicit else None

    while True:
        if all(th.gen is None for th in threads):
            break
        if step >= max_steps:
            raise HarnessError(f"exceeded {max_steps} steps (livelock?)")
        runnable = _runnable()
        if not runnable:
            raise HarnessError("deadlock: live threads are all blocked")

        if dfs_no_stutter:
            # no-op effects don't branch the exploration: auto-grant them
            stuttered = True
            while stuttered:
                stuttered = False
                for t in list(runnable):
                    th = threads[t]
                    if th.gen is not None and th.eff[0] in (YIELD, BOGROW):
                        _grant(t)
                        _check_triggers()
                        stuttered = True
                runnable = _runnable()
                if not runnable:
                    break
            if not runnable:
                continue

        if explicit:
            t = None
            while scheduler.pos < len(scheduler.entries):
                entry = scheduler.entries[scheduler.pos]
                scheduler.pos += 1
                if isinstance(entry, tuple) and entry and entry[0] == "crash":
                    _crash(entry[1])
                    t = None
                    break
                if threads[entry].gen is None:
                    notes.append(f"step {step}: schedule names finished thread {entry}; skipped")
                    continue
                t = entry
                break
            else:
                t = drain.choose(runnable)
            if t is None:
                continue
            th = threads[t]
            if th.eff[0] == WAIT and mem.vol[th.eff[1]] == th.eff[2]:
                step += 1  # busy-wait spin burns the scheduling slot
                continue
        else:
            t = scheduler.choose(runnable)

        _grant(t)
        _check_triggers()

    return RunResult(history=history, target=target, steps=step, notes=notes, op_grants=op_grants)


def run_schedule(program: Program, schedule, crash_plan=None, max_steps: int = 200_000) -> History:
    """Run under an explicit schedule (list of thread ids / ("crash", sel))
    or a seeded random schedule; returns the recorded history."""
    if isinstance(schedule, int):
        sched = RandomScheduler(schedule)
    elif isinstance(schedule, (list, tuple)):
        sched = ExplicitSchedule(schedule)
    else:
        sched = schedule
    return run(program, sched, crash_plan=crash_plan, max_steps=max_steps).history


class ExplorationOverflow(Exception):
    def __init__(self, paths: int):
        super().__init__(f"exploration exceeded {paths} paths")
        self.paths = paths


def explore_all_schedules(
    program_factory: Callable[[], Program],
    max_paths: int = 2_000_000,
    max_preemptions: int | None = None,
):
    """Exhaustive DFS over scheduler choices at model-step granularity.

    Yields one RunResult per maximal schedule.  Threads blocked on a busy
    wait are not granted (stepping them is a no-op), and pure backoff steps
    do not branch, which keeps the tree finite and non-redundant.  With
    `max_preemptions` set, the sweep covers every schedule with at most
    that many forced context switches (never-blocking algorithms have a
    step-interleaving space far too large to enumerate outright).
    """
    choices: list[int] = []
    paths = 0
    while True:
        odo = _Odometer(list(choices), max_preemptions)
        result = run(program_factory(), odo, dfs_no_stutter=True)
        paths += 1
        if paths > max_paths:
            raise ExplorationOverflow(max_paths)
        yield result
        # advance odometer: bump the last position that still has headroom
        choices = odo.choices
        sizes = odo.sizes
        i = len(choices) - 1
        while i >= 0 and choices[i] + 1 >= sizes[i]:
            i -= 1
        if i < 0:
            return
        choices = choices[:i] + [choices[i] + 1]
