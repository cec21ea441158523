"""Adversarial crash injection: plan enumeration and the detectability sweep.

A plan crashes after a given scheduler step with a chosen write-back
selection, optionally chaining a second crash during recovery.  Plans are
enumerated against a deterministic dry run: one per (step x selector); the
per-persistence-instruction crash points coincide with the steps that
executed those instructions, so they add no extra plans.  With
``partial_cuts`` enabled, every legal partial selection of the pending
write-backs at each step is planned too — the all/none extremes always
respect issue order, and the reordering cases they can never produce are
precisely what the ordering fences exist to rule out.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..engine import exec_effect
from .check import check_detectable
from .scheduler import Program, RoundRobin, run


@dataclass(frozen=True)
class CrashPlan:
    step: int
    selector: object                 # "all" | "none" | ("explicit", keys)
    nested: tuple | None = None      # (steps_after_crash, selector)
    note: str = ""

    def triggers(self) -> list[tuple]:
        out = [("step", self.step, self.selector)]
        if self.nested is not None:
            out.append(("after_crash_steps", self.nested[0], self.nested[1]))
        return out


@dataclass
class SweepReport:
    plans: int = 0
    failures: list = field(default_factory=list)  # (CrashPlan, Verdict)

    @property
    def ok(self) -> bool:
        return not self.failures


def enumerate_crash_points(
    program: Program,
    *,
    selectors=("all", "none"),
    partial_cuts: bool = False,
    cut_limit: int = 64,
    nested: bool = False,
    seed: int = 0,
    max_threads: int = 3,
    max_ops: int = 2,
) -> list[CrashPlan]:
    """Enumerate crash plans for a small program.

    Bounds follow the harness contract: at most `max_threads` threads and
    `max_ops` operations per thread; larger configs are refused.
    """
    if program.n > max_threads or program.ops_per_thread > max_ops:
        raise ValueError(
            f"refusing to enumerate: {program.n} threads x "
            f"{program.ops_per_thread} ops exceeds {max_threads}x{max_ops}"
        )
    total_steps = run(program, RoundRobin()).steps
    rng = random.Random(seed)
    cuts_by_step = _collect_cuts(program, cut_limit) if partial_cuts else {}
    plans: list[CrashPlan] = []
    for step in range(1, total_steps + 1):
        step_selectors = list(selectors)
        for cut in cuts_by_step.get(step, ()):
            step_selectors.append(("explicit", cut))
        for sel in step_selectors:
            nested_spec = None
            if nested:
                nested_spec = (rng.randrange(1, 40), rng.choice(["all", "none"]))
            plans.append(CrashPlan(step=step, selector=sel, nested=nested_spec))
    return plans


def _collect_cuts(program: Program, cut_limit: int) -> dict[int, list]:
    """Replay the dry run one grant at a time, recording the legal partial
    selections of the pending write-backs after each step."""
    out: dict[int, list] = {}
    target = program.make_target()
    mem = target.mem
    sched = RoundRobin()
    gens: dict = {}
    effs: dict = {}
    seqs = [0] * program.n
    pos = [0] * program.n

    def spawn(t: int) -> None:
        seqs[t] += 1
        op, arg = program.scripts[t][pos[t]]
        gens[t] = target.invoke_gen(t, op, arg, seqs[t])
        effs[t] = gens[t].send(None)

    for t in range(program.n):
        if program.scripts[t]:
            spawn(t)
    step = 0
    while gens:
        runnable = sorted(
            t for t, eff in effs.items()
            if not (eff[0] == "wait" and mem.vol[eff[1]] == eff[2])
        )
        if not runnable:
            break
        t = sched.choose(runnable)
        step += 1
        res = exec_effect(mem, t, effs[t])
        try:
            effs[t] = gens[t].send(res)
        except StopIteration:
            del gens[t], effs[t]
            pos[t] += 1
            if pos[t] < len(program.scripts[t]):
                spawn(t)
        pending = mem.all_pending()
        if not pending:
            continue
        sels = mem.legal_selections(limit=cut_limit)
        if sels is None:
            # too many to enumerate: take a deterministic random sample
            sels = sorted(
                {mem._select(("random", step * 8191 + i), None) for i in range(8)},
                key=sorted,
            )
        full = frozenset(ev.key for ev in pending)
        partials = [tuple(sorted(s)) for s in sels if s and s != full]
        if partials:
            out[step] = partials
    return out


def run_crash_plan(program: Program, plan: CrashPlan, max_steps: int = 200_000):
    return run(program, RoundRobin(), crash_plan=plan, max_steps=max_steps)


def detectability_sweep(
    program: Program,
    plans,
    *,
    use_final_state: bool = True,
    stop_at_first_failure: bool = False,
) -> SweepReport:
    """Run every crash plan against the program and check each outcome."""
    from .check import Verdict
    from .scheduler import HarnessError
    from ..pmem import MemoryFault

    report = SweepReport()
    for plan in plans:
        report.plans += 1
        try:
            result = run_crash_plan(program, plan)
            final = result.target.dump() if use_final_state else None
            verdict = check_detectable(result.history, result.target.oracle, final_state=final)
        except (AssertionError, HarnessError, MemoryFault) as exc:
            # a model violation or stuck recovery is a failing outcome
            verdict = Verdict(
                ok=False,
                property="detectable-recoverability",
                reason=f"run aborted: {exc}",
            )
        if not verdict.ok:
            verdict.context.update({"plan": plan, "program": program.name})
            report.failures.append((plan, verdict))
            if stop_at_first_failure:
                break
    return report
