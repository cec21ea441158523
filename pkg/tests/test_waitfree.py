"""Wait-free combining core: LL/SC, flush handshake, wait-freedom bound."""

from __future__ import annotations

import pytest

from recomb.combining import WaitFreeCombining
from recomb.engine import exec_effect
from recomb.harness.check import check_linearizable
from recomb.harness.crash import enumerate_crash_points, detectability_sweep
from recomb.harness.scenarios import run_flush_handoff
from recomb.harness.scheduler import ExplicitSchedule, RandomScheduler, RoundRobin, run
from recomb.harness.targets import core_program, mul_arg
from recomb.objects import FetchIncCounter
from recomb.pmem import PMem
from recomb.words import float_to_word


def test_versioned_ref_basics():
    mem = PMem(2)
    base = mem.add_region("ref", 1)
    mem.poke(base, 10)
    # ll then sc with no interference succeeds
    h, v = exec_effect(mem, 0, ("ll", base))
    assert (h, v) == (10, 0)
    assert exec_effect(mem, 0, ("sc", base, v, 11)) is True
    assert (mem.peek(base), mem.peek(base + 1)) == (11, 1)
    # sc against a moved version fails
    assert exec_effect(mem, 1, ("sc", base, 0, 12)) is False


def test_versioned_ref_defeats_aba():
    # A reads; B installs twice, restoring the original handle; A's sc fails
    mem = PMem(2)
    base = mem.add_region("ref", 1)
    mem.poke(base, 7)
    h, v = exec_effect(mem, 0, ("ll", base))
    assert exec_effect(mem, 1, ("sc", base, v, 8)) is True
    assert exec_effect(mem, 1, ("sc", base, v + 1, 7)) is True
    assert mem.peek(base) == h  # same handle as A saw
    assert exec_effect(mem, 0, ("sc", base, v, 9)) is False


def test_solo_winner_persists_reference_once():
    prog = core_program("waitfree", "counter", [[("inc", 0)]])
    res = run(prog, RoundRobin())
    stats = res.target.mem.stats()
    name = res.target.core.name
    assert stats.per_site[f"{name}/sref"][0] == 1
    assert stats.per_site[f"{name}/sync"][2] == 1
    assert [e.value for e in res.history if e.kind == "respond"] == [0]


def test_validation_failure_forces_new_attempt():
    # an install between thread 1's reference read and its validation makes
    # the copy untrusted; thread 1 continues to its next attempt and still
    # returns a correct response
    prog = core_program("waitfree", "counter", [[("inc", 0)], [("inc", 0)]], persistence=False)
    # t0 announce+backoff, t1 announce+backoff+ll, t0 runs to completion
    # (installs), then t1's validate fails and it retries
    entries = [0, 0, 1, 1, 1] + [0] * 30 + [1] * 60
    res = run(prog, ExplicitSchedule(entries))
    assert sorted(e.value for e in res.history if e.kind == "respond") == [0, 1]
    assert res.target.dump() == 2


def test_record_hygiene_shadow_holds_over_random_schedules():
    for seed in range(60):
        prog = core_program(
            "waitfree", "counter",
            [[("inc", 0), ("inc", 0)], [("inc", 0), ("inc", 0)], [("inc", 0)]],
        )
        res = run(prog, RandomScheduler(seed))  # hygiene asserts run inside
        log = res.target.core.applied_log
        assert len(log) == len(set(log)) == 5
        assert check_linearizable(res.history, res.target.oracle).ok


def test_flush_even_implies_reference_persisted():
    for seed in range(40):
        prog = core_program("waitfree", "counter", [[("inc", 0)], [("inc", 0)]])
        res = run(prog, RandomScheduler(seed))
        core = res.target.core
        if core.flush_is_even():
            assert core.sref_persisted()


def test_wait_freedom_bound():
    # every invoke finishes within the statically computed grant budget
    for seed in range(80):
        prog = core_program(
            "waitfree", "counter",
            [[("inc", 0), ("inc", 0)], [("inc", 0), ("inc", 0)], [("inc", 0), ("inc", 0)]],
        )
        res = run(prog, RandomScheduler(seed))
        bound = res.target.core.static_step_bound()
        worst = max(res.op_grants.values())
        assert worst <= bound, f"seed {seed}: {worst} grants > bound {bound}"


def test_recover_stored_response_after_commit():
    prog = core_program("waitfree", "counter", [[("inc", 0)]])
    target = prog.make_target()
    from recomb.harness.scheduler import Program

    run(Program(lambda: target, [[("inc", 0)]], "manual"), RoundRobin())
    target.mem.crash("none")
    target.on_crash()
    gen = target.core.recover(0, FetchIncCounter.INC, 0, 1)
    try:
        eff = gen.send(None)
        while True:
            eff = gen.send(exec_effect(target.mem, 0, eff))
    except StopIteration as stop:
        assert stop.value == 0
    assert target.dump() == 1


def test_crash_sweep_exhaustive():
    prog = core_program("waitfree", "counter", [[("inc", 0), ("inc", 0)], [("inc", 0), ("inc", 0)]])
    plans = enumerate_crash_points(prog, partial_cuts=True, nested=True)
    rep = detectability_sweep(prog, plans)
    assert rep.ok, rep.failures[0][1].human()


@pytest.mark.parametrize("site", ["request", "record", "fence", "sref", "sync"])
def test_persistence_site_necessity(site):
    k2 = float_to_word(2.0)
    scripts = [[("mul", k2), ("mul", k2)], [("mul", k2), ("mul", k2)]]
    prog = core_program(
        "waitfree", "atomicfloat", scripts,
        persistence=True, disabled=frozenset([site]), initial=2.0,
    )
    plans = enumerate_crash_points(prog, partial_cuts=True)
    rep = detectability_sweep(prog, plans, stop_at_first_failure=True)
    assert not rep.ok, f"deleting site {site!r} survived the crash sweep"


def test_flush_handshake_necessity_scripted():
    # the round-robin sweep never reaches the help path, so the handshake
    # needs its own adversarial schedule: the true protocol survives it,
    # deleting the handshake does not
    assert run_flush_handoff().ok
    assert not run_flush_handoff(disabled=frozenset(["flush"])).ok
