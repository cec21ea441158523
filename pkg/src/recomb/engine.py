"""Execution engine shared by model mode and live mode.

Algorithms are written once, as generators that yield *effect tuples* for
every shared-memory access or persistence instruction and receive the
result via ``send``.  The model-mode harness grants one effect per
scheduler step, which gives deterministic interleaving and lets crashes be
injected between any two effects.  Live mode drives the same generators to
completion on real threads with a small trampoline; reads and writes hit
the shared word array directly and read-modify-writes take a lock.

Effect vocabulary (first element of the tuple):

  ("r", addr)                      -> word
  ("w", addr, word)                -> None
  ("wmany", ((a, w), ...))         -> None      single-line record write
  ("rmany", (a0, a1, ...))         -> tuple     multi-word atomic read
  ("cas", addr, old, new)          -> bool
  ("tas", addr)                    -> (won, val)  acquire parity lock if even
  ("faa", addr, delta)             -> old word
  ("ll", addr)                     -> (word0, word1)   2-word atomic read
  ("llx", addr, table)             -> (w0, w1, mem[table[w0]])
  ("pick", sel, addrs0, addrs1)    -> tuple     reads addrs[mem[sel]]
  ("sc", addr, expect_ver, new)    -> bool      versioned install at addr/addr+1
  ("copy", dst, src, n)            -> None      atomic block copy
  ("copyvl", dst, src, n, va, v)   -> bool      copy then validate mem[va]==v
  ("pwb", line, label)             -> None
  ("pf", label) / ("ps", label)    -> None
  ("wait", addr, val)              -> None      blocked until mem[addr] != val
  ("yield",) / ("bogrow",)         -> None      backoff hint / grow backoff

Dependent reads that a real machine would issue back-to-back (an index
then a word selected by it) are fused into single atomic effects where the
intermediate interleavings provably cannot change any response (the
selected words are single-writer or propagate unchanged across state
copies); persistence instructions are never fused, so every crash point
between them stays reachable.

Local computation between yields is free and invisible to the scheduler.
"""

from __future__ import annotations

import threading
import time
from types import GeneratorType

from .pmem import PMem

R = "r"
W = "w"
WMANY = "wmany"
RMANY = "rmany"
CAS = "cas"
TAS = "tas"
FAA = "faa"
LL = "ll"
LLX = "llx"
PICK = "pick"
SC = "sc"
COPY = "copy"
COPYVL = "copyvl"
PWB = "pwb"
PFENCE = "pf"
PSYNC = "ps"
WAIT = "wait"
YIELD = "yield"
BOGROW = "bogrow"

PERSIST_KINDS = (PWB, PFENCE, PSYNC)


def exec_effect(mem: PMem, tid: int, eff: tuple):
    """Execute one effect against the memory model; returns its result."""
    k = eff[0]
    if k == R:
        return mem.vol[eff[1]]
    if k == W:
        mem.poke(eff[1], eff[2])
        return None
    if k == RMANY:
        vol = mem.vol
        return tuple(vol[a] for a in eff[1])
    if k == WMANY:
        for a, w in eff[1]:
            mem.poke(a, w)
        return None
    if k == CAS:
        return mem.exec_cas(eff[1], eff[2], eff[3])
    if k == TAS:
        a = eff[1]
        v = mem.vol[a]
        if v % 2 == 0:
            mem.poke(a, v + 1)
            return (True, v)
        return (False, v)
    if k == FAA:
        return mem.exec_faa(eff[1], eff[2])
    if k == LL:
        a = eff[1]
        return (mem.vol[a], mem.vol[a + 1])
    if k == LLX:
        a = eff[1]
        vol = mem.vol
        w0 = vol[a]
        return (w0, vol[a + 1], vol[eff[2][w0]])
    if k == PICK:
        vol = mem.vol
        addrs = eff[3] if vol[eff[1]] else eff[2]
        return tuple(vol[a] for a in addrs)
    if k == SC:
        _, addr, expect_ver, new = eff
        mem.clock += 1
        if mem.vol[addr + 1] == expect_ver:
            mem.vol[addr] = new
            mem.vol[addr + 1] = expect_ver + 1
            return True
        return False
    if k == COPY:
        mem.exec_copy(eff[1], eff[2], eff[3])
        return None
    if k == COPYVL:
        _, dst, src, n, va, v = eff
        mem.exec_copy(dst, src, n)
        return mem.vol[va] == v
    if k == PWB:
        mem.pwb(tid, eff[1], eff[2])
        return None
    if k == PFENCE:
        mem.pfence(tid, eff[1])
        return None
    if k == PSYNC:
        mem.psync(tid, eff[1])
        return None
    if k == WAIT:
        # the runner only grants a wait when the condition already holds
        return None
    if k in (YIELD, BOGROW):
        return None
    raise ValueError(f"unknown effect {eff!r}")


class LiveWorld:
    """Shared-state container for live (real-thread) execution."""

    def __init__(self, mem: PMem, backoff_base_us: float = 1.0, backoff_cap_us: float = 128.0):
        self.mem = mem
        self.rmw_lock = threading.Lock()
        self.backoff_base_us = backoff_base_us
        self.backoff_cap_us = backoff_cap_us


def drive_live(world: LiveWorld, tid: int, gen: GeneratorType):
    """Run one operation generator to completion on a real thread."""
    mem = world.mem
    vol = mem.vol
    lock = world.rmw_lock
    backoff_us = world.backoff_base_us
    try:
        eff = gen.send(None)
        while True:
            k = eff[0]
            if k == R:
                res = vol[eff[1]]
            elif k == W:
                vol[eff[1]] = eff[2]
                res = None
            elif k == RMANY:
                res = tuple(vol[a] for a in eff[1])
            elif k == WMANY:
                for a, w in eff[1]:
                    vol[a] = w
                res = None
            elif k == CAS:
                with lock:
                    if vol[eff[1]] == eff[2]:
                        vol[eff[1]] = eff[3]
                        res = True
                    else:
                        res = False
            elif k == TAS:
                with lock:
                    v = vol[eff[1]]
                    if v % 2 == 0:
                        vol[eff[1]] = v + 1
                        res = (True, v)
                    else:
                        res = (False, v)
            elif k == FAA:
                with lock:
                    res = vol[eff[1]]
                    vol[eff[1]] = res + eff[2]
            elif k == LL:
                with lock:
                    a = eff[1]
                    res = (vol[a], vol[a + 1])
            elif k == LLX:
                with lock:
                    a = eff[1]
                    w0 = vol[a]
                    res = (w0, vol[a + 1], vol[eff[2][w0]])
            elif k == PICK:
                addrs = eff[3] if vol[eff[1]] else eff[2]
                res = tuple(vol[a] for a in addrs)
            elif k == SC:
                _, addr, expect_ver, new = eff
                with lock:
                    if vol[addr + 1] == expect_ver:
                        vol[addr] = new
                        vol[addr + 1] = expect_ver + 1
                        res = True
                    else:
                        res = False
            elif k == COPY:
                _, dst, src, n = eff
                vol[dst:dst + n] = vol[src:src + n]
                res = None
            elif k == COPYVL:
                _, dst, src, n, va, v = eff
                vol[dst:dst + n] = vol[src:src + n]
                res = vol[va] == v
            elif k == PWB:
                mem.pwb(tid, eff[1], eff[2])
                res = None
            elif k == PFENCE:
                mem.pfence(tid, eff[1])
                res = None
            elif k == PSYNC:
                mem.psync(tid, eff[1])
                res = None
            elif k == WAIT:
                a, v = eff[1], eff[2]
                spins = 0
                while vol[a] == v:
                    spins += 1
                    if spins & 0x3FF == 0:
                        time.sleep(0)  # bounded spin with a scheduler hint
                res = None
            elif k == YIELD:
                if backoff_us > 0:
                    time.sleep(backoff_us / 1e6)
                res = None
            elif k == BOGROW:
                backoff_us = min(backoff_us * 2, world.backoff_cap_us)
                res = None
            else:
                raise ValueError(f"unknown effect {eff!r}")
            eff = gen.send(res)
    except StopIteration as stop:
        return stop.value
