"""Emulated explicit epoch persistency over a cache-line-granular address space.

The model keeps two word arrays: a volatile image (what running code reads
and writes) and a persistent image (what survives a crash).  A ``pwb``
snapshots one 64-byte line of the volatile image at issue time and appends
it to the issuing thread's pending log; ``pfence`` advances the thread's
epoch, constraining which subsets of pending write-backs a crash may keep;
``psync`` commits everything the thread has pending.  A crash picks any
epoch-prefix-consistent subset of pending events, applies the chosen
snapshots to the persistent image in global timestamp order, and resets the
volatile image from it (volatile regions are reset to zero instead).

Two modes exist.  ``model`` is the single-control-flow mode used by the
test harness; it does full logging.  ``live`` is used by the benchmark with
real threads: persistence instructions become counted no-ops and only the
statistics counters are touched.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .words import WORD_MASK, WORDS_PER_LINE


class MemoryFault(Exception):
    """Out-of-range access or a model-rule violation (e.g. pwb on a volatile line)."""


class SelectionError(ValueError):
    """An explicit crash selection violates a consistency constraint."""


@dataclass(frozen=True)
class Region:
    name: str
    base_line: int
    lines: int
    persistent: bool

    @property
    def base_word(self) -> int:
        return self.base_line * WORDS_PER_LINE

    @property
    def words(self) -> int:
        return self.lines * WORDS_PER_LINE


@dataclass(frozen=True)
class PersistEvent:
    thread: int
    seq: int            # per-thread issue counter; stable across deterministic replays
    line: int
    epoch: int
    stamp: int
    snapshot: tuple

    @property
    def key(self) -> tuple[int, int]:
        return (self.thread, self.seq)


@dataclass
class CrashOutcome:
    selection: frozenset
    image: list[int] = field(repr=False)


@dataclass(frozen=True)
class PersistStats:
    pwb: int
    pfence: int
    psync: int
    per_thread: tuple          # tuple of (pwb, pfence, psync) per thread
    per_site: dict             # label -> (pwb, pfence, psync) totals

    def total(self) -> int:
        return self.pwb + self.pfence + self.psync


class PMem:
    """Cache-line granular memory with explicit epoch persistency."""

    def __init__(
        self,
        n_threads: int,
        mode: str = "model",
        max_lines: int | None = None,
        relaxed_eviction: bool = False,
    ):
        if mode not in ("model", "live"):
            raise ValueError(f"unknown mode {mode!r}")
        self.n_threads = n_threads
        self.mode = mode
        self.max_lines = max_lines
        # Fuzzing knob only: strict mode never persists without a pwb.
        self.relaxed_eviction = relaxed_eviction
        self.regions: list[Region] = []
        self.vol: list[int] = []
        self.psv: list[int] = []
        self._line_persistent: list[bool] = []
        self.clock = 0
        self._epoch = [0] * n_threads
        self._issue = [0] * n_threads
        self.pending: list[list[PersistEvent]] = [[] for _ in range(n_threads)]
        self._pwb_ct = [0] * n_threads
        self._pf_ct = [0] * n_threads
        self._ps_ct = [0] * n_threads
        # label -> per-thread [pwb, pfence, psync]
        self._site: dict[str, list[list[int]]] = {}
        self.crashes = 0

    # ------------------------------------------------------------------
    # Region layout
    # ------------------------------------------------------------------

    def add_region(self, name: str, lines: int, persistent: bool = True) -> int:
        """Declare a region of `lines` cache lines; returns its base word address."""
        if lines <= 0:
            raise ValueError("region must have at least one line")
        base_line = len(self._line_persistent)
        if self.max_lines is not None and base_line + lines > self.max_lines:
            raise MemoryFault(
                f"region {name!r} ({lines} lines) exceeds capacity "
                f"{self.max_lines} (used {base_line})"
            )
        region = Region(name, base_line, lines, persistent)
        self.regions.append(region)
        self.vol.extend([0] * region.words)
        self.psv.extend([0] * region.words)
        self._line_persistent.extend([persistent] * lines)
        return region.base_word

    def region_layout(self) -> list[dict]:
        return [
            {
                "name": r.name,
                "base_line": r.base_line,
                "lines": r.lines,
                "class": "persistent" if r.persistent else "volatile",
                "initial_byte": 0,
            }
            for r in self.regions
        ]

    # ------------------------------------------------------------------
    # Plain accesses (stamped on write)
    # ------------------------------------------------------------------

    def peek(self, addr: int) -> int:
        return self.vol[addr]

    def poke(self, addr: int, w: int) -> None:
        self.vol[addr] = w & WORD_MASK
        self.clock += 1

    def exec_cas(self, addr: int, old: int, new: int) -> bool:
        self.clock += 1
        if self.vol[addr] == old:
            self.vol[addr] = new & WORD_MASK
            return True
        return False

    def exec_faa(self, addr: int, delta: int) -> int:
        self.clock += 1
        old = self.vol[addr]
        self.vol[addr] = (old + delta) & WORD_MASK
        return old

    def exec_copy(self, dst: int, src: int, nwords: int) -> None:
        self.clock += 1
        self.vol[dst:dst + nwords] = self.vol[src:src + nwords]

    def line_of(self, addr: int) -> int:
        return addr // WORDS_PER_LINE

    def vol_line(self, line: int) -> tuple:
        base = line * WORDS_PER_LINE
        return tuple(self.vol[base:base + WORDS_PER_LINE])

    def psv_line(self, line: int) -> tuple:
        base = line * WORDS_PER_LINE
        return tuple(self.psv[base:base + WORDS_PER_LINE])

    # ------------------------------------------------------------------
    # Persistence instructions
    # ------------------------------------------------------------------

    def _site_slot(self, label: str) -> list[list[int]]:
        slot = self._site.get(label)
        if slot is None:
            slot = [[0, 0, 0] for _ in range(self.n_threads)]
            self._site[label] = slot
        return slot

    def register_site(self, label: str) -> None:
        """Pre-create counter slots so live-mode threads never mutate the dict."""
        self._site_slot(label)

    def pwb(self, thread: int, line: int, label: str) -> None:
        if line >= len(self._line_persistent):
            raise MemoryFault(f"pwb on unmapped line {line}")
        if not self._line_persistent[line]:
            raise MemoryFault(f"pwb on volatile-region line {line} (label {label!r})")
        self._pwb_ct[thread] += 1
        self._site_slot(label)[thread][0] += 1
        if self.mode == "live":
            return
        self.clock += 1
        ev = PersistEvent(
            thread=thread,
            seq=self._issue[thread],
            line=line,
            epoch=self._epoch[thread],
            stamp=self.clock,
            snapshot=self.vol_line(line),
        )
        self._issue[thread] += 1
        self.pending[thread].append(ev)

    def pfence(self, thread: int, label: str) -> None:
        self._pf_ct[thread] += 1
        self._site_slot(label)[thread][1] += 1
        if self.mode == "live":
            return
        self.clock += 1
        self._epoch[thread] += 1

    def psync(self, thread: int, label: str) -> None:
        self._ps_ct[thread] += 1
        self._site_slot(label)[thread][2] += 1
        if self.mode == "live":
            return
        self.clock += 1
        for ev in self.pending[thread]:
            self._apply_snapshot(ev)
        self.pending[thread].clear()
        self._epoch[thread] += 1

    def _apply_snapshot(self, ev: PersistEvent) -> None:
        base = ev.line * WORDS_PER_LINE
        self.psv[base:base + WORDS_PER_LINE] = list(ev.snapshot)

    # ------------------------------------------------------------------
    # Crash semantics
    # ------------------------------------------------------------------

    def all_pending(self) -> list[PersistEvent]:
        return [ev for log in self.pending for ev in log]

    def crash(self, selector="none", seed: int | None = None) -> CrashOutcome:
        """Crash the machine: pick a legal subset of pending write-backs,
        apply it, and reset volatile state.

        selector: "all" | "none" | ("explicit", iterable of event keys)
                  | ("random", seed)
        """
        if self.mode == "live":
            raise MemoryFault("crash() is model-mode only")
        selection = self._select(selector, seed)
        self._validate_selection(selection)
        chosen = [ev for log in self.pending for ev in log if ev.key in selection]
        chosen.sort(key=lambda ev: ev.stamp)
        for ev in chosen:
            self._apply_snapshot(ev)
        if self.relaxed_eviction and seed is not None:
            # Spontaneous-eviction fuzzing: random persistent lines may have
            # been written back with their current contents.
            rng = random.Random(seed ^ 0x5EED)
            for line, persistent in enumerate(self._line_persistent):
                if persistent and rng.random() < 0.25:
                    base = line * WORDS_PER_LINE
                    self.psv[base:base + WORDS_PER_LINE] = self.vol[base:base + WORDS_PER_LINE]
        # Volatile contents are lost: persistent regions reload the persisted
        # image, volatile regions reset to their initial (zero) values.
        for region in self.regions:
            lo, hi = region.base_word, region.base_word + region.words
            if region.persistent:
                self.vol[lo:hi] = self.psv[lo:hi]
            else:
                self.vol[lo:hi] = [0] * (hi - lo)
        for log in self.pending:
            log.clear()
        self._epoch = [0] * self.n_threads
        self.crashes += 1
        return CrashOutcome(selection=frozenset(selection), image=list(self.psv))

    def _select(self, selector, seed) -> frozenset:
        if selector == "all":
            return frozenset(ev.key for ev in self.all_pending())
        if selector == "none":
            return frozenset()
        if isinstance(selector, tuple) and selector and selector[0] == "explicit":
            return frozenset(selector[1])
        if isinstance(selector, tuple) and selector and selector[0] == "fn":
            return frozenset(selector[1](self))
        if isinstance(selector, tuple) and selector and selector[0] == "random":
            seed = selector[1]
        if seed is None:
            raise ValueError(f"unknown crash selector {selector!r}")
        rng = random.Random(seed)
        keys: set = set()
        for log in self.pending:
            if not log:
                continue
            groups = self._epoch_groups(log)
            # Keep some prefix of whole epochs, then a per-line prefix-closed
            # subset of the next epoch group.
            k = rng.randint(0, len(groups))
            for g in groups[:k]:
                keys.update(ev.key for ev in g)
            if k < len(groups):
                by_line: dict[int, list[PersistEvent]] = {}
                for ev in groups[k]:
                    by_line.setdefault(ev.line, []).append(ev)
                for line_events in by_line.values():
                    take = rng.randint(0, len(line_events))
                    keys.update(ev.key for ev in line_events[:take])
        return frozenset(keys)

    @staticmethod
    def _epoch_groups(log: list[PersistEvent]) -> list[list[PersistEvent]]:
        groups: list[list[PersistEvent]] = []
        for ev in log:
            if groups and groups[-1][0].epoch == ev.epoch:
                groups[-1].append(ev)
            else:
                groups.append([ev])
        return groups

    def _validate_selection(self, selection: frozenset) -> None:
        known = {ev.key for ev in self.all_pending()}
        unknown = selection - known
        if unknown:
            raise SelectionError(f"selection names unknown events: {sorted(unknown)}")
        for t, log in enumerate(self.pending):
            chosen = [ev for ev in log if ev.key in selection]
            if not chosen:
                continue
            max_epoch = max(ev.epoch for ev in chosen)
            # epoch-prefix consistency: picking anything from epoch e forces
            # all of this thread's events from epochs < e
            for ev in log:
                if ev.epoch < max_epoch and ev.key not in selection:
                    raise SelectionError(
                        f"epoch-prefix violation: thread {t} selected an event of "
                        f"epoch {max_epoch} but dropped event {ev.key} of epoch {ev.epoch}"
                    )
            # per-line issue order within the boundary epoch
            by_line: dict[int, list[PersistEvent]] = {}
            for ev in log:
                if ev.epoch == max_epoch:
                    by_line.setdefault(ev.line, []).append(ev)
            for line, evs in by_line.items():
                seen_gap = False
                for ev in evs:
                    if ev.key not in selection:
                        seen_gap = True
                    elif seen_gap:
                        raise SelectionError(
                            f"line-order violation: thread {t} line {line} selected "
                            f"event {ev.key} without an earlier write-back to the same line"
                        )

    def legal_selections(self, limit: int | None = None) -> list[frozenset] | None:
        """Exhaustively enumerate legal crash selections over pending events.

        Returns None when the count would exceed `limit`.
        """
        per_thread: list[list[frozenset]] = []
        for log in self.pending:
            choices: set[frozenset] = {frozenset()}
            groups = self._epoch_groups(log)
            for k in range(len(groups) + 1):
                prefix = frozenset(ev.key for g in groups[:k] for ev in g)
                choices.add(prefix)
                if k < len(groups):
                    by_line: dict[int, list] = {}
                    for ev in groups[k]:
                        by_line.setdefault(ev.line, []).append(ev.key)
                    lines = list(by_line.values())
                    prefix_opts = [
                        [frozenset(keys[:i]) for i in range(len(keys) + 1)]
                        for keys in lines
                    ]
                    count = 1
                    for opts in prefix_opts:
                        count *= len(opts)
                    if limit is not None and count > limit:
                        return None
                    for combo in itertools.product(*prefix_opts):
                        sel = prefix
                        for part in combo:
                            sel |= part
                        choices.add(sel)
            per_thread.append(sorted(choices, key=sorted))
            if limit is not None:
                total = 1
                for c in per_thread:
                    total *= len(c)
                if total > limit:
                    return None
        out: set[frozenset] = set()
        for combo in itertools.product(*per_thread):
            sel = frozenset().union(*combo) if combo else frozenset()
            out.add(sel)
            if limit is not None and len(out) > limit:
                return None
        return sorted(out, key=sorted)

    # ------------------------------------------------------------------
    # Counters
    # ------------------------------------------------------------------

    def stats(self) -> PersistStats:
        per_site = {
            label: (
                sum(s[0] for s in slots),
                sum(s[1] for s in slots),
                sum(s[2] for s in slots),
            )
            for label, slots in sorted(self._site.items())
        }
        return PersistStats(
            pwb=sum(self._pwb_ct),
            pfence=sum(self._pf_ct),
            psync=sum(self._ps_ct),
            per_thread=tuple(
                (self._pwb_ct[t], self._pf_ct[t], self._ps_ct[t])
                for t in range(self.n_threads)
            ),
            per_site=per_site,
        )

    def stats_csv(self) -> str:
        lines = ["label,thread,pwb,pfence,psync"]
        for label in sorted(self._site):
            slots = self._site[label]
            for t in range(self.n_threads):
                pwb, pf, ps = slots[t]
                lines.append(f"{label},{t},{pwb},{pf},{ps}")
        return "\n".join(lines) + "\n"
